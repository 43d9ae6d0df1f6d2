#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "storyscore/corpus.hpp"

namespace testutil {

inline std::filesystem::path unique_tmp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("storyscore_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

// Removes the directory and everything under it on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) : path(unique_tmp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline Eigen::MatrixXd randn_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd m(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) m(i, j) = dist(rng);
  }
  return m;
}

inline Eigen::VectorXd randn_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

// One record whose utterances are laid out back to back with a small gap, so
// timing features are easy to compute by hand.
inline storyscore::ChildRecord make_record(const std::string& child_id, storyscore::Split split,
                                           const std::vector<std::string>& texts,
                                           std::optional<storyscore::ScoreSet> truth,
                                           storyscore::Language language =
                                               storyscore::Language::afrikaans) {
  storyscore::ChildRecord rec;
  rec.child_id = child_id;
  rec.language = language;
  rec.split = split;
  double t = 0.0;
  for (const auto& text : texts) {
    rec.utterances.push_back({text, t, t + 2.0});
    t += 2.5;
  }
  rec.truth = truth;
  return rec;
}

}  // namespace testutil
