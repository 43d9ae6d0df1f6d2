#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyscore/corpus.hpp"

namespace storyscore {

// 1 - sum((t-p)^2) / sum((t-tbar)^2)
double r_squared(const std::vector<double>& truth, const std::vector<double>& pred);
double mean_absolute_error(const std::vector<double>& truth, const std::vector<double>& pred);

// Linear-weighted Cohen's kappa over categories 1..k with disagreement
// weights |i-j|/(k-1): 1 - sum(w*O)/sum(w*E), observed joint proportions O
// against the outer product of marginals E.
double kappa_linear(const std::vector<int>& truth, const std::vector<int>& pred, int k);

struct BinaryReport {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  // confusion[truth][pred], index 0 = negative, 1 = positive
  std::array<std::array<size_t, 2>, 2> confusion{};
};
BinaryReport binary_report(const std::vector<bool>& truth, const std::vector<bool>& pred);

std::vector<bool> derive_ri(const std::vector<int>& sc_predictions);

struct EvalReport {
  Task task = Task::ns;
  size_t n = 0;
  std::optional<double> r2;
  std::optional<double> mae;
  std::optional<double> kappa;
  std::optional<double> accuracy;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> f1;
  std::vector<std::vector<size_t>> confusion;  // empty for regression tasks

  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport regression_report(Task task, const std::vector<double>& truth,
                             const std::vector<double>& pred);
EvalReport ordinal_report(const std::vector<int>& truth, const std::vector<int>& pred);
EvalReport flag_report(const std::vector<bool>& truth, const std::vector<bool>& pred);

struct ScoreComparison {
  EvalReport ns, cq, sc, ri;
  nlohmann::ordered_json to_json() const;
};

// Aligns the two lists by child_id (order-insensitive) and evaluates all four
// tasks with a as truth and b as prediction.
ScoreComparison compare_scoresets(const std::vector<std::pair<std::string, ScoreSet>>& a,
                                  const std::vector<std::pair<std::string, ScoreSet>>& b);

// Text rendering of one report, one "name value" pair per line.
std::string render_report(const EvalReport& report);

}  // namespace storyscore
