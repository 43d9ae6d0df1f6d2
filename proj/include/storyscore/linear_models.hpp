#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "storyscore/corpus.hpp"
#include "storyscore/features.hpp"

namespace storyscore {

// Per-feature z-scoring on train statistics. Zero-variance features get
// std 1, which maps them to constant zero after centering.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  static Standardizer fit(const Eigen::MatrixXd& X);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
};

struct FitDiagnostics {
  std::vector<double> objectives;  // one entry per full cycle or iteration
  int iterations = 0;
  bool hit_iteration_cap = false;
};

// Weights live in standardized feature space; predictions standardize the
// input through the stored Standardizer first.
struct LassoModel {
  Task target = Task::ns;
  double alpha = 0.0;
  double intercept = 0.0;
  Eigen::VectorXd weights;
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  std::string corpus_fingerprint;
};

struct LogisticModel {
  Task target = Task::ri;
  double alpha = 0.0;
  std::vector<int> classes;   // argmax ties resolve to the earliest entry
  Eigen::MatrixXd weights;    // one row per class
  Eigen::VectorXd intercepts;
  Standardizer standardizer;
  std::vector<std::string> feature_names;
  std::string corpus_fingerprint;
};

// Smallest alpha at which the lasso solution is entirely zero:
// max_j |X_j^T (y - ybar)| / n on standardized X.
double lasso_alpha_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Cyclic coordinate descent with soft-thresholding on
// (1/2n) sum (y_i - w.x_i - b)^2 + alpha ||w||_1. Converged when the max
// absolute coefficient change over a full cycle drops below 1e-6, capped at
// 10000 cycles.
LassoModel fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha,
                     std::vector<std::string> feature_names = {}, Task target = Task::ns,
                     FitDiagnostics* diag = nullptr);

// Penalized objective of the model on (X, y), evaluated in the model's
// standardized space.
double lasso_objective(const LassoModel& model, const Eigen::MatrixXd& X,
                       const Eigen::VectorXd& y);

// Mean log-loss over labels in {-1,+1} and its gradient; the smooth part of
// the penalized logistic objective.
double logistic_smooth_loss(const Eigen::MatrixXd& X, const std::vector<int>& pm1,
                            const Eigen::VectorXd& w, double b,
                            Eigen::VectorXd* grad_w = nullptr, double* grad_b = nullptr);

double logistic_alpha_max(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                          const std::vector<int>& classes);

// One-vs-rest binary L1 logistic models fitted by proximal gradient with
// backtracking line search; per-model convergence when the objective decrease
// per iteration drops below 1e-8, capped at 10000 iterations. Classes absent
// from the labels get a constant-negative model.
LogisticModel fit_logistic_l1(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                              double alpha, std::vector<int> classes,
                              std::vector<std::string> feature_names = {},
                              Task target = Task::ri, FitDiagnostics* diag = nullptr);

double clamp_to_target(Task t, double v);
std::vector<int> target_classes(Task t);  // sc -> {1..6}; ri -> {1,0}

// Raw predictions without schema checking; rows of X are unstandardized.
Eigen::VectorXd predict_values(const LassoModel& model, const Eigen::MatrixXd& X);
Eigen::MatrixXd class_scores(const LogisticModel& model, const Eigen::MatrixXd& X);
std::vector<int> predict_classes(const LogisticModel& model, const Eigen::MatrixXd& X);

// Schema-checked predictions; regression outputs are clamped to the target
// range.
Eigen::VectorXd predict(const LassoModel& model, const FeatureMatrix& features);
std::vector<int> predict(const LogisticModel& model, const FeatureMatrix& features);

// Model weights mapped back to raw feature units.
Eigen::VectorXd raw_weights(const LassoModel& model);
double raw_intercept(const LassoModel& model);

struct WeightEntry {
  std::string name;
  double weight = 0.0;
};
struct WeightReport {
  std::vector<WeightEntry> top;  // nonzero weights by |weight| descending
  size_t nonzero = 0;
  size_t zeroed = 0;
};
WeightReport inspect_weights(const LassoModel& model, size_t top_k);
WeightReport inspect_weights(const LogisticModel& model, size_t top_k);

std::vector<double> default_alpha_grid(double alpha_max, int size = 50,
                                       double min_ratio = 1e-4);

struct TunedLasso {
  LassoModel model;
  double best_alpha = 0.0;
  std::vector<std::pair<double, double>> grid_scores;  // (alpha, dev score)
};
struct TunedLogistic {
  LogisticModel model;
  double best_alpha = 0.0;
  std::vector<std::pair<double, double>> grid_scores;
};

// Fits on train for each alpha in the grid and keeps the alpha with the best
// dev score (R^2 for ns/cq, linear-weighted kappa for sc, accuracy for ri);
// ties go to the larger alpha. Empty grid means the 50-point default grid
// from alpha_max down to alpha_max * 1e-4.
TunedLasso tune_alpha(const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr,
                      const Eigen::MatrixXd& Xdev, const Eigen::VectorXd& ydev, Task target,
                      std::vector<std::string> feature_names = {},
                      std::vector<double> grid = {});
TunedLogistic tune_alpha(const Eigen::MatrixXd& Xtr, const std::vector<int>& ytr,
                         const Eigen::MatrixXd& Xdev, const std::vector<int>& ydev,
                         Task target, std::vector<std::string> feature_names = {},
                         std::vector<double> grid = {});

using AnyModel = std::variant<LassoModel, LogisticModel>;
nlohmann::ordered_json model_to_json(const AnyModel& model);
AnyModel model_from_json(const nlohmann::json& j);
void save_model(const AnyModel& model, const std::filesystem::path& path);
AnyModel load_model(const std::filesystem::path& path);

}  // namespace storyscore
