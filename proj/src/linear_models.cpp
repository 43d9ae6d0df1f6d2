#include "storyscore/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "storyscore/metrics.hpp"
#include "storyscore/util.hpp"

namespace storyscore {

using nlohmann::json;
using nlohmann::ordered_json;

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
  if (X.rows() < 1) throw std::invalid_argument("Standardizer: empty matrix");
  Standardizer s;
  long n = X.rows(), p = X.cols();
  s.mean = X.colwise().mean();
  s.std.resize(p);
  for (long j = 0; j < p; ++j) {
    double var = (X.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(n);
    double sd = std::sqrt(std::max(0.0, var));
    s.std[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size())
    throw std::invalid_argument("Standardizer: column count mismatch");
  Eigen::MatrixXd out = X.rowwise() - mean.transpose();
  out.array().rowwise() /= std.transpose().array();
  return out;
}

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

constexpr int kMaxCycles = 10000;
constexpr double kCoefTol = 1e-6;
constexpr double kObjTol = 1e-8;

void fit_lasso_core(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& yc, double alpha,
                    Eigen::VectorXd& w, FitDiagnostics* diag) {
  long n = Xs.rows(), p = Xs.cols();
  double nd = static_cast<double>(n);
  Eigen::VectorXd col_sq(p);
  for (long j = 0; j < p; ++j) col_sq[j] = Xs.col(j).squaredNorm() / nd;
  Eigen::VectorXd r = yc - Xs * w;
  double prev_obj = std::numeric_limits<double>::infinity();
  bool converged = false;
  int cycle = 0;
  while (cycle < kMaxCycles && !converged) {
    ++cycle;
    double max_delta = 0.0;
    for (long j = 0; j < p; ++j) {
      if (col_sq[j] <= 0.0) continue;
      double wj = w[j];
      double rho = Xs.col(j).dot(r) / nd + wj * col_sq[j];
      double wn = soft_threshold(rho, alpha) / col_sq[j];
      if (wn != wj) {
        r -= (wn - wj) * Xs.col(j);
        w[j] = wn;
        max_delta = std::max(max_delta, std::abs(wn - wj));
      }
    }
    double obj = r.squaredNorm() / (2.0 * nd) + alpha * w.lpNorm<1>();
    if (diag) {
      diag->objectives.push_back(obj);
      diag->iterations = cycle;
    }
    converged = max_delta < kCoefTol && (prev_obj - obj) < kObjTol;
    prev_obj = obj;
  }
  if (diag) diag->hit_iteration_cap = !converged;
}

void check_fit_inputs(const Eigen::MatrixXd& X, long ysize, double alpha,
                      const std::vector<std::string>& names, const char* who) {
  if (X.rows() < 2) throw std::invalid_argument(std::string(who) + ": needs n >= 2");
  if (ysize != X.rows())
    throw std::invalid_argument(std::string(who) + ": X rows and y length differ");
  if (!X.allFinite())
    throw std::invalid_argument(std::string(who) + ": non-finite inputs");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument(std::string(who) + ": alpha must be finite and >= 0");
  if (!names.empty() && static_cast<long>(names.size()) != X.cols())
    throw std::invalid_argument(std::string(who) + ": feature name count mismatch");
}

}  // namespace

double lasso_alpha_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Standardizer st = Standardizer::fit(X);
  Eigen::MatrixXd Xs = st.transform(X);
  Eigen::VectorXd yc = y.array() - y.mean();
  // Column-by-column dot products, matching the kernel the descent loop uses,
  // so that alpha == alpha_max lands exactly on the soft-threshold boundary.
  double best = 0.0;
  for (long j = 0; j < Xs.cols(); ++j)
    best = std::max(best, std::abs(Xs.col(j).dot(yc)));
  return best / static_cast<double>(X.rows());
}

LassoModel fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha,
                     std::vector<std::string> feature_names, Task target,
                     FitDiagnostics* diag) {
  check_fit_inputs(X, y.size(), alpha, feature_names, "fit_lasso");
  if (!y.allFinite()) throw std::invalid_argument("fit_lasso: non-finite inputs");
  LassoModel m;
  m.target = target;
  m.alpha = alpha;
  m.standardizer = Standardizer::fit(X);
  Eigen::MatrixXd Xs = m.standardizer.transform(X);
  m.intercept = y.mean();
  Eigen::VectorXd yc = y.array() - m.intercept;
  m.weights = Eigen::VectorXd::Zero(X.cols());
  fit_lasso_core(Xs, yc, alpha, m.weights, diag);
  m.feature_names = std::move(feature_names);
  return m;
}

double lasso_objective(const LassoModel& model, const Eigen::MatrixXd& X,
                       const Eigen::VectorXd& y) {
  Eigen::MatrixXd Xs = model.standardizer.transform(X);
  Eigen::VectorXd r = y.array() - model.intercept;
  r -= Xs * model.weights;
  return r.squaredNorm() / (2.0 * static_cast<double>(X.rows())) +
         model.alpha * model.weights.lpNorm<1>();
}

double logistic_smooth_loss(const Eigen::MatrixXd& X, const std::vector<int>& pm1,
                            const Eigen::VectorXd& w, double b, Eigen::VectorXd* grad_w,
                            double* grad_b) {
  long n = X.rows();
  if (static_cast<long>(pm1.size()) != n)
    throw std::invalid_argument("logistic_smooth_loss: label count mismatch");
  Eigen::VectorXd margin = X * w;
  margin.array() += b;
  double loss = 0.0;
  Eigen::VectorXd ts(n);
  for (long i = 0; i < n; ++i) {
    if (pm1[i] != 1 && pm1[i] != -1)
      throw std::invalid_argument("logistic_smooth_loss: labels must be +/-1");
    double z = pm1[i] * margin[i];
    double s;  // sigmoid(-z)
    if (z >= 0.0) {
      double e = std::exp(-z);
      loss += std::log1p(e);
      s = e / (1.0 + e);
    } else {
      loss += -z + std::log1p(std::exp(z));
      s = 1.0 / (1.0 + std::exp(z));
    }
    ts[i] = pm1[i] * s;
  }
  loss /= static_cast<double>(n);
  if (grad_w) *grad_w = -(X.transpose() * ts) / static_cast<double>(n);
  if (grad_b) *grad_b = -ts.sum() / static_cast<double>(n);
  return loss;
}

namespace {

// Proximal gradient with backtracking on mean log-loss + alpha ||w||_1; the
// intercept is unpenalized.
void fit_logistic_binary(const Eigen::MatrixXd& Xs, const std::vector<int>& pm1, double alpha,
                         Eigen::VectorXd& w, double& b, FitDiagnostics* diag) {
  long n = Xs.rows(), p = Xs.cols();
  double lipschitz = (Xs.squaredNorm() / static_cast<double>(n) + 1.0) / 4.0;
  double eta = 1.0 / lipschitz;
  Eigen::VectorXd gw(p);
  double gb = 0.0;
  double f = logistic_smooth_loss(Xs, pm1, w, b, &gw, &gb);
  double obj = f + alpha * w.lpNorm<1>();
  if (diag) diag->objectives.push_back(obj);
  bool converged = false;
  int iter = 0;
  Eigen::VectorXd wn(p);
  while (iter < kMaxCycles && !converged) {
    ++iter;
    eta = std::min(eta * 1.25, 1e8);
    double bn = b, fn = f;
    while (true) {
      for (long j = 0; j < p; ++j) wn[j] = soft_threshold(w[j] - eta * gw[j], eta * alpha);
      bn = b - eta * gb;
      fn = logistic_smooth_loss(Xs, pm1, wn, bn);
      Eigen::VectorXd dw = wn - w;
      double db = bn - b;
      double quad = f + gw.dot(dw) + gb * db + (dw.squaredNorm() + db * db) / (2.0 * eta);
      if (fn <= quad + 1e-12 || eta < 1e-16) break;
      eta *= 0.5;
    }
    w = wn;
    b = bn;
    f = logistic_smooth_loss(Xs, pm1, w, b, &gw, &gb);
    double new_obj = f + alpha * w.lpNorm<1>();
    double decrease = obj - new_obj;
    obj = new_obj;
    if (diag) {
      diag->objectives.push_back(obj);
      diag->iterations = iter;
    }
    converged = decrease < kObjTol;
  }
  if (diag) diag->hit_iteration_cap = !converged;
}

std::vector<int> to_pm1(const std::vector<int>& labels, int positive) {
  std::vector<int> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == positive ? 1 : -1;
  return out;
}

void check_classes(const std::vector<int>& labels, const std::vector<int>& classes,
                   const char* who) {
  if (classes.empty()) throw std::invalid_argument(std::string(who) + ": empty class list");
  std::set<int> class_set(classes.begin(), classes.end());
  if (class_set.size() != classes.size())
    throw std::invalid_argument(std::string(who) + ": duplicate classes");
  std::set<int> present(labels.begin(), labels.end());
  for (int l : present)
    if (!class_set.count(l))
      throw std::invalid_argument(std::string(who) + ": label " + std::to_string(l) +
                                  " not in class list");
  if (present.size() < 2)
    throw std::invalid_argument(std::string(who) + ": single-class training data");
}

constexpr double kAbsentClassIntercept = -30.0;

}  // namespace

double logistic_alpha_max(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                          const std::vector<int>& classes) {
  check_classes(labels, classes, "logistic_alpha_max");
  Standardizer st = Standardizer::fit(X);
  Eigen::MatrixXd Xs = st.transform(X);
  long n = Xs.rows();
  double best = 0.0;
  for (int c : classes) {
    std::vector<int> pm1 = to_pm1(labels, c);
    long npos = std::count(pm1.begin(), pm1.end(), 1);
    if (npos == 0 || npos == n) continue;
    double b = std::log(static_cast<double>(npos) / static_cast<double>(n - npos));
    Eigen::VectorXd gw(Xs.cols());
    logistic_smooth_loss(Xs, pm1, Eigen::VectorXd::Zero(Xs.cols()), b, &gw, nullptr);
    best = std::max(best, gw.cwiseAbs().maxCoeff());
  }
  return std::max(best, 1e-12);
}

LogisticModel fit_logistic_l1(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                              double alpha, std::vector<int> classes,
                              std::vector<std::string> feature_names, Task target,
                              FitDiagnostics* diag) {
  check_fit_inputs(X, static_cast<long>(labels.size()), alpha, feature_names,
                   "fit_logistic_l1");
  check_classes(labels, classes, "fit_logistic_l1");
  LogisticModel m;
  m.target = target;
  m.alpha = alpha;
  m.classes = std::move(classes);
  m.standardizer = Standardizer::fit(X);
  Eigen::MatrixXd Xs = m.standardizer.transform(X);
  long k = static_cast<long>(m.classes.size());
  m.weights = Eigen::MatrixXd::Zero(k, X.cols());
  m.intercepts = Eigen::VectorXd::Zero(k);
  for (long ci = 0; ci < k; ++ci) {
    std::vector<int> pm1 = to_pm1(labels, m.classes[static_cast<size_t>(ci)]);
    long npos = std::count(pm1.begin(), pm1.end(), 1);
    if (npos == 0) {
      m.intercepts[ci] = kAbsentClassIntercept;
      continue;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
    double b = 0.0;
    fit_logistic_binary(Xs, pm1, alpha, w, b, diag);
    m.weights.row(ci) = w.transpose();
    m.intercepts[ci] = b;
  }
  m.feature_names = std::move(feature_names);
  return m;
}

double clamp_to_target(Task t, double v) {
  switch (t) {
    case Task::ns: return std::clamp(v, 0.0, 16.0);
    case Task::cq: return std::clamp(v, 0.0, 10.0);
    case Task::sc: return std::clamp(v, 1.0, 6.0);
    default: return std::clamp(v, 0.0, 1.0);
  }
}

std::vector<int> target_classes(Task t) {
  if (t == Task::sc) return {1, 2, 3, 4, 5, 6};
  if (t == Task::ri) return {1, 0};
  throw std::invalid_argument("target_classes: not a classification task");
}

Eigen::VectorXd predict_values(const LassoModel& model, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Xs = model.standardizer.transform(X);
  Eigen::VectorXd out = Xs * model.weights;
  out.array() += model.intercept;
  return out;
}

Eigen::MatrixXd class_scores(const LogisticModel& model, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Xs = model.standardizer.transform(X);
  Eigen::MatrixXd scores = Xs * model.weights.transpose();
  scores.rowwise() += model.intercepts.transpose();
  return scores;
}

std::vector<int> predict_classes(const LogisticModel& model, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd scores = class_scores(model, X);
  std::vector<int> out(static_cast<size_t>(scores.rows()));
  for (long i = 0; i < scores.rows(); ++i) {
    long best = 0;
    for (long c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, best)) best = c;
    out[static_cast<size_t>(i)] = model.classes[static_cast<size_t>(best)];
  }
  return out;
}

namespace {

void check_schema(const std::vector<std::string>& model_names,
                  const std::vector<std::string>& input_names, long weights_len) {
  if (static_cast<long>(input_names.size()) != weights_len)
    throw std::invalid_argument("predict: feature count mismatch (model has " +
                                std::to_string(weights_len) + ", input has " +
                                std::to_string(input_names.size()) + ")");
  if (model_names.empty()) return;
  for (size_t i = 0; i < input_names.size(); ++i)
    if (model_names[i] != input_names[i])
      throw std::invalid_argument("predict: feature schema mismatch at position " +
                                  std::to_string(i) + " ('" + model_names[i] + "' vs '" +
                                  input_names[i] + "')");
}

}  // namespace

Eigen::VectorXd predict(const LassoModel& model, const FeatureMatrix& features) {
  check_schema(model.feature_names, features.names, model.weights.size());
  Eigen::VectorXd out = predict_values(model, features.values);
  for (long i = 0; i < out.size(); ++i) out[i] = clamp_to_target(model.target, out[i]);
  return out;
}

std::vector<int> predict(const LogisticModel& model, const FeatureMatrix& features) {
  check_schema(model.feature_names, features.names, model.weights.cols());
  return predict_classes(model, features.values);
}

Eigen::VectorXd raw_weights(const LassoModel& model) {
  return model.weights.array() / model.standardizer.std.array();
}

double raw_intercept(const LassoModel& model) {
  return model.intercept -
         (model.weights.array() * model.standardizer.mean.array() /
          model.standardizer.std.array())
             .sum();
}

namespace {

WeightReport report_from_entries(std::vector<WeightEntry> entries, size_t total,
                                 size_t top_k) {
  WeightReport r;
  r.nonzero = entries.size();
  r.zeroed = total - entries.size();
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::abs(a.weight) > std::abs(b.weight);
  });
  if (entries.size() > top_k) entries.resize(top_k);
  r.top = std::move(entries);
  return r;
}

std::string feature_label(const std::vector<std::string>& names, long j) {
  return names.empty() ? "f" + std::to_string(j) : names[static_cast<size_t>(j)];
}

}  // namespace

WeightReport inspect_weights(const LassoModel& model, size_t top_k) {
  std::vector<WeightEntry> entries;
  for (long j = 0; j < model.weights.size(); ++j)
    if (model.weights[j] != 0.0)
      entries.push_back({feature_label(model.feature_names, j), model.weights[j]});
  return report_from_entries(std::move(entries), static_cast<size_t>(model.weights.size()),
                             top_k);
}

WeightReport inspect_weights(const LogisticModel& model, size_t top_k) {
  std::vector<WeightEntry> entries;
  for (long c = 0; c < model.weights.rows(); ++c)
    for (long j = 0; j < model.weights.cols(); ++j)
      if (model.weights(c, j) != 0.0)
        entries.push_back({std::to_string(model.classes[static_cast<size_t>(c)]) + ":" +
                               feature_label(model.feature_names, j),
                           model.weights(c, j)});
  return report_from_entries(std::move(entries),
                             static_cast<size_t>(model.weights.size()), top_k);
}

std::vector<double> default_alpha_grid(double alpha_max, int size, double min_ratio) {
  if (!(alpha_max > 0.0)) throw std::invalid_argument("default_alpha_grid: alpha_max <= 0");
  if (size < 1) throw std::invalid_argument("default_alpha_grid: empty grid");
  if (!(min_ratio > 0.0 && min_ratio <= 1.0))
    throw std::invalid_argument("default_alpha_grid: min_ratio outside (0,1]");
  std::vector<double> grid;
  grid.reserve(static_cast<size_t>(size));
  if (size == 1) {
    grid.push_back(alpha_max);
    return grid;
  }
  for (int i = 0; i < size; ++i)
    grid.push_back(alpha_max *
                   std::pow(min_ratio, static_cast<double>(i) / static_cast<double>(size - 1)));
  return grid;
}

namespace {

std::vector<double> prepare_grid(std::vector<double> grid, double alpha_max) {
  if (grid.empty()) grid = default_alpha_grid(alpha_max);
  for (double a : grid)
    if (!(a >= 0.0) || !std::isfinite(a))
      throw std::invalid_argument("tune_alpha: grid values must be finite and >= 0");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace

TunedLasso tune_alpha(const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr,
                      const Eigen::MatrixXd& Xdev, const Eigen::VectorXd& ydev, Task target,
                      std::vector<std::string> feature_names, std::vector<double> grid) {
  if (target != Task::ns && target != Task::cq)
    throw std::invalid_argument("tune_alpha: lasso targets are ns and cq");
  check_fit_inputs(Xtr, ytr.size(), 0.0, feature_names, "tune_alpha");
  grid = prepare_grid(std::move(grid), lasso_alpha_max(Xtr, ytr));

  Standardizer st = Standardizer::fit(Xtr);
  Eigen::MatrixXd Xs = st.transform(Xtr);
  double intercept = ytr.mean();
  Eigen::VectorXd yc = ytr.array() - intercept;
  Eigen::MatrixXd Xds = st.transform(Xdev);
  std::vector<double> dev_truth(ydev.data(), ydev.data() + ydev.size());

  Eigen::VectorXd w = Eigen::VectorXd::Zero(Xtr.cols());
  Eigen::VectorXd best_w;
  double best_alpha = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> scores;
  for (double alpha : grid) {
    fit_lasso_core(Xs, yc, alpha, w, nullptr);
    Eigen::VectorXd raw = Xds * w;
    raw.array() += intercept;
    std::vector<double> pred(static_cast<size_t>(raw.size()));
    for (long i = 0; i < raw.size(); ++i)
      pred[static_cast<size_t>(i)] = clamp_to_target(target, raw[i]);
    double score = r_squared(dev_truth, pred);
    scores.emplace_back(alpha, score);
    if (score > best_score) {
      best_score = score;
      best_alpha = alpha;
      best_w = w;
    }
  }

  TunedLasso out;
  out.best_alpha = best_alpha;
  out.grid_scores = std::move(scores);
  out.model.target = target;
  out.model.alpha = best_alpha;
  out.model.intercept = intercept;
  out.model.weights = std::move(best_w);
  out.model.standardizer = std::move(st);
  out.model.feature_names = std::move(feature_names);
  return out;
}

TunedLogistic tune_alpha(const Eigen::MatrixXd& Xtr, const std::vector<int>& ytr,
                         const Eigen::MatrixXd& Xdev, const std::vector<int>& ydev,
                         Task target, std::vector<std::string> feature_names,
                         std::vector<double> grid) {
  if (target != Task::sc && target != Task::ri)
    throw std::invalid_argument("tune_alpha: logistic targets are sc and ri");
  std::vector<int> classes = target_classes(target);
  check_fit_inputs(Xtr, static_cast<long>(ytr.size()), 0.0, feature_names, "tune_alpha");
  check_classes(ytr, classes, "tune_alpha");
  if (ydev.empty()) throw std::invalid_argument("tune_alpha: empty dev labels");
  grid = prepare_grid(std::move(grid), logistic_alpha_max(Xtr, ytr, classes));

  Standardizer st = Standardizer::fit(Xtr);
  Eigen::MatrixXd Xs = st.transform(Xtr);
  Eigen::MatrixXd Xds = st.transform(Xdev);
  long k = static_cast<long>(classes.size());
  long n = Xtr.rows();

  std::vector<std::vector<int>> pm1(classes.size());
  std::vector<long> npos(classes.size());
  for (size_t ci = 0; ci < classes.size(); ++ci) {
    pm1[ci] = to_pm1(ytr, classes[ci]);
    npos[ci] = std::count(pm1[ci].begin(), pm1[ci].end(), 1);
  }

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(k, Xtr.cols());
  Eigen::VectorXd B = Eigen::VectorXd::Zero(k);
  for (size_t ci = 0; ci < classes.size(); ++ci)
    if (npos[ci] == 0) B[static_cast<long>(ci)] = kAbsentClassIntercept;

  Eigen::MatrixXd best_W;
  Eigen::VectorXd best_B;
  double best_alpha = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> scores;
  for (double alpha : grid) {
    for (size_t ci = 0; ci < classes.size(); ++ci) {
      if (npos[ci] == 0 || npos[ci] == n) continue;
      Eigen::VectorXd w = W.row(static_cast<long>(ci)).transpose();
      double b = B[static_cast<long>(ci)];
      fit_logistic_binary(Xs, pm1[ci], alpha, w, b, nullptr);
      W.row(static_cast<long>(ci)) = w.transpose();
      B[static_cast<long>(ci)] = b;
    }
    Eigen::MatrixXd dev_scores = Xds * W.transpose();
    dev_scores.rowwise() += B.transpose();
    std::vector<int> pred(static_cast<size_t>(Xds.rows()));
    for (long i = 0; i < Xds.rows(); ++i) {
      long best = 0;
      for (long c = 1; c < k; ++c)
        if (dev_scores(i, c) > dev_scores(i, best)) best = c;
      pred[static_cast<size_t>(i)] = classes[static_cast<size_t>(best)];
    }
    double score;
    if (target == Task::sc) {
      score = kappa_linear(ydev, pred, 6);
    } else {
      size_t hits = 0;
      for (size_t i = 0; i < ydev.size(); ++i)
        if (ydev[i] == pred[i]) ++hits;
      score = static_cast<double>(hits) / static_cast<double>(ydev.size());
    }
    scores.emplace_back(alpha, score);
    if (score > best_score) {
      best_score = score;
      best_alpha = alpha;
      best_W = W;
      best_B = B;
    }
  }

  TunedLogistic out;
  out.best_alpha = best_alpha;
  out.grid_scores = std::move(scores);
  out.model.target = target;
  out.model.alpha = best_alpha;
  out.model.classes = std::move(classes);
  out.model.weights = std::move(best_W);
  out.model.intercepts = std::move(best_B);
  out.model.standardizer = std::move(st);
  out.model.feature_names = std::move(feature_names);
  return out;
}

namespace {

ordered_json vec_to_json(const Eigen::VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (long i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<long>(i)] = a[i].get<double>();
  return v;
}

ordered_json standardizer_to_json(const Standardizer& s) {
  ordered_json j;
  j["mean"] = vec_to_json(s.mean);
  j["std"] = vec_to_json(s.std);
  return j;
}

Standardizer standardizer_from_json(const json& j) {
  Standardizer s;
  s.mean = vec_from_json(j.at("mean"));
  s.std = vec_from_json(j.at("std"));
  return s;
}

}  // namespace

ordered_json model_to_json(const AnyModel& model) {
  ordered_json j;
  if (const auto* m = std::get_if<LassoModel>(&model)) {
    j["kind"] = "lasso";
    j["target"] = to_string(m->target);
    j["alpha"] = m->alpha;
    j["intercept"] = m->intercept;
    j["weights"] = vec_to_json(m->weights);
    j["standardizer"] = standardizer_to_json(m->standardizer);
    j["feature_names"] = m->feature_names;
    j["corpus_fingerprint"] = m->corpus_fingerprint;
  } else {
    const auto& m2 = std::get<LogisticModel>(model);
    j["kind"] = "logistic";
    j["target"] = to_string(m2.target);
    j["alpha"] = m2.alpha;
    j["classes"] = m2.classes;
    ordered_json rows = ordered_json::array();
    for (long c = 0; c < m2.weights.rows(); ++c)
      rows.push_back(vec_to_json(m2.weights.row(c).transpose()));
    j["weights"] = std::move(rows);
    j["intercepts"] = vec_to_json(m2.intercepts);
    j["standardizer"] = standardizer_to_json(m2.standardizer);
    j["feature_names"] = m2.feature_names;
    j["corpus_fingerprint"] = m2.corpus_fingerprint;
  }
  return j;
}

AnyModel model_from_json(const json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "lasso") {
    LassoModel m;
    m.target = parse_task(j.at("target").get<std::string>());
    m.alpha = j.at("alpha").get<double>();
    m.intercept = j.at("intercept").get<double>();
    m.weights = vec_from_json(j.at("weights"));
    m.standardizer = standardizer_from_json(j.at("standardizer"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.corpus_fingerprint = j.value("corpus_fingerprint", "");
    return m;
  }
  if (kind == "logistic") {
    LogisticModel m;
    m.target = parse_task(j.at("target").get<std::string>());
    m.alpha = j.at("alpha").get<double>();
    m.classes = j.at("classes").get<std::vector<int>>();
    const json& rows = j.at("weights");
    long p = rows.empty() ? 0 : static_cast<long>(rows[0].size());
    m.weights.resize(static_cast<long>(rows.size()), p);
    for (size_t c = 0; c < rows.size(); ++c)
      m.weights.row(static_cast<long>(c)) = vec_from_json(rows[c]).transpose();
    m.intercepts = vec_from_json(j.at("intercepts"));
    m.standardizer = standardizer_from_json(j.at("standardizer"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.corpus_fingerprint = j.value("corpus_fingerprint", "");
    return m;
  }
  throw std::runtime_error("model_from_json: unknown kind '" + kind + "'");
}

void save_model(const AnyModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model).dump(2) + "\n");
}

AnyModel load_model(const std::filesystem::path& path) {
  return model_from_json(json::parse(read_file(path)));
}

}  // namespace storyscore
