#pragma once

#include <vector>

#include <Eigen/Dense>

// Independent reference implementations used only by tests. Everything here
// is written from the textbook definitions, deliberately sharing no code with
// the library under test.
namespace oracles {

// Least squares with intercept via the normal equations. Returns
// (intercept, coefficients) on the raw feature scale.
std::pair<double, Eigen::VectorXd> ols_coefficients(const Eigen::MatrixXd& X,
                                                    const Eigen::VectorXd& y);

// (1/2n)||yc - Xs w||^2 + alpha ||w||_1 for given w.
double lasso_objective_at(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& yc,
                          double alpha, const Eigen::VectorXd& w);

// Plain subgradient descent with diminishing steps; returns the best iterate.
Eigen::VectorXd lasso_subgradient_descent(const Eigen::MatrixXd& Xs,
                                          const Eigen::VectorXd& yc, double alpha,
                                          int iterations);

struct LassoOracle {
  Eigen::VectorXd w;
  double objective;
};

// High-precision minimizer of the lasso objective on standardized inputs:
// subgradient descent localizes the active set, whose stationarity system is
// then solved exactly and verified against the optimality conditions. Falls
// back to enumerating every sign pattern (requires small p).
LassoOracle lasso_oracle(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& yc, double alpha);

// Mean log(1 + exp(-t * (x.w + b))) written independently of the library.
double independent_logistic_loss(const Eigen::MatrixXd& X, const std::vector<int>& pm1,
                                 const Eigen::VectorXd& w, double b);

struct LogisticOracle {
  Eigen::MatrixXd weights;     // one row per class
  Eigen::VectorXd intercepts;  // one per class
};

// One-vs-rest L1 logistic regression by subgradient descent, for argmax
// agreement checks rather than exact coefficients.
LogisticOracle logistic_subgradient_oracle(const Eigen::MatrixXd& Xs,
                                           const std::vector<int>& labels,
                                           const std::vector<int>& classes, double alpha,
                                           int iterations);

// Textbook unweighted Cohen's kappa over categories 1..k.
double unweighted_kappa(const std::vector<int>& a, const std::vector<int>& b, int k);

}  // namespace oracles
