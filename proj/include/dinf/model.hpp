#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "dinf/data.hpp"

namespace dinf {

/// Ridge-regularized logistic regression parameters. `weights` has d+1
/// entries, the last being the bias; the bias is not penalized.
struct ModelParams {
  Eigen::VectorXd weights;
  double ridge = 1e-3;

  ModelParams() = default;
  /// Throws DomainError on a non-finite weight or a negative ridge.
  ModelParams(Eigen::VectorXd w, double lambda);

  static ModelParams zeros(std::size_t feature_dim, double lambda);

  std::size_t feature_dim() const noexcept {
    return weights.size() == 0 ? 0 : static_cast<std::size_t>(weights.size() - 1);
  }

  bool operator==(const ModelParams& other) const {
    return ridge == other.ridge && weights.size() == other.weights.size() &&
           weights == other.weights;
  }
};

struct TrainConfig {
  double tolerance = 1e-10;  ///< stop once ||grad_risk|| <= tolerance
  int max_iterations = 100;
  double ridge = 1e-3;

  /// Throws ConfigError on a non-positive tolerance, zero iterations or a
  /// negative ridge.
  void validate() const;
};

/// Numerically stable logistic function.
double sigmoid(double z);

/// w . (x, 1)
double logit(const ModelParams& params, std::span<const double> x);
double predict_proba(const ModelParams& params, std::span<const double> x);
Eigen::VectorXd predict_proba(const ModelParams& params, const Dataset& data);

/// Cross-entropy of one sample, without the ridge term.
double sample_loss(const ModelParams& params, const Sample& s);
/// (p - y) (x, 1): the cross-entropy gradient of one sample.
Eigen::VectorXd sample_grad(const ModelParams& params, const Sample& s);

/// Mean cross-entropy plus (ridge / 2) * ||w without bias||^2.
double risk(const ModelParams& params, const Dataset& data);
Eigen::VectorXd grad_risk(const ModelParams& params, const Dataset& data);
/// (1/n) sum p(1-p) x x^T + ridge * diag(1, ..., 1, 0)
Eigen::MatrixXd hessian_risk(const ModelParams& params, const Dataset& data);

/// Newton's method with backtracking from the zero vector. Throws
/// ConvergenceError when the gradient norm stays above the tolerance.
ModelParams train(const Dataset& data, const TrainConfig& config);

/// `epochs` full-batch gradient steps on `risk(., data)`.
ModelParams finetune(const ModelParams& params, const Dataset& data, int epochs = 1,
                     double learning_rate = 1e-3);

/// d/dy of the per-sample gradient (p - y)(x, 1), i.e. -(x, 1).
Eigen::VectorXd grad_label_grad_theta(const ModelParams& params, const Sample& s);

}  // namespace dinf
