#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dinf/data.hpp"
#include "dinf/metrics.hpp"
#include "dinf/model.hpp"

namespace dinf {

struct SolverOptions {
  /// Parameter dimensions above this use conjugate gradients instead of a
  /// dense Cholesky factorization.
  std::size_t cg_cutoff = 500;
  double cg_tolerance = 1e-10;
};

/// The Hessian of the training risk at a fitted model together with its
/// factorization. Immutable once built; safe to share across threads.
class SolveContext {
 public:
  /// Throws NotPositiveDefiniteError when the Hessian cannot be factored.
  SolveContext(const ModelParams& model, const Dataset& train, SolverOptions options = {});

  /// H^{-1} rhs
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

  const Eigen::MatrixXd& hessian() const noexcept { return hessian_; }
  const Eigen::LLT<Eigen::MatrixXd>& factorization() const noexcept { return llt_; }
  bool uses_cg() const noexcept { return use_cg_; }
  std::size_t train_size() const noexcept { return train_size_; }

 private:
  Eigen::MatrixXd hessian_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool use_cg_ = false;
  SolverOptions options_;
  std::size_t train_size_ = 0;
};

SolveContext build_context(const ModelParams& model, const Dataset& train,
                           SolverOptions options = {});

enum class Estimator { UpParams, UpLoss, PertLabelLoss, UpDisparity, PertLabelDisparity };

std::string estimator_name(Estimator e);

struct InfluenceScore {
  std::size_t train_index = 0;
  double value = 0.0;
  Estimator estimator = Estimator::UpDisparity;
};

/// -H^{-1} grad l(z_i): derivative of the fitted weights when z_i is
/// upweighted by eps. Removing z_i corresponds to eps = -1/n.
Eigen::VectorXd influence_up_params(const SolveContext& ctx, const ModelParams& model,
                                    const Sample& z_i);

/// -grad l(z_t)^T H^{-1} grad l(z_i)
double influence_up_loss(const SolveContext& ctx, const ModelParams& model, const Sample& z_i,
                         const Sample& z_t);

/// -grad l(z_t)^T H^{-1} d/dy grad l(z_j): derivative of the test loss per
/// unit of label mass added to z_j.
double influence_pert_label_loss(const SolveContext& ctx, const ModelParams& model,
                                 const Sample& z_j, const Sample& z_t);

/// Flip direction of a binary label: +1 for 0 -> 1, -1 for 1 -> 0.
inline double flip_direction(int label) { return 1.0 - 2.0 * label; }

/// Ranking score of a label-perturbation influence value. Flipping z_j moves
/// the audited quantity by about raw * flip_direction / n, so the score is
/// positive exactly when the flip is predicted to lower the metric.
inline double canonical_score(double raw_value, int label) {
  return -raw_value * flip_direction(label);
}

/// The adjoint s = H^{-1} grad GD(S_t) of one (audit set, metric) pair.
/// Built with a single solve and reused for every training point.
class DisparityAdjoint {
 public:
  /// Throws UndefinedMetricError if the metric is undefined on `audit_set`.
  DisparityAdjoint(const SolveContext& ctx, const ModelParams& model, const Dataset& audit_set,
                   const MetricKind& metric);

  /// -s^T grad l(z_i)
  double up(const Sample& z_i) const;
  /// -s^T d/dy grad l(z_j) = s^T (x_j, 1)
  double pert_label(const Sample& z_j) const;
  double canonical(const Sample& z_j) const { return canonical_score(pert_label(z_j), z_j.label); }

  const Eigen::VectorXd& adjoint() const noexcept { return adjoint_; }
  const Eigen::VectorXd& metric_gradient() const noexcept { return metric_gradient_; }

 private:
  ModelParams model_;
  Eigen::VectorXd metric_gradient_;
  Eigen::VectorXd adjoint_;
};

/// -grad GD(S_t)^T H^{-1} grad l(z_i)
double influence_up_disparity(const SolveContext& ctx, const ModelParams& model,
                              const Sample& z_i, const Dataset& audit_set,
                              const MetricKind& metric);

/// -grad GD(S_t)^T H^{-1} d/dy grad l(z_j) (raw value, not the canonical
/// score).
double influence_pert_label_disparity(const SolveContext& ctx, const ModelParams& model,
                                      const Sample& z_j, const Dataset& audit_set,
                                      const MetricKind& metric);

/// Scores every training point with one estimator. UpParams reports the
/// Euclidean norm of the parameter influence. UpLoss and PertLabelLoss need
/// a test point; the disparity estimators need an audit set and metric.
struct ScoreRequest {
  Estimator estimator = Estimator::PertLabelDisparity;
  const Sample* test_point = nullptr;
  const Dataset* audit_set = nullptr;
  MetricKind metric = MetricKind::brier();
};

std::vector<InfluenceScore> score_training_set(const SolveContext& ctx, const ModelParams& model,
                                               const Dataset& train, const ScoreRequest& request,
                                               unsigned threads = 1);

/// Quantity measured by the retraining oracles.
using Evaluator = std::function<double(const ModelParams&)>;

/// Brute-force counterfactual retraining against a fixed training set.
///
/// Leave-one-out minimizes (1/n) sum_{j != i} l(z_j) + (ridge/2)||w||^2,
/// i.e. the original objective upweighted by eps = -1/n; on the n-1 kept
/// points this is a refit with ridge * n / (n - 1).
class RetrainOracle {
 public:
  RetrainOracle(Dataset train, TrainConfig config);

  const ModelParams& baseline() const noexcept { return baseline_; }
  const Dataset& train() const noexcept { return train_; }

  ModelParams leave_one_out_params(std::size_t i) const;
  ModelParams label_flip_params(std::size_t j) const;

  /// evaluator(theta_{-i}) - evaluator(theta)
  double leave_one_out(std::size_t i, const Evaluator& evaluator) const;
  /// evaluator(theta with label j flipped) - evaluator(theta)
  double label_flip(std::size_t j, const Evaluator& evaluator) const;

 private:
  Dataset train_;
  TrainConfig config_;
  ModelParams baseline_;
};

double loo_oracle(const Dataset& train, std::size_t i, const TrainConfig& config,
                  const Evaluator& evaluator);
double label_flip_oracle(const Dataset& train, std::size_t j, const TrainConfig& config,
                         const Evaluator& evaluator);

}  // namespace dinf
