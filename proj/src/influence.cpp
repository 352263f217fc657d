#include "dinf/influence.hpp"

#include <cmath>

#include <Eigen/IterativeLinearSolvers>

#include "dinf/errors.hpp"
#include "dinf/parallel.hpp"

namespace dinf {

SolveContext::SolveContext(const ModelParams& model, const Dataset& train, SolverOptions options)
    : hessian_(hessian_risk(model, train)), options_(options), train_size_(train.size()) {
  if (train.empty()) throw SizeError("influence needs a non-empty training set");
  use_cg_ = static_cast<std::size_t>(hessian_.rows()) > options_.cg_cutoff;
  if (!use_cg_) {
    llt_.compute(hessian_);
    if (llt_.info() != Eigen::Success) {
      throw NotPositiveDefiniteError("training Hessian is not positive definite");
    }
  } else {
    // No dense factorization here; CG reports indefiniteness at solve time.
    if ((hessian_.diagonal().array() <= 0.0).any()) {
      throw NotPositiveDefiniteError("training Hessian has a non-positive diagonal");
    }
  }
}

Eigen::VectorXd SolveContext::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != hessian_.rows()) throw DomainError("right-hand side has the wrong length");
  if (!use_cg_) return llt_.solve(rhs);

  Eigen::ConjugateGradient<Eigen::MatrixXd, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(options_.cg_tolerance);
  cg.setMaxIterations(10 * hessian_.rows());
  cg.compute(hessian_);
  Eigen::VectorXd x = cg.solve(rhs);
  if (cg.info() != Eigen::Success) {
    throw NotPositiveDefiniteError("conjugate gradients did not converge");
  }
  return x;
}

SolveContext build_context(const ModelParams& model, const Dataset& train, SolverOptions options) {
  return SolveContext(model, train, options);
}

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::UpParams: return "up_params_norm";
    case Estimator::UpLoss: return "up_loss";
    case Estimator::PertLabelLoss: return "pert_label_loss";
    case Estimator::UpDisparity: return "up_disparity";
    case Estimator::PertLabelDisparity: return "pert_label_disparity";
  }
  return "unknown";
}

Eigen::VectorXd influence_up_params(const SolveContext& ctx, const ModelParams& model,
                                    const Sample& z_i) {
  return -ctx.solve(sample_grad(model, z_i));
}

double influence_up_loss(const SolveContext& ctx, const ModelParams& model, const Sample& z_i,
                         const Sample& z_t) {
  return -sample_grad(model, z_t).dot(ctx.solve(sample_grad(model, z_i)));
}

double influence_pert_label_loss(const SolveContext& ctx, const ModelParams& model,
                                 const Sample& z_j, const Sample& z_t) {
  return -sample_grad(model, z_t).dot(ctx.solve(grad_label_grad_theta(model, z_j)));
}

DisparityAdjoint::DisparityAdjoint(const SolveContext& ctx, const ModelParams& model,
                                   const Dataset& audit_set, const MetricKind& metric)
    : model_(model),
      metric_gradient_(grad_disparity(model, audit_set, metric)),
      adjoint_(ctx.solve(metric_gradient_)) {}

double DisparityAdjoint::up(const Sample& z_i) const {
  return -adjoint_.dot(sample_grad(model_, z_i));
}

double DisparityAdjoint::pert_label(const Sample& z_j) const {
  return -adjoint_.dot(grad_label_grad_theta(model_, z_j));
}

double influence_up_disparity(const SolveContext& ctx, const ModelParams& model,
                              const Sample& z_i, const Dataset& audit_set,
                              const MetricKind& metric) {
  return DisparityAdjoint(ctx, model, audit_set, metric).up(z_i);
}

double influence_pert_label_disparity(const SolveContext& ctx, const ModelParams& model,
                                      const Sample& z_j, const Dataset& audit_set,
                                      const MetricKind& metric) {
  return DisparityAdjoint(ctx, model, audit_set, metric).pert_label(z_j);
}

std::vector<InfluenceScore> score_training_set(const SolveContext& ctx, const ModelParams& model,
                                               const Dataset& train, const ScoreRequest& request,
                                               unsigned threads) {
  std::vector<InfluenceScore> out(train.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].train_index = i;
    out[i].estimator = request.estimator;
  }

  switch (request.estimator) {
    case Estimator::UpParams:
      parallel_for(train.size(), threads, [&](std::size_t i) {
        out[i].value = influence_up_params(ctx, model, train[i]).norm();
      });
      break;
    case Estimator::UpLoss:
    case Estimator::PertLabelLoss: {
      if (request.test_point == nullptr) throw DomainError("loss influence needs a test point");
      // grad l(z_t)^T H^{-1} is shared by every training point.
      const Eigen::VectorXd adj = ctx.solve(sample_grad(model, *request.test_point));
      const bool up = request.estimator == Estimator::UpLoss;
      for (std::size_t i = 0; i < train.size(); ++i) {
        const Eigen::VectorXd g =
            up ? sample_grad(model, train[i]) : grad_label_grad_theta(model, train[i]);
        out[i].value = -adj.dot(g);
      }
      break;
    }
    case Estimator::UpDisparity:
    case Estimator::PertLabelDisparity: {
      if (request.audit_set == nullptr) throw DomainError("disparity influence needs an audit set");
      const DisparityAdjoint adj(ctx, model, *request.audit_set, request.metric);
      const bool up = request.estimator == Estimator::UpDisparity;
      for (std::size_t i = 0; i < train.size(); ++i) {
        out[i].value = up ? adj.up(train[i]) : adj.pert_label(train[i]);
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

RetrainOracle::RetrainOracle(Dataset train, TrainConfig config)
    : train_(std::move(train)), config_(config), baseline_(dinf::train(train_, config_)) {}

ModelParams RetrainOracle::leave_one_out_params(std::size_t i) const {
  if (train_.size() < 2) throw SizeError("leave-one-out needs at least two points");
  const double n = static_cast<double>(train_.size());
  TrainConfig cfg = config_;
  cfg.ridge = config_.ridge * n / (n - 1.0);
  ModelParams out = dinf::train(train_.without(i), cfg);
  out.ridge = config_.ridge;
  return out;
}

ModelParams RetrainOracle::label_flip_params(std::size_t j) const {
  if (j >= train_.size()) throw DomainError("index out of range");
  return dinf::train(train_.with_label(j, 1 - train_[j].label), config_);
}

double RetrainOracle::leave_one_out(std::size_t i, const Evaluator& evaluator) const {
  return evaluator(leave_one_out_params(i)) - evaluator(baseline_);
}

double RetrainOracle::label_flip(std::size_t j, const Evaluator& evaluator) const {
  return evaluator(label_flip_params(j)) - evaluator(baseline_);
}

double loo_oracle(const Dataset& train, std::size_t i, const TrainConfig& config,
                  const Evaluator& evaluator) {
  return RetrainOracle(train, config).leave_one_out(i, evaluator);
}

double label_flip_oracle(const Dataset& train, std::size_t j, const TrainConfig& config,
                         const Evaluator& evaluator) {
  return RetrainOracle(train, config).label_flip(j, evaluator);
}

}  // namespace dinf
