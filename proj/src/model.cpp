#include "dinf/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dinf/errors.hpp"

namespace dinf {

ModelParams::ModelParams(Eigen::VectorXd w, double lambda) : weights(std::move(w)), ridge(lambda) {
  if (!weights.allFinite()) throw DomainError("model weights must be finite");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw DomainError("ridge must be finite and >= 0");
}

ModelParams ModelParams::zeros(std::size_t feature_dim, double lambda) {
  return ModelParams(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(feature_dim) + 1), lambda);
}

void TrainConfig::validate() const {
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ConfigError("ridge must be finite and >= 0");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void check_dim(const ModelParams& params, std::size_t d) {
  if (params.feature_dim() != d) {
    throw DomainError("feature dimension " + std::to_string(d) + " does not match model dimension " +
                      std::to_string(params.feature_dim()));
  }
}

Eigen::VectorXd penalty_gradient(const ModelParams& params) {
  Eigen::VectorXd g = params.ridge * params.weights;
  g(g.size() - 1) = 0.0;
  return g;
}

// Dense view of a dataset for the optimizer's inner loop.
struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  double ridge;

  Problem(const Dataset& data, double lambda)
      : x(data.design_matrix()), y(data.label_vector()), ridge(lambda) {}

  double n() const { return static_cast<double>(y.size()); }

  double value(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd z = x * w;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z(i)) - y(i) * z(i);
    const auto head = w.head(w.size() - 1);
    return total / n() + 0.5 * ridge * head.squaredNorm();
  }

  Eigen::VectorXd probs(const Eigen::VectorXd& w) const {
    Eigen::VectorXd p = x * w;
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = sigmoid(p(i));
    return p;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w, const Eigen::VectorXd& p) const {
    Eigen::VectorXd g = x.transpose() * (p - y) / n();
    g.head(g.size() - 1) += ridge * w.head(w.size() - 1);
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& p) const {
    Eigen::VectorXd s(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) s(i) = p(i) * (1.0 - p(i));
    Eigen::MatrixXd h = x.transpose() * s.asDiagonal() * x / n();
    for (Eigen::Index j = 0; j + 1 < h.rows(); ++j) h(j, j) += ridge;
    return h;
  }
};

}  // namespace

double logit(const ModelParams& params, std::span<const double> x) {
  check_dim(params, x.size());
  const auto d = static_cast<Eigen::Index>(x.size());
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
  return params.weights.head(d).dot(xv) + params.weights(d);
}

double predict_proba(const ModelParams& params, std::span<const double> x) {
  return sigmoid(logit(params, x));
}

Eigen::VectorXd predict_proba(const ModelParams& params, const Dataset& data) {
  check_dim(params, data.feature_dim());
  Eigen::VectorXd p(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    p(static_cast<Eigen::Index>(i)) = predict_proba(params, data[i].features);
  }
  return p;
}

double sample_loss(const ModelParams& params, const Sample& s) {
  const double z = logit(params, s.features);
  return softplus(z) - s.label * z;
}

Eigen::VectorXd sample_grad(const ModelParams& params, const Sample& s) {
  const double p = predict_proba(params, s.features);
  return (p - s.label) * augmented(s);
}

double risk(const ModelParams& params, const Dataset& data) {
  check_dim(params, data.feature_dim());
  if (data.empty()) return 0.5 * params.ridge * params.weights.head(params.weights.size() - 1).squaredNorm();
  return Problem(data, params.ridge).value(params.weights);
}

Eigen::VectorXd grad_risk(const ModelParams& params, const Dataset& data) {
  check_dim(params, data.feature_dim());
  if (data.empty()) return penalty_gradient(params);
  Problem prob(data, params.ridge);
  return prob.gradient(params.weights, prob.probs(params.weights));
}

Eigen::MatrixXd hessian_risk(const ModelParams& params, const Dataset& data) {
  check_dim(params, data.feature_dim());
  const auto dim = params.weights.size();
  if (data.empty()) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index j = 0; j + 1 < dim; ++j) h(j, j) = params.ridge;
    return h;
  }
  Problem prob(data, params.ridge);
  return prob.hessian(prob.probs(params.weights));
}

ModelParams train(const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw SizeError("cannot train on an empty dataset");

  const Problem prob(data, config.ridge);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.feature_dim()) + 1);
  double f = prob.value(w);

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd p = prob.probs(w);
    const Eigen::VectorXd g = prob.gradient(w, p);
    const double gnorm = g.norm();
    if (gnorm <= config.tolerance) return ModelParams(w, config.ridge);
    if (iter >= config.max_iterations || !std::isfinite(gnorm)) {
      throw ConvergenceError("Newton training did not converge in " +
                                 std::to_string(config.max_iterations) +
                                 " iterations (gradient norm " + std::to_string(gnorm) + ")",
                             gnorm);
    }

    Eigen::LLT<Eigen::MatrixXd> llt(prob.hessian(p));
    if (llt.info() != Eigen::Success) {
      throw ConvergenceError("Hessian is not positive definite during training", gnorm);
    }
    const Eigen::VectorXd step = -llt.solve(g);
    const double slope = g.dot(step);

    // Armijo backtracking; the slack term absorbs rounding once the
    // objective is flat to machine precision.
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
    double t = 1.0;
    Eigen::VectorXd candidate = w + step;
    double fc = prob.value(candidate);
    while (!(fc <= f + 1e-4 * t * slope + slack)) {
      t *= 0.5;
      if (t < 1e-12) {
        throw ConvergenceError("line search failed (gradient norm " + std::to_string(gnorm) + ")",
                               gnorm);
      }
      candidate = w + t * step;
      fc = prob.value(candidate);
    }
    w = std::move(candidate);
    f = fc;
  }
}

ModelParams finetune(const ModelParams& params, const Dataset& data, int epochs,
                     double learning_rate) {
  if (epochs < 0) throw DomainError("epochs must be non-negative");
  ModelParams out = params;
  for (int e = 0; e < epochs; ++e) {
    out.weights -= learning_rate * grad_risk(out, data);
  }
  return out;
}

Eigen::VectorXd grad_label_grad_theta(const ModelParams& params, const Sample& s) {
  check_dim(params, s.features.size());
  return -augmented(s);
}

}  // namespace dinf
