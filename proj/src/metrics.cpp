#include "dinf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "dinf/errors.hpp"

namespace dinf {

void MetricKind::validate() const {
  if (type == MetricType::Ece && bins < 1) throw DomainError("ECE needs at least one bin");
}

std::string MetricKind::name() const {
  std::string out = metric_type_name(type);
  if (type == MetricType::Ece) out += "(" + std::to_string(bins) + ")";
  if (group_filter) out += "[group=" + std::to_string(*group_filter) + "]";
  return out;
}

MetricType parse_metric_type(const std::string& name) {
  if (name == "ece") return MetricType::Ece;
  if (name == "brier") return MetricType::Brier;
  if (name == "gfpr") return MetricType::Gfpr;
  if (name == "gfnr") return MetricType::Gfnr;
  if (name == "error_rate" || name == "error-rate") return MetricType::ErrorRate;
  throw ConfigError("unknown metric '" + name + "'");
}

std::string metric_type_name(MetricType type) {
  switch (type) {
    case MetricType::Ece: return "ece";
    case MetricType::Brier: return "brier";
    case MetricType::Gfpr: return "gfpr";
    case MetricType::Gfnr: return "gfnr";
    case MetricType::ErrorRate: return "error_rate";
  }
  return "unknown";
}

namespace {

void check_inputs(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw DomainError("probs and labels differ in length");
  if (probs.empty()) throw DomainError("metric of an empty sample is undefined");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct BinStats {
  std::size_t count = 0;
  double prob_sum = 0.0;
  double label_sum = 0.0;
};

std::vector<BinStats> bin_stats(std::span<const double> probs, std::span<const int> labels,
                                int bins) {
  std::vector<BinStats> stats(static_cast<std::size_t>(bins));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto& b = stats[static_cast<std::size_t>(ece_bin(probs[i], bins))];
    ++b.count;
    b.prob_sum += probs[i];
    b.label_sum += labels[i];
  }
  return stats;
}

}  // namespace

int ece_bin(double p, int bins) {
  if (bins < 1) throw DomainError("ECE needs at least one bin");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability outside [0, 1]");
  int idx = static_cast<int>(std::ceil(p * bins)) - 1;
  if (idx > 0 && p <= static_cast<double>(idx) / bins) --idx;
  return std::clamp(idx, 0, bins - 1);
}

double ece(std::span<const double> probs, std::span<const int> labels, int bins) {
  check_inputs(probs, labels);
  const auto stats = bin_stats(probs, labels, bins);
  const double n = static_cast<double>(probs.size());
  double total = 0.0;
  for (const auto& b : stats) {
    if (b.count == 0) continue;
    const double c = static_cast<double>(b.count);
    total += (c / n) * std::abs(b.prob_sum / c - b.label_sum / c);
  }
  return total;
}

double brier(std::span<const double> probs, std::span<const int> labels) {
  check_inputs(probs, labels);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double r = probs[i] - labels[i];
    total += r * r;
  }
  return total / static_cast<double>(probs.size());
}

double gfpr(std::span<const double> probs, std::span<const int> labels) {
  check_inputs(probs, labels);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] == 0) {
      total += probs[i];
      ++count;
    }
  }
  if (count == 0) throw UndefinedMetricError("gfpr is undefined without negatives");
  return total / static_cast<double>(count);
}

double gfnr(std::span<const double> probs, std::span<const int> labels) {
  check_inputs(probs, labels);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] == 1) {
      total += 1.0 - probs[i];
      ++count;
    }
  }
  if (count == 0) throw UndefinedMetricError("gfnr is undefined without positives");
  return total / static_cast<double>(count);
}

double error_rate(std::span<const double> probs, std::span<const int> labels) {
  check_inputs(probs, labels);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (predicted_class(probs[i]) != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(probs.size());
}

double metric_value(const MetricKind& metric, std::span<const double> probs,
                    std::span<const int> labels) {
  metric.validate();
  switch (metric.type) {
    case MetricType::Ece: return ece(probs, labels, metric.bins);
    case MetricType::Brier: return brier(probs, labels);
    case MetricType::Gfpr: return gfpr(probs, labels);
    case MetricType::Gfnr: return gfnr(probs, labels);
    case MetricType::ErrorRate: return error_rate(probs, labels);
  }
  throw DomainError("unknown metric");
}

namespace {

Dataset audited(const Dataset& data, const MetricKind& metric) {
  Dataset s = metric.group_filter ? data.filter_group(*metric.group_filter) : data;
  if (s.empty()) throw UndefinedMetricError("audit set for " + metric.name() + " is empty");
  return s;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

double evaluate_disparity(const ModelParams& model, const Dataset& data, const MetricKind& metric) {
  const Dataset s = audited(data, metric);
  const auto probs = to_std(predict_proba(model, s));
  const auto labels = s.labels();
  try {
    return metric_value(metric, probs, labels);
  } catch (const DomainError& e) {
    throw UndefinedMetricError(e.what());
  }
}

GroupReport group_disparity(const ModelParams& model, const Dataset& data, const MetricKind& metric) {
  metric.validate();
  GroupReport report;
  report.metric = metric;
  report.group_sizes = data.group_counts();

  bool seen = false;
  for (int g = 0; g < data.num_groups(); ++g) {
    const std::size_t count = report.group_sizes[static_cast<std::size_t>(g)];
    if (count > 0) {
      if (!seen || count > report.group_sizes[static_cast<std::size_t>(report.majority)]) {
        report.majority = g;
      }
      if (!seen || count < report.group_sizes[static_cast<std::size_t>(report.minority)]) {
        report.minority = g;
      }
      seen = true;
    }
    const Dataset sub = data.filter_group(g);
    if (sub.empty()) {
      report.undefined_groups.push_back(g);
      continue;
    }
    const auto probs = to_std(predict_proba(model, sub));
    const auto labels = sub.labels();
    try {
      report.per_group[g] = metric_value(metric, probs, labels);
    } catch (const UndefinedMetricError&) {
      report.undefined_groups.push_back(g);
    }
  }
  return report;
}

Eigen::VectorXd grad_disparity(const ModelParams& model, const Dataset& data,
                               const MetricKind& metric) {
  metric.validate();
  const Dataset s = audited(data, metric);
  const Eigen::MatrixXd x = s.design_matrix();
  const Eigen::VectorXd p = predict_proba(model, s);
  const auto n = static_cast<double>(s.size());

  // Per-sample weights c_i such that the gradient is sum_i c_i p_i(1-p_i) x_i.
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p.size());
  switch (metric.type) {
    case MetricType::Brier:
      for (Eigen::Index i = 0; i < p.size(); ++i) c(i) = 2.0 * (p(i) - s[static_cast<std::size_t>(i)].label) / n;
      break;
    case MetricType::Gfpr:
    case MetricType::Gfnr: {
      const int cls = metric.type == MetricType::Gfpr ? 0 : 1;
      const double dir = metric.type == MetricType::Gfpr ? 1.0 : -1.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < s.size(); ++i) count += s[i].label == cls ? 1 : 0;
      if (count == 0) {
        throw UndefinedMetricError(metric.name() + " is undefined on the audit set");
      }
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].label == cls) c(static_cast<Eigen::Index>(i)) = dir / static_cast<double>(count);
      }
      break;
    }
    case MetricType::Ece: {
      std::vector<double> probs = to_std(p);
      const auto labels = s.labels();
      const auto stats = bin_stats(probs, labels, metric.bins);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto& b = stats[static_cast<std::size_t>(ece_bin(probs[i], metric.bins))];
        const double cnt = static_cast<double>(b.count);
        // (|B|/n) * sign(conf - rate) * (1/|B|) = sign / n
        c(static_cast<Eigen::Index>(i)) = sign(b.prob_sum / cnt - b.label_sum / cnt) / n;
      }
      break;
    }
    case MetricType::ErrorRate:
      std::cerr << "warning: error_rate is piecewise constant; its gradient is zero almost "
                   "everywhere\n";
      return Eigen::VectorXd::Zero(x.cols());
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) c(i) *= p(i) * (1.0 - p(i));
  return x.transpose() * c;
}

}  // namespace dinf
