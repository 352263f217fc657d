#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dinf/data.hpp"
#include "dinf/model.hpp"

namespace dinf {

enum class MetricType { Ece, Brier, Gfpr, Gfnr, ErrorRate };

/// A disparity metric, optionally restricted to one group of the audit set.
struct MetricKind {
  MetricType type = MetricType::Brier;
  int bins = 10;                    ///< ECE only
  std::optional<int> group_filter;  ///< audit only this group when set

  static MetricKind ece(int bins = 10) { return {MetricType::Ece, bins, std::nullopt}; }
  static MetricKind brier() { return {MetricType::Brier, 10, std::nullopt}; }
  static MetricKind gfpr() { return {MetricType::Gfpr, 10, std::nullopt}; }
  static MetricKind gfnr() { return {MetricType::Gfnr, 10, std::nullopt}; }
  static MetricKind error_rate() { return {MetricType::ErrorRate, 10, std::nullopt}; }

  MetricKind for_group(int g) const {
    MetricKind m = *this;
    m.group_filter = g;
    return m;
  }

  /// Throws DomainError when bins < 1 for ECE.
  void validate() const;
  std::string name() const;

  bool operator==(const MetricKind&) const = default;
};

/// Parses "ece", "brier", "gfpr", "gfnr", "error_rate" (ConfigError otherwise).
MetricType parse_metric_type(const std::string& name);
std::string metric_type_name(MetricType type);

/// Predicted class, with p = 0.5 classed as 0.
inline int predicted_class(double p) { return p > 0.5 ? 1 : 0; }

/// Index in [0, bins) of the interval ((m-1)/M, m/M] holding p; p = 0 goes
/// to the first bin.
int ece_bin(double p, int bins);

/// Binned expected calibration error: the bin-weighted |mean confidence -
/// observed positive rate|, bins taken over the positive-class probability.
double ece(std::span<const double> probs, std::span<const int> labels, int bins = 10);
double brier(std::span<const double> probs, std::span<const int> labels);
/// Mean score over negatives. Throws UndefinedMetricError without negatives.
double gfpr(std::span<const double> probs, std::span<const int> labels);
/// Mean of (1 - score) over positives. Throws UndefinedMetricError without
/// positives.
double gfnr(std::span<const double> probs, std::span<const int> labels);
double error_rate(std::span<const double> probs, std::span<const int> labels);

/// Dispatches on the metric type (ignores the group filter).
double metric_value(const MetricKind& metric, std::span<const double> probs,
                    std::span<const int> labels);

/// The metric on `data` after applying the group filter. Throws
/// UndefinedMetricError when the filtered set is empty or lacks the
/// conditioning class.
double evaluate_disparity(const ModelParams& model, const Dataset& data, const MetricKind& metric);

/// Per-group values of a metric together with the majority and minority
/// groups by sample count.
struct GroupReport {
  MetricKind metric;
  std::map<int, double> per_group;
  std::vector<int> undefined_groups;
  std::vector<std::size_t> group_sizes;
  int majority = 0;
  int minority = 0;

  bool defined(int g) const { return per_group.count(g) != 0; }
};

/// Evaluates the metric on every group (the group filter is ignored).
/// Groups where the metric is undefined are listed in `undefined_groups`.
/// Ties in size go to the lower group id.
GroupReport group_disparity(const ModelParams& model, const Dataset& data, const MetricKind& metric);

/// Gradient of `evaluate_disparity` with respect to the weights.
///
/// ECE is piecewise smooth; its gradient freezes bin memberships and the
/// per-bin label rate and differentiates only the mean confidence. The error
/// rate is piecewise constant and yields the zero vector (a warning is
/// printed to stderr).
Eigen::VectorXd grad_disparity(const ModelParams& model, const Dataset& data,
                               const MetricKind& metric);

}  // namespace dinf
