#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dinf/data.hpp"
#include "dinf/influence.hpp"
#include "dinf/metrics.hpp"
#include "dinf/model.hpp"

namespace dinf {

// ---------------------------------------------------------------------------
// Label-flip sensitivity sweeps

enum class SensitivityMode { TestTime, TrainTime };

std::string sensitivity_mode_name(SensitivityMode mode);

/// 0, 0.05, ..., 0.30
std::vector<double> default_flip_grid();

/// One (fraction, seed) cell of a sweep.
struct SensitivityCell {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  bool valid = true;
  std::string error;                      ///< why the cell is invalid
  std::map<int, double> values;           ///< per-group metric
  std::map<int, double> percent_change;   ///< 100 (m - m0) / m0
  std::vector<int> flagged_groups;        ///< percent change undefined
  std::size_t flipped = 0;
};

struct SensitivityReport {
  SensitivityMode mode = SensitivityMode::TestTime;
  MetricKind metric;
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds;
  std::map<int, double> baseline;
  std::vector<std::size_t> group_sizes;
  int majority = 0;
  int minority = 0;
  /// Grid-major: cells[f * seeds.size() + s].
  std::vector<SensitivityCell> cells;

  const SensitivityCell& cell(std::size_t fraction_index, std::size_t seed_index) const {
    return cells[fraction_index * seeds.size() + seed_index];
  }
  /// Percent changes of `group` at one grid point over the valid seeds.
  std::vector<double> percent_changes(int group, std::size_t fraction_index) const;
  double mean_abs_percent_change(int group, std::size_t fraction_index) const;
};

/// Keeps `model` fixed, flips test labels uniformly over all samples and
/// recomputes every group's metric.
SensitivityReport test_time_sensitivity(const ModelParams& model, const Dataset& test,
                                        std::span<const double> fractions,
                                        std::span<const std::uint64_t> seeds,
                                        const MetricKind& metric, unsigned threads = 1);

/// Flips training labels, retrains from scratch and measures every group's
/// metric on the clean `test` set against the clean-trained baseline.
SensitivityReport train_time_sensitivity(const Dataset& train, const Dataset& test,
                                         std::span<const double> fractions,
                                         std::span<const std::uint64_t> seeds,
                                         const MetricKind& metric, const TrainConfig& config,
                                         unsigned threads = 1);

// ---------------------------------------------------------------------------
// Mislabel ranking

enum class RankMethod { IfDisparity, IfDisparityLabel, IfNorm, Loss, CvUncertainty, LogitMargin };

/// Accepts "if-disparity", "if-disparity-label", "if-norm", "loss",
/// "cv-uncertainty", "logit-margin" (ConfigError otherwise).
RankMethod parse_rank_method(const std::string& name);
std::string rank_method_name(RankMethod method);

struct RankOptions {
  int cv_folds = 5;  ///< CV-Uncertainty only; 1 = a single half/half refit
  std::uint64_t seed = 0;
  std::vector<std::size_t> ks = {50};
  unsigned threads = 1;
};

struct RankingResult {
  std::string method;
  std::vector<std::size_t> order;   ///< train indices, highest priority first
  std::vector<double> scores;       ///< score of each train index
  std::map<std::size_t, double> precision_at_k;
  std::vector<std::size_t> ground_truth;
};

/// Indices sorted by score (descending or ascending), ties by ascending
/// index.
std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending);

/// |top-k of ranking intersected with the flipped set| / k
double precision_at_k(std::span<const std::size_t> ranking, const FlipRecord& truth, std::size_t k);

/// Ranks every training point. `truth`, when given, fills precision@k.
RankingResult rank_training_points(RankMethod method, const ModelParams& model,
                                   const SolveContext& ctx, const Dataset& train,
                                   const Dataset& audit_set, const MetricKind& metric,
                                   const TrainConfig& config, const RankOptions& options = {},
                                   const FlipRecord* truth = nullptr);

// ---------------------------------------------------------------------------
// Relabel and finetune

struct RelabelOptions {
  double top_fraction = 0.20;
  int epochs = 1;
  double learning_rate = 1e-3;
  /// Refit on the relabeled set instead of finetuning.
  bool full_retrain = false;
  /// Only points of this group are candidates for relabeling.
  std::optional<int> pool_group;
};

struct RelabelOutcome {
  GroupReport before;
  GroupReport after;
  double audited_before = 0.0;  ///< metric on the (filtered) audit set
  double audited_after = 0.0;
  double train_risk_before = 0.0;  ///< risk on the relabeled training set
  double train_risk_after = 0.0;
  std::vector<std::size_t> relabeled;  ///< sorted ascending
  std::vector<double> canonical_scores;
  ModelParams updated;
};

/// Flips the labels of the top `top_fraction * n` training points by
/// canonical label-disparity score among those with a positive score, then
/// finetunes (or refits) and reports the metric per group before and after.
RelabelOutcome relabel_and_finetune(const ModelParams& model, const Dataset& train,
                                    const Dataset& audit_set, const MetricKind& metric,
                                    const RelabelOptions& options, const TrainConfig& config);

}  // namespace dinf
