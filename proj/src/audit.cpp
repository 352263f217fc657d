#include "dinf/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dinf/errors.hpp"
#include "dinf/parallel.hpp"

namespace dinf {

std::string sensitivity_mode_name(SensitivityMode mode) {
  return mode == SensitivityMode::TestTime ? "test_time" : "train_time";
}

std::vector<double> default_flip_grid() { return {0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30}; }

std::vector<double> SensitivityReport::percent_changes(int group, std::size_t fraction_index) const {
  std::vector<double> out;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& c = cell(fraction_index, s);
    if (!c.valid) continue;
    auto it = c.percent_change.find(group);
    if (it != c.percent_change.end()) out.push_back(it->second);
  }
  return out;
}

double SensitivityReport::mean_abs_percent_change(int group, std::size_t fraction_index) const {
  const auto v = percent_changes(group, fraction_index);
  if (v.empty()) return std::nan("");
  double total = 0.0;
  for (double x : v) total += std::abs(x);
  return total / static_cast<double>(v.size());
}

namespace {

void check_grid(std::span<const double> fractions, std::span<const std::uint64_t> seeds) {
  if (fractions.empty()) throw DomainError("flip grid is empty");
  if (seeds.empty()) throw DomainError("at least one seed is required");
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("flip fractions must lie in [0, 1]");
  }
}

SensitivityReport empty_report(SensitivityMode mode, const MetricKind& metric,
                               std::span<const double> fractions,
                               std::span<const std::uint64_t> seeds, const GroupReport& base) {
  SensitivityReport r;
  r.mode = mode;
  r.metric = metric;
  r.grid.assign(fractions.begin(), fractions.end());
  r.seeds.assign(seeds.begin(), seeds.end());
  r.baseline = base.per_group;
  r.group_sizes = base.group_sizes;
  r.majority = base.majority;
  r.minority = base.minority;
  r.cells.resize(fractions.size() * seeds.size());
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      auto& c = r.cells[f * seeds.size() + s];
      c.fraction = fractions[f];
      c.seed = seeds[s];
    }
  }
  return r;
}

void fill_cell(SensitivityCell& cell, const GroupReport& current, const SensitivityReport& r,
               int num_groups) {
  cell.values = current.per_group;
  for (int g = 0; g < num_groups; ++g) {
    auto base = r.baseline.find(g);
    auto now = current.per_group.find(g);
    if (base == r.baseline.end() || now == current.per_group.end() || base->second == 0.0) {
      cell.flagged_groups.push_back(g);
      continue;
    }
    if (cell.fraction == 0.0 && now->second == base->second) {
      cell.percent_change[g] = 0.0;
    } else {
      cell.percent_change[g] = 100.0 * (now->second - base->second) / base->second;
    }
  }
}

}  // namespace

SensitivityReport test_time_sensitivity(const ModelParams& model, const Dataset& test,
                                        std::span<const double> fractions,
                                        std::span<const std::uint64_t> seeds,
                                        const MetricKind& metric, unsigned threads) {
  check_grid(fractions, seeds);
  const GroupReport base = group_disparity(model, test, metric);
  SensitivityReport r = empty_report(SensitivityMode::TestTime, metric, fractions, seeds, base);

  parallel_for(r.cells.size(), threads, [&](std::size_t k) {
    auto& cell = r.cells[k];
    auto [flipped, record] = flip_labels(test, cell.fraction, cell.seed);
    cell.flipped = record.flipped_indices.size();
    fill_cell(cell, group_disparity(model, flipped, metric), r, test.num_groups());
  });
  return r;
}

SensitivityReport train_time_sensitivity(const Dataset& train, const Dataset& test,
                                         std::span<const double> fractions,
                                         std::span<const std::uint64_t> seeds,
                                         const MetricKind& metric, const TrainConfig& config,
                                         unsigned threads) {
  check_grid(fractions, seeds);
  const ModelParams clean = dinf::train(train, config);
  const GroupReport base = group_disparity(clean, test, metric);
  SensitivityReport r = empty_report(SensitivityMode::TrainTime, metric, fractions, seeds, base);

  parallel_for(r.cells.size(), threads, [&](std::size_t k) {
    auto& cell = r.cells[k];
    auto [flipped, record] = flip_labels(train, cell.fraction, cell.seed);
    cell.flipped = record.flipped_indices.size();
    try {
      const ModelParams m = dinf::train(flipped, config);
      fill_cell(cell, group_disparity(m, test, metric), r, test.num_groups());
    } catch (const ConvergenceError& e) {
      cell.valid = false;
      cell.error = e.what();
    }
  });
  return r;
}

// ---------------------------------------------------------------------------

RankMethod parse_rank_method(const std::string& name) {
  if (name == "if-disparity") return RankMethod::IfDisparity;
  if (name == "if-disparity-label") return RankMethod::IfDisparityLabel;
  if (name == "if-norm") return RankMethod::IfNorm;
  if (name == "loss") return RankMethod::Loss;
  if (name == "cv-uncertainty") return RankMethod::CvUncertainty;
  if (name == "logit-margin") return RankMethod::LogitMargin;
  throw ConfigError("unknown ranking method '" + name + "'");
}

std::string rank_method_name(RankMethod method) {
  switch (method) {
    case RankMethod::IfDisparity: return "if-disparity";
    case RankMethod::IfDisparityLabel: return "if-disparity-label";
    case RankMethod::IfNorm: return "if-norm";
    case RankMethod::Loss: return "loss";
    case RankMethod::CvUncertainty: return "cv-uncertainty";
    case RankMethod::LogitMargin: return "logit-margin";
  }
  return "unknown";
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

double precision_at_k(std::span<const std::size_t> ranking, const FlipRecord& truth, std::size_t k) {
  if (k == 0) throw DomainError("k must be positive");
  if (k > ranking.size()) throw DomainError("k exceeds the ranking length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::binary_search(truth.flipped_indices.begin(), truth.flipped_indices.end(), ranking[i])) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

namespace {

// Probability each point's held-out model assigns to its own label.
std::vector<double> cv_own_label_probability(const Dataset& train, const TrainConfig& config,
                                             int folds, std::uint64_t seed, unsigned threads) {
  if (folds < 1) throw ConfigError("cv folds must be at least 1");
  const std::size_t n = train.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<double> out(n, 0.0);
  auto own = [&](const ModelParams& m, std::size_t i) {
    const double p = predict_proba(m, train[i].features);
    return train[i].label == 1 ? p : 1.0 - p;
  };

  if (folds == 1) {
    // One refit on a random half; every point is scored by that model.
    std::vector<std::size_t> half(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n / 2));
    std::sort(half.begin(), half.end());
    const ModelParams m = dinf::train(train.subset(half), config);
    for (std::size_t i = 0; i < n; ++i) out[i] = own(m, i);
    return out;
  }

  const auto k = static_cast<std::size_t>(folds);
  if (k > n) throw ConfigError("more cv folds than training points");
  std::vector<std::size_t> fold_of(n);
  for (std::size_t r = 0; r < n; ++r) fold_of[perm[r]] = r % k;

  parallel_for(k, threads, [&](std::size_t f) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] != f) keep.push_back(i);
    }
    const ModelParams m = dinf::train(train.subset(keep), config);
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] == f) out[i] = own(m, i);
    }
  });
  return out;
}

}  // namespace

RankingResult rank_training_points(RankMethod method, const ModelParams& model,
                                   const SolveContext& ctx, const Dataset& train,
                                   const Dataset& audit_set, const MetricKind& metric,
                                   const TrainConfig& config, const RankOptions& options,
                                   const FlipRecord* truth) {
  RankingResult result;
  result.method = rank_method_name(method);
  std::vector<double> scores(train.size(), 0.0);
  bool descending = true;

  switch (method) {
    case RankMethod::IfDisparity: {
      const DisparityAdjoint adj(ctx, model, audit_set, metric);
      for (std::size_t i = 0; i < train.size(); ++i) scores[i] = std::abs(adj.up(train[i]));
      break;
    }
    case RankMethod::IfDisparityLabel: {
      const DisparityAdjoint adj(ctx, model, audit_set, metric);
      for (std::size_t i = 0; i < train.size(); ++i) scores[i] = adj.canonical(train[i]);
      break;
    }
    case RankMethod::IfNorm: {
      ScoreRequest req;
      req.estimator = Estimator::UpParams;
      const auto s = score_training_set(ctx, model, train, req, options.threads);
      for (std::size_t i = 0; i < train.size(); ++i) scores[i] = s[i].value;
      break;
    }
    case RankMethod::Loss:
      for (std::size_t i = 0; i < train.size(); ++i) scores[i] = sample_loss(model, train[i]);
      break;
    case RankMethod::CvUncertainty:
      scores = cv_own_label_probability(train, config, options.cv_folds, options.seed,
                                        options.threads);
      descending = false;
      break;
    case RankMethod::LogitMargin:
      for (std::size_t i = 0; i < train.size(); ++i) {
        scores[i] = std::abs(logit(model, train[i].features));
      }
      descending = false;
      break;
  }

  result.order = order_by_score(scores, descending);
  result.scores = std::move(scores);
  if (truth != nullptr) {
    result.ground_truth = truth->flipped_indices;
    for (std::size_t k : options.ks) {
      if (k >= 1 && k <= result.order.size()) {
        result.precision_at_k[k] = precision_at_k(result.order, *truth, k);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

RelabelOutcome relabel_and_finetune(const ModelParams& model, const Dataset& train,
                                    const Dataset& audit_set, const MetricKind& metric,
                                    const RelabelOptions& options, const TrainConfig& config) {
  if (!(options.top_fraction > 0.0 && options.top_fraction <= 1.0)) {
    throw DomainError("top_fraction must lie in (0, 1]");
  }
  const SolveContext ctx(model, train);
  const DisparityAdjoint adj(ctx, model, audit_set, metric);

  RelabelOutcome out;
  out.canonical_scores.resize(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) out.canonical_scores[i] = adj.canonical(train[i]);

  const std::size_t budget = flip_count(options.top_fraction, train.size());
  for (std::size_t i : order_by_score(out.canonical_scores, true)) {
    if (out.relabeled.size() >= budget || !(out.canonical_scores[i] > 0.0)) break;
    if (options.pool_group && train[i].group != *options.pool_group) continue;
    out.relabeled.push_back(i);
  }
  std::sort(out.relabeled.begin(), out.relabeled.end());

  FlipRecord record;
  record.fraction = options.top_fraction;
  record.flipped_indices = out.relabeled;
  const Dataset relabeled = apply_flips(train, record);

  if (out.relabeled.empty()) {
    out.updated = model;
  } else if (options.full_retrain) {
    out.updated = dinf::train(relabeled, config);
  } else {
    out.updated = finetune(model, relabeled, options.epochs, options.learning_rate);
  }

  out.before = group_disparity(model, audit_set, metric);
  out.after = group_disparity(out.updated, audit_set, metric);
  out.audited_before = evaluate_disparity(model, audit_set, metric);
  out.audited_after = evaluate_disparity(out.updated, audit_set, metric);
  out.train_risk_before = risk(model, relabeled);
  out.train_risk_after = risk(out.updated, relabeled);
  return out;
}

}  // namespace dinf
