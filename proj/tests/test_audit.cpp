#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <set>

#include "dinf/audit.hpp"
#include "dinf/errors.hpp"
#include "support.hpp"

using namespace dinf;

namespace {

struct Task {
  Dataset train;
  Dataset test;
  TrainConfig config;
  ModelParams model;
};

Task small_task(std::uint64_t seed) {
  const DataSplit s = split(make_synthetic_group_task(400, 4, 0.15, 2.0, seed), seed);
  Task t{s.train, s.test, TrainConfig{}, ModelParams{}};
  t.config.ridge = 1e-2;
  t.model = train(t.train, t.config);
  return t;
}

}  // namespace

TEST_SUITE("audit") {

TEST_CASE("default flip grid") {
  const auto grid = default_flip_grid();
  REQUIRE(grid.size() == 7);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(grid[i] == doctest::Approx(0.05 * i));
}

TEST_CASE("test-time sensitivity: shape, zero fraction and determinism") {
  const Task t = small_task(1);
  const std::vector<double> fractions{0.0, 0.1, 0.3};
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  const auto r = test_time_sensitivity(t.model, t.test, fractions, seeds, MetricKind::ece());
  CHECK(r.cells.size() == 15);
  CHECK(r.mode == SensitivityMode::TestTime);
  CHECK(r.group_sizes == t.test.group_counts());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& c = r.cell(0, s);
    CHECK(c.flipped == 0);
    for (const auto& [g, v] : c.percent_change) CHECK(v == 0.0);
    CHECK(r.cell(2, s).flipped == flip_count(0.3, t.test.size()));
    CHECK(r.cell(1, s).seed == seeds[s]);
  }
  CHECK(r.mean_abs_percent_change(0, 0) == 0.0);

  // Percent changes recomputed from the metric values directly.
  for (const auto& c : r.cells) {
    for (const auto& [g, pc] : c.percent_change) {
      const double base = r.baseline.at(g);
      CHECK(pc == doctest::Approx(100.0 * (c.values.at(g) - base) / base));
    }
  }

  const auto again = test_time_sensitivity(t.model, t.test, fractions, seeds, MetricKind::ece(), 3);
  for (std::size_t k = 0; k < r.cells.size(); ++k) {
    CHECK(again.cells[k].values == r.cells[k].values);
    CHECK(again.cells[k].percent_change == r.cells[k].percent_change);
  }

  const std::vector<double> bad{0.5, 1.2};
  CHECK_THROWS_AS(test_time_sensitivity(t.model, t.test, bad, seeds, MetricKind::ece()), DomainError);
  CHECK_THROWS_AS(test_time_sensitivity(t.model, t.test, fractions, {}, MetricKind::ece()), DomainError);
}

TEST_CASE("train-time sensitivity at fraction zero reproduces the baseline") {
  const Task t = small_task(2);
  const std::vector<double> fractions{0.0, 0.2};
  const std::vector<std::uint64_t> seeds{7, 8};
  const auto r = train_time_sensitivity(t.train, t.test, fractions, seeds, MetricKind::brier(), t.config);
  CHECK(r.mode == SensitivityMode::TrainTime);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    CHECK(r.cell(0, s).valid);
    CHECK(r.cell(0, s).values == r.baseline);
    for (const auto& [g, v] : r.cell(0, s).percent_change) CHECK(v == 0.0);
  }
  const GroupReport direct = group_disparity(t.model, t.test, MetricKind::brier());
  CHECK(r.baseline == direct.per_group);
  CHECK(r.majority == direct.majority);
  CHECK(r.minority == direct.minority);
}

TEST_CASE("sensitivity flags groups with an undefined baseline") {
  const Task t = small_task(3);
  std::vector<Sample> s(t.test.samples().begin(), t.test.samples().end());
  // No negatives in group 1: gFPR is undefined there.
  for (auto& x : s) {
    if (x.group == 1) x.label = 1;
  }
  const Dataset test(s, t.test.feature_dim(), 2);
  const std::vector<double> fractions{0.1};
  const std::vector<std::uint64_t> seeds{0};
  const auto r = test_time_sensitivity(t.model, test, fractions, seeds, MetricKind::gfpr());
  CHECK(r.baseline.count(1) == 0);
  const auto& flagged = r.cell(0, 0).flagged_groups;
  CHECK(std::find(flagged.begin(), flagged.end(), 1) != flagged.end());
  CHECK(r.cell(0, 0).percent_change.count(1) == 0);
}

TEST_CASE("order_by_score breaks ties by index") {
  const std::vector<double> s{0.5, 2.0, 0.5, -1.0, 2.0};
  CHECK(order_by_score(s, true) == std::vector<std::size_t>{1, 4, 0, 2, 3});
  CHECK(order_by_score(s, false) == std::vector<std::size_t>{3, 0, 2, 1, 4});
  CHECK(order_by_score(std::vector<double>{}, true).empty());
}

TEST_CASE("precision_at_k") {
  FlipRecord truth;
  truth.flipped_indices = {1, 3, 5, 7};
  std::vector<std::size_t> ranking(10);
  std::iota(ranking.begin(), ranking.end(), 0);
  CHECK(precision_at_k(ranking, truth, 10) == doctest::Approx(0.4));
  CHECK(precision_at_k(ranking, truth, 2) == doctest::Approx(0.5));

  const std::vector<std::size_t> front{7, 5, 3, 1, 0, 2, 4, 6, 8, 9};
  CHECK(precision_at_k(front, truth, 4) == 1.0);
  CHECK(precision_at_k(front, truth, 8) == 0.5);

  CHECK(precision_at_k(front, FlipRecord{}, 3) == 0.0);
  FlipRecord every;
  every.flipped_indices = ranking;
  CHECK(precision_at_k(front, every, 5) == 1.0);

  CHECK_THROWS_AS(precision_at_k(front, truth, 0), DomainError);
  CHECK_THROWS_AS(precision_at_k(front, truth, 11), DomainError);

  // A random ranking hits the flip rate on average.
  std::mt19937_64 rng(4);
  double total = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> order(1000);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::set<std::size_t> flipped(order.begin(), order.begin() + 200);
    std::shuffle(order.begin(), order.end(), rng);
    FlipRecord r;
    r.flipped_indices.assign(flipped.begin(), flipped.end());
    total += precision_at_k(order, r, 50);
  }
  CHECK(std::abs(total / 100.0 - 0.20) <= 0.05);
}

TEST_CASE("rank_training_points covers every method") {
  const Task t = small_task(5);
  const auto [noisy, truth] = flip_labels(t.train, 0.2, 5);
  const ModelParams m = train(noisy, t.config);
  const SolveContext ctx = build_context(m, noisy);
  RankOptions opt;
  opt.ks = {10, 20, 100000};
  for (RankMethod method : {RankMethod::IfDisparity, RankMethod::IfDisparityLabel, RankMethod::IfNorm,
                            RankMethod::Loss, RankMethod::CvUncertainty, RankMethod::LogitMargin}) {
    const auto r = rank_training_points(method, m, ctx, noisy, t.test, MetricKind::brier(), t.config,
                                        opt, &truth);
    CHECK(parse_rank_method(r.method) == method);
    std::vector<std::size_t> sorted = r.order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> all(noisy.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK(sorted == all);
    CHECK(r.precision_at_k.size() == 2);
    CHECK(r.precision_at_k.at(10) == precision_at_k(r.order, truth, 10));
    CHECK(r.ground_truth == truth.flipped_indices);
    const auto again = rank_training_points(method, m, ctx, noisy, t.test, MetricKind::brier(), t.config,
                                            opt, &truth);
    CHECK(again.order == r.order);
    CHECK(again.scores == r.scores);
  }

  // Loss ranking is the per-sample loss, highest first.
  const auto loss = rank_training_points(RankMethod::Loss, m, ctx, noisy, t.test, MetricKind::brier(),
                                         t.config, opt);
  for (std::size_t k = 1; k < loss.order.size(); ++k) {
    CHECK(loss.scores[loss.order[k - 1]] >= loss.scores[loss.order[k]]);
  }
  CHECK(loss.precision_at_k.empty());

  RankOptions one_fold = opt;
  one_fold.cv_folds = 1;
  CHECK_NOTHROW(rank_training_points(RankMethod::CvUncertainty, m, ctx, noisy, t.test,
                                     MetricKind::brier(), t.config, one_fold));
  CHECK_THROWS_AS(parse_rank_method("random"), ConfigError);
}

TEST_CASE("relabel only flips positively scored points") {
  for (std::uint64_t seed : {6, 7}) {
    const Task t = small_task(seed);
    const MetricKind metric = MetricKind::ece().for_group(1);
    RelabelOptions opt;
    const auto out = relabel_and_finetune(t.model, t.train, t.test, metric, opt, t.config);
    CHECK(out.relabeled.size() <= flip_count(0.2, t.train.size()));
    CHECK(std::is_sorted(out.relabeled.begin(), out.relabeled.end()));
    for (std::size_t i : out.relabeled) CHECK(out.canonical_scores[i] > 0.0);
    // Every skipped point with a higher score than a chosen one is non-positive.
    std::set<std::size_t> chosen(out.relabeled.begin(), out.relabeled.end());
    if (!out.relabeled.empty()) {
      double lowest = 1e300;
      for (std::size_t i : out.relabeled) lowest = std::min(lowest, out.canonical_scores[i]);
      for (std::size_t i = 0; i < t.train.size(); ++i) {
        if (!chosen.count(i)) CHECK(out.canonical_scores[i] <= lowest);
      }
    }
    CHECK(out.audited_before == doctest::Approx(evaluate_disparity(t.model, t.test, metric)));
    CHECK(out.audited_after == doctest::Approx(evaluate_disparity(out.updated, t.test, metric)));

    RelabelOptions pooled = opt;
    pooled.pool_group = 0;
    const auto p = relabel_and_finetune(t.model, t.train, t.test, metric, pooled, t.config);
    for (std::size_t i : p.relabeled) CHECK(t.train[i].group == 0);

    const auto again = relabel_and_finetune(t.model, t.train, t.test, metric, opt, t.config);
    CHECK(again.relabeled == out.relabeled);
    CHECK(again.updated == out.updated);
  }
}

TEST_CASE("relabel with no positive scores leaves the model unchanged") {
  // Saturated, correct predictions give a zero metric gradient.
  std::vector<Sample> s;
  for (int i = 0; i < 20; ++i) s.push_back({{i % 2 ? 1.0 : -1.0}, i % 2, i % 2});
  const Dataset audit(s, 1, 2);
  // Points at the origin keep curvature in the unpenalized bias.
  s.push_back({{0.0}, 0, 0});
  s.push_back({{0.0}, 1, 1});
  const Dataset train(s, 1, 2);
  Eigen::VectorXd w(2);
  w << 900.0, 0.0;
  const ModelParams m(w, 1e-2);
  const auto out = relabel_and_finetune(m, train, audit, MetricKind::brier(), RelabelOptions{}, TrainConfig{});
  CHECK(out.relabeled.empty());
  CHECK(out.updated == m);
  CHECK(out.before.per_group == out.after.per_group);

  RelabelOptions bad;
  bad.top_fraction = 0.0;
  CHECK_THROWS_AS(relabel_and_finetune(m, train, audit, MetricKind::brier(), bad, TrainConfig{}), DomainError);
}

}  // TEST_SUITE
