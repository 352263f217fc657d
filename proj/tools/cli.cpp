#include "dinf/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "dinf/audit.hpp"
#include "dinf/data.hpp"
#include "dinf/errors.hpp"
#include "dinf/influence.hpp"
#include "dinf/metrics.hpp"
#include "dinf/model.hpp"
#include "dinf/parallel.hpp"
#include "dinf/serialize.hpp"
#include "dinf/stats.hpp"

namespace dinf {
namespace {

namespace fs = std::filesystem;

/// Raised when a check on the produced results fails (exit code 1).
class InvariantBreach : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Parameter tables

enum class Kind { Int, Real, Text, Flag, RealList, IntList };

struct Param {
  std::string name;  ///< config key; the flag is the same with '-' for '_'
  Kind kind;
  Json fallback;
  std::string help;
};

std::string flag_of(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(flag_of(key) + ": cannot parse '" + text + "'");
  }
  return v;
}

Json coerce_scalar(const std::string& key, Kind kind, const Json& v) {
  switch (kind) {
    case Kind::Int:
      if (v.is_number_integer()) return v.get<long long>();
      if (v.is_string()) return parse_number<long long>(key, v.get<std::string>());
      break;
    case Kind::Real:
      if (v.is_number()) return v.get<double>();
      if (v.is_string()) return parse_number<double>(key, v.get<std::string>());
      break;
    case Kind::Text:
      if (v.is_string()) return v;
      break;
    case Kind::Flag:
      if (v.is_boolean()) return v;
      if (v == "true") return true;
      if (v == "false") return false;
      break;
    default:
      break;
  }
  throw ConfigError(flag_of(key) + ": value has the wrong type");
}

Json coerce(const Param& p, const Json& v) {
  if (v.is_null() && p.fallback.is_null()) return v;
  if (p.kind != Kind::RealList && p.kind != Kind::IntList) return coerce_scalar(p.name, p.kind, v);
  const Kind elem = p.kind == Kind::RealList ? Kind::Real : Kind::Int;
  Json out = Json::array();
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(coerce_scalar(p.name, elem, e));
  } else if (v.is_string()) {
    for (const auto& e : split_list(v.get<std::string>())) out.push_back(coerce_scalar(p.name, elem, e));
  } else {
    throw ConfigError(flag_of(p.name) + ": expected a list");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Typed accessors on the effective config

struct Config {
  Json values;

  long long integer(const std::string& k) const { return values.at(k).get<long long>(); }
  double real(const std::string& k) const { return values.at(k).get<double>(); }
  std::string text(const std::string& k) const { return values.at(k).get<std::string>(); }
  bool flag(const std::string& k) const { return values.at(k).get<bool>(); }
  std::vector<double> reals(const std::string& k) const {
    return values.at(k).get<std::vector<double>>();
  }
  std::vector<long long> integers(const std::string& k) const {
    return values.at(k).get<std::vector<long long>>();
  }
  unsigned threads() const { return static_cast<unsigned>(integer("threads")); }
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string required_path(const Config& c, const std::string& k) {
  const std::string p = c.text(k);
  require(!p.empty(), flag_of(k) + " is required");
  return p;
}

std::uint64_t seed_of(const Config& c, const std::string& k) {
  const long long s = c.integer(k);
  require(s >= 0, flag_of(k) + " must be non-negative");
  return static_cast<std::uint64_t>(s);
}

/// Refuses to write over an input file.
void check_output(const std::string& out, const std::vector<std::string>& inputs) {
  for (const auto& in : inputs) {
    if (in.empty() || !fs::exists(in) || !fs::exists(out)) continue;
    require(!fs::equivalent(in, out), "output " + out + " would overwrite input " + in);
  }
}

// ---------------------------------------------------------------------------
// Shared parameter groups

std::vector<Param> data_params() {
  return {
      {"train", Kind::Text, "", "training CSV"},
      {"test", Kind::Text, "", "held-out audit CSV"},
      {"features", Kind::Text, "", "comma-separated feature columns (default: all others)"},
      {"label_column", Kind::Text, "label", "label column name"},
      {"group_column", Kind::Text, "group", "group column name"},
      {"flip_fraction", Kind::Real, 0.0, "fraction of training labels to flip"},
      {"flip_seed", Kind::Int, 0, "seed of the training label flips"},
      {"flip_group", Kind::Int, -1, "flip only within this group (-1: all)"},
  };
}

std::vector<Param> model_params() {
  return {
      {"ridge", Kind::Real, 1e-3, "ridge strength lambda"},
      {"tolerance", Kind::Real, 1e-10, "gradient-norm stopping tolerance"},
      {"max_iterations", Kind::Int, 100, "Newton iteration cap"},
  };
}

std::vector<Param> metric_params(const std::string& metric) {
  return {
      {"metric", Kind::Text, metric, "ece, brier, gfpr, gfnr or error_rate"},
      {"bins", Kind::Int, 10, "ECE bins"},
      {"audit_group", Kind::Int, -1, "restrict the audit set to this group (-1: all)"},
  };
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.ridge = c.real("ridge");
  t.tolerance = c.real("tolerance");
  require(c.integer("max_iterations") <= std::numeric_limits<int>::max(), "--max-iterations is too large");
  t.max_iterations = static_cast<int>(c.integer("max_iterations"));
  t.validate();
  return t;
}

MetricKind metric_kind(const Config& c) {
  MetricKind m;
  m.type = parse_metric_type(c.text("metric"));
  const long long bins = c.integer("bins");
  require(bins >= 1 && bins <= 100000, "--bins must lie in [1, 100000]");
  m.bins = static_cast<int>(bins);
  const long long g = c.integer("audit_group");
  require(g >= -1, "--audit-group must be -1 or a group id");
  if (g >= 0) m.group_filter = static_cast<int>(g);
  return m;
}

struct DataRequest {
  std::string train_path;
  std::string test_path;
  CsvSchema schema;
  double flip_fraction = 0.0;
  std::uint64_t flip_seed = 0;
  FlipScope scope;
};

DataRequest data_request(const Config& c) {
  DataRequest r;
  r.train_path = required_path(c, "train");
  r.test_path = required_path(c, "test");
  if (!c.text("features").empty()) r.schema.feature_columns = split_list(c.text("features"));
  r.schema.label_column = c.text("label_column");
  r.schema.group_column = c.text("group_column");
  r.flip_fraction = c.real("flip_fraction");
  require(r.flip_fraction >= 0.0 && r.flip_fraction <= 1.0, "--flip-fraction must lie in [0, 1]");
  r.flip_seed = seed_of(c, "flip_seed");
  const long long g = c.integer("flip_group");
  require(g >= -1, "--flip-group must be -1 or a group id");
  if (g >= 0) r.scope = FlipScope::only(static_cast<int>(g));
  return r;
}

struct LoadedData {
  Dataset clean_train;
  Dataset train;  ///< after the requested flips
  Dataset test;
  FlipRecord flips;
};

LoadedData load_data(const DataRequest& r) {
  LoadedData d;
  d.clean_train = load_csv(r.train_path, r.schema);
  d.test = load_csv(r.test_path, r.schema);
  if (d.clean_train.feature_dim() != d.test.feature_dim()) {
    throw DomainError("train and test have different feature dimensions");
  }
  if (r.flip_fraction > 0.0) {
    auto [noisy, record] = flip_labels(d.clean_train, r.flip_fraction, r.flip_seed, r.scope);
    d.train = std::move(noisy);
    d.flips = std::move(record);
  } else {
    d.train = d.clean_train;
    d.flips.seed = r.flip_seed;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Commands

struct Context {
  std::ostream& out;
  std::ostream& err;
};

Json report_head(const std::string& command, const Config& c) {
  return Json{{"schema_version", kSchemaVersion}, {"command", command}, {"config", c.values}};
}

int cmd_generate(const Config& c, Context& ctx) {
  const long long n = c.integer("n");
  const long long dim = c.integer("dim");
  const double eps = c.real("epsilon");
  const double sep = c.real("separation");
  SyntheticOptions opt;
  opt.group_shift = c.real("group_shift");
  opt.minority_noise_scale = c.real("minority_noise_scale");
  require(n >= 10 && n % 2 == 0, "--n must be even and at least 10");
  require(dim >= 1, "--dim must be at least 1");
  require(eps > 0.0 && eps < 0.5, "--epsilon must lie in (0, 0.5)");
  require(std::isfinite(sep) && sep >= 0.0, "--separation must be finite and non-negative");
  require(std::isfinite(opt.group_shift), "--group-shift must be finite");
  require(std::isfinite(opt.minority_noise_scale) && opt.minority_noise_scale > 0.0,
          "--minority-noise-scale must be positive");
  const std::uint64_t seed = seed_of(c, "seed");
  const fs::path dir = required_path(c, "out_dir");

  const Dataset full = make_synthetic_group_task(static_cast<std::size_t>(n),
                                                 static_cast<std::size_t>(dim), eps, sep, seed, opt);
  const DataSplit parts = split(full, seed);

  fs::create_directories(dir);
  write_csv(dir / "train.csv", parts.train);
  write_csv(dir / "val.csv", parts.val);
  write_csv(dir / "test.csv", parts.test);

  const auto counts = full.group_counts();
  const auto minority = static_cast<int>(std::min_element(counts.begin(), counts.end()) - counts.begin());
  Json manifest = report_head("generate", c);
  manifest["seed"] = seed;
  manifest["epsilon"] = eps;
  manifest["files"] = Json{{"train", "train.csv"}, {"val", "val.csv"}, {"test", "test.csv"}};
  manifest["sizes"] = Json{{"train", parts.train.size()}, {"val", parts.val.size()}, {"test", parts.test.size()}};
  manifest["group_counts"] = counts;
  manifest["minority_group"] = minority;
  manifest["minority_fraction"] =
      static_cast<double>(counts[static_cast<std::size_t>(minority)]) / static_cast<double>(n);
  write_json(dir / "manifest.json", manifest);

  ctx.out << "wrote " << parts.train.size() << "/" << parts.val.size() << "/" << parts.test.size()
          << " train/val/test rows to " << dir.string() << "\n"
          << "minority fraction " << format_double(manifest["minority_fraction"].get<double>()) << "\n";
  return kExitOk;
}

int cmd_train(const Config& c, Context& ctx) {
  const DataRequest req = data_request(c);
  const TrainConfig tc = train_config(c);
  const std::string out = required_path(c, "out");
  check_output(out, {req.train_path, req.test_path});

  const LoadedData d = load_data(req);
  const ModelParams model = train(d.train, tc);

  Json report = report_head("train", c);
  report["model"] = to_json(model);
  report["train_size"] = d.train.size();
  report["train_risk"] = risk(model, d.train);
  report["grad_norm"] = grad_risk(model, d.train).norm();
  report["test_risk"] = risk(model, d.test);
  report["flips"] = to_json(d.flips);
  write_json(out, report);
  ctx.out << "train risk " << format_double(report["train_risk"].get<double>()) << "\nwrote " << out
          << "\n";
  return kExitOk;
}

ModelParams load_model(const std::string& path) {
  const Json j = read_json(path);
  return model_from_json(j.contains("model") ? j.at("model") : j);
}

int cmd_audit(const Config& c, Context& ctx) {
  const DataRequest req = data_request(c);
  const TrainConfig tc = train_config(c);
  const MetricKind metric = metric_kind(c);
  const std::string model_path = c.text("model");
  const std::string out = required_path(c, "out");
  check_output(out, {req.train_path, req.test_path, model_path});

  const LoadedData d = load_data(req);
  const ModelParams model = model_path.empty() ? train(d.train, tc) : load_model(model_path);
  if (model.feature_dim() != d.test.feature_dim()) {
    throw DomainError("model and data have different feature dimensions");
  }
  const GroupReport groups = group_disparity(model, d.test, metric);
  const double audited = evaluate_disparity(model, d.test, metric);

  Json report = report_head("audit", c);
  report["model"] = to_json(model);
  report["audited"] = audited;
  report["groups"] = to_json(groups);
  report["flips"] = to_json(d.flips);
  write_json(out, report);

  ctx.out << metric.name() << " on audit set " << format_double(audited) << "\n";
  for (const auto& [g, v] : groups.per_group) ctx.out << "group " << g << ": " << format_double(v) << "\n";
  ctx.out << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_sensitivity(const Config& c, Context& ctx) {
  const DataRequest req = data_request(c);
  const TrainConfig tc = train_config(c);
  const MetricKind metric = metric_kind(c);
  const std::string mode_name = c.text("mode");
  require(mode_name == "test" || mode_name == "train", "--mode must be 'test' or 'train'");
  const auto mode = mode_name == "test" ? SensitivityMode::TestTime : SensitivityMode::TrainTime;
  const auto fractions = c.reals("fractions");
  require(!fractions.empty(), "--fractions must not be empty");
  for (double f : fractions) require(f >= 0.0 && f <= 1.0, "--fractions must lie in [0, 1]");
  const long long count = c.integer("seeds");
  require(count >= 1, "--seeds must be at least 1");
  const std::uint64_t base = seed_of(c, "seed");
  std::vector<std::uint64_t> seeds;
  for (long long s = 0; s < count; ++s) seeds.push_back(base + static_cast<std::uint64_t>(s));
  const std::string out = required_path(c, "out");
  const std::string csv = c.text("csv");
  check_output(out, {req.train_path, req.test_path});
  if (!csv.empty()) check_output(csv, {req.train_path, req.test_path});

  const LoadedData d = load_data(req);
  const SensitivityReport sr =
      mode == SensitivityMode::TestTime
          ? test_time_sensitivity(train(d.train, tc), d.test, fractions, seeds, metric, c.threads())
          : train_time_sensitivity(d.train, d.test, fractions, seeds, metric, tc, c.threads());

  Json report = report_head("sensitivity", c);
  report["flips"] = to_json(d.flips);
  report["sensitivity"] = to_json(sr);
  write_json(out, report);
  if (!csv.empty()) write_text(csv, sensitivity_csv(sr));

  for (std::size_t f = 0; f < sr.grid.size(); ++f) {
    ctx.out << "fraction " << format_double(sr.grid[f]);
    for (const auto& [g, base_value] : sr.baseline) {
      (void)base_value;
      const auto pcs = sr.percent_changes(g, f);
      ctx.out << "  group " << g << ": " << format_double(mean(pcs)) << "% +/- "
              << format_double(stddev(pcs));
    }
    ctx.out << "\n";
  }
  ctx.out << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_rank(const Config& c, Context& ctx) {
  const DataRequest req = data_request(c);
  const TrainConfig tc = train_config(c);
  const MetricKind metric = metric_kind(c);
  const RankMethod method = parse_rank_method(c.text("method"));
  RankOptions opt;
  opt.ks.clear();
  for (long long k : c.integers("k")) {
    require(k >= 1, "--k values must be positive");
    opt.ks.push_back(static_cast<std::size_t>(k));
  }
  require(!opt.ks.empty(), "--k must not be empty");
  const long long folds = c.integer("cv_folds");
  require(folds >= 1 && folds <= 1000, "--cv-folds must lie in [1, 1000]");
  opt.cv_folds = static_cast<int>(folds);
  opt.seed = seed_of(c, "seed");
  opt.threads = c.threads();
  const std::string out = required_path(c, "out");
  const std::string csv = c.text("csv");
  const std::string scores_path = c.text("scores_csv");
  std::optional<Estimator> estimator;
  if (method == RankMethod::IfDisparity) estimator = Estimator::UpDisparity;
  if (method == RankMethod::IfDisparityLabel) estimator = Estimator::PertLabelDisparity;
  if (method == RankMethod::IfNorm) estimator = Estimator::UpParams;
  require(scores_path.empty() || estimator.has_value(), "--scores-csv needs an influence method");
  for (const auto& path : {csv, scores_path}) {
    if (!path.empty()) check_output(path, {req.train_path, req.test_path});
  }
  check_output(out, {req.train_path, req.test_path});

  const LoadedData d = load_data(req);
  const ModelParams model = train(d.train, tc);
  const SolveContext solver(model, d.train);
  const bool have_truth = req.flip_fraction > 0.0;
  const RankingResult result = rank_training_points(method, model, solver, d.train, d.test, metric, tc,
                                                    opt, have_truth ? &d.flips : nullptr);

  Json report = report_head("rank", c);
  report["model"] = to_json(model);
  report["flips"] = to_json(d.flips);
  report["ranking"] = to_json(result);
  write_json(out, report);
  if (!csv.empty()) write_text(csv, ranking_csv(result, d.train));
  if (!scores_path.empty()) {
    ScoreRequest request;
    request.estimator = *estimator;
    request.audit_set = &d.test;
    request.metric = metric;
    write_text(scores_path, scores_csv(score_training_set(solver, model, d.train, request, c.threads()), d.train));
  }

  for (const auto& [k, p] : result.precision_at_k) {
    ctx.out << result.method << " precision@" << k << " " << format_double(p) << "\n";
  }
  ctx.out << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_relabel(const Config& c, Context& ctx) {
  const DataRequest req = data_request(c);
  const TrainConfig tc = train_config(c);
  const MetricKind metric = metric_kind(c);
  RelabelOptions opt;
  opt.top_fraction = c.real("top_fraction");
  require(opt.top_fraction > 0.0 && opt.top_fraction <= 1.0, "--top-fraction must lie in (0, 1]");
  const long long epochs = c.integer("epochs");
  require(epochs >= 0 && epochs <= 1000000, "--epochs must lie in [0, 1000000]");
  opt.epochs = static_cast<int>(epochs);
  opt.learning_rate = c.real("lr");
  require(std::isfinite(opt.learning_rate) && opt.learning_rate > 0.0, "--lr must be positive");
  opt.full_retrain = c.flag("full_retrain");
  const long long pool = c.integer("pool_group");
  require(pool >= -1, "--pool-group must be -1 or a group id");
  if (pool >= 0) opt.pool_group = static_cast<int>(pool);
  const std::string out = required_path(c, "out");
  check_output(out, {req.train_path, req.test_path});

  const LoadedData d = load_data(req);
  const ModelParams model = train(d.train, tc);
  const RelabelOutcome outcome = relabel_and_finetune(model, d.train, d.test, metric, opt, tc);

  std::size_t hits = 0;
  for (std::size_t i : outcome.relabeled) {
    hits += std::binary_search(d.flips.flipped_indices.begin(), d.flips.flipped_indices.end(), i);
  }

  Json report = report_head("relabel", c);
  report["model"] = to_json(model);
  report["flips"] = to_json(d.flips);
  report["outcome"] = to_json(outcome);
  report["relabeled_true_flips"] = hits;
  write_json(out, report);

  ctx.out << "relabeled " << outcome.relabeled.size() << " points (" << hits << " were flipped)\n"
          << metric.name() << " " << format_double(outcome.audited_before) << " -> "
          << format_double(outcome.audited_after) << "\n";
  for (const auto& [g, v] : outcome.before.per_group) {
    auto it = outcome.after.per_group.find(g);
    ctx.out << "group " << g << ": " << format_double(v) << " -> "
            << (it == outcome.after.per_group.end() ? std::string("undefined") : format_double(it->second))
            << "\n";
  }
  ctx.out << "wrote " << out << "\n";
  return kExitOk;
}

int cmd_oracle_check(const Config& c, Context& ctx) {
  const long long n = c.integer("n");
  const long long dim = c.integer("dim");
  const double eps = c.real("epsilon");
  const double sep = c.real("separation");
  require(n >= 10 && n % 2 == 0, "--n must be even and at least 10");
  require(dim >= 1, "--dim must be at least 1");
  require(eps > 0.0 && eps < 0.5, "--epsilon must lie in (0, 0.5)");
  require(std::isfinite(sep) && sep >= 0.0, "--separation must be finite and non-negative");
  const std::uint64_t seed = seed_of(c, "seed");
  const TrainConfig tc = train_config(c);
  const MetricKind metric = metric_kind(c);
  const long long test_index = c.integer("test_index");
  const double min_rho = c.real("min_spearman");
  const double min_agree = c.real("min_sign_agreement");
  const std::string out = c.text("out");

  const DataSplit parts = split(make_synthetic_group_task(static_cast<std::size_t>(n),
                                                          static_cast<std::size_t>(dim), eps, sep, seed),
                                seed);
  require(test_index >= 0 && static_cast<std::size_t>(test_index) < parts.test.size(),
          "--test-index is outside the test split");
  const Dataset& tr = parts.train;
  const Sample& z_t = parts.test[static_cast<std::size_t>(test_index)];

  const RetrainOracle oracle(tr, tc);
  const ModelParams& model = oracle.baseline();
  const SolveContext solver(model, tr);
  const DisparityAdjoint adjoint(solver, model, parts.test, metric);

  const std::size_t m = tr.size();
  std::vector<double> loss_pred(m), loss_true(m), disp_pred(m), disp_true(m), canon(m), flip_true(m);
  const auto test_loss = [&](const ModelParams& p) { return sample_loss(p, z_t); };
  const auto disparity = [&](const ModelParams& p) { return evaluate_disparity(p, parts.test, metric); };
  const double base_loss = test_loss(model);
  const double base_disp = disparity(model);
  const double nn = static_cast<double>(m);
  parallel_for(m, c.threads(), [&](std::size_t i) {
    const ModelParams loo = oracle.leave_one_out_params(i);
    loss_pred[i] = -influence_up_loss(solver, model, tr[i], z_t) / nn;
    loss_true[i] = test_loss(loo) - base_loss;
    disp_pred[i] = -adjoint.up(tr[i]) / nn;
    disp_true[i] = disparity(loo) - base_disp;
    canon[i] = adjoint.canonical(tr[i]);
    flip_true[i] = disparity(oracle.label_flip_params(i)) - base_disp;
  });

  const double rho_loss = spearman(loss_pred, loss_true);
  const double rho_disp = spearman(disp_pred, disp_true);
  std::size_t counted = 0, agree = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (std::abs(flip_true[i]) <= 1e-8) continue;
    ++counted;
    // A positive canonical score predicts that flipping lowers the metric.
    agree += (flip_true[i] < 0.0) == (canon[i] > 0.0);
  }
  const double agreement = counted == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(counted);

  if (!out.empty()) {
    Json report = report_head("oracle-check", c);
    report["train_size"] = m;
    report["spearman_up_loss"] = rho_loss;
    report["spearman_up_disparity"] = rho_disp;
    report["label_sign_agreement"] = agreement;
    report["label_sign_points"] = counted;
    report["predicted_loss_delta"] = loss_pred;
    report["retrained_loss_delta"] = loss_true;
    report["predicted_disparity_delta"] = disp_pred;
    report["retrained_disparity_delta"] = disp_true;
    report["canonical_score"] = canon;
    report["retrained_flip_delta"] = flip_true;
    write_json(out, report);
  }

  ctx.out << "spearman up_loss vs leave-one-out: " << format_double(rho_loss) << "\n"
          << "spearman up_disparity (" << metric.name() << ") vs leave-one-out: " << format_double(rho_disp)
          << "\n"
          << "label-flip sign agreement: " << format_double(agreement) << " over " << counted << " points\n";
  if (rho_loss < min_rho || rho_disp < min_rho || agreement < min_agree) {
    throw InvariantBreach("influence estimates disagree with retraining");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Command table and dispatch

struct Command {
  std::string name;
  std::string description;
  std::vector<Param> params;
  std::function<int(const Config&, Context&)> run;
};

std::vector<Param> concat(std::initializer_list<std::vector<Param>> parts) {
  std::vector<Param> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Json default_grid() {
  Json g = Json::array();
  for (double f : default_flip_grid()) g.push_back(f);
  return g;
}

std::vector<Command> commands() {
  const Param out{"out", Kind::Text, "", "report JSON path"};
  const Param csv{"csv", Kind::Text, "", "optional flat CSV path"};
  return {
      {"generate", "write the synthetic two-group task as train/val/test CSVs",
       {{"n", Kind::Int, 2000, "total samples"},
        {"dim", Kind::Int, 8, "feature dimension"},
        {"epsilon", Kind::Real, 0.15, "group imbalance; minority holds 2*epsilon of the data"},
        {"separation", Kind::Real, 2.0, "distance between class means"},
        {"group_shift", Kind::Real, 1.0, "minority offset orthogonal to the class direction"},
        {"minority_noise_scale", Kind::Real, 1.0, "minority noise scale"},
        {"seed", Kind::Int, 0, "generator and split seed"},
        {"out_dir", Kind::Text, "", "output directory"}},
       cmd_generate},
      {"train", "fit the ridge logistic model", concat({data_params(), model_params(), {out}}),
       cmd_train},
      {"audit", "per-group disparity metric of a model on the audit set",
       concat({data_params(), model_params(), metric_params("ece"),
               {{"model", Kind::Text, "", "model or train report JSON (default: train)"}, out}}),
       cmd_audit},
      {"sensitivity", "label-flip sensitivity sweep",
       concat({data_params(), model_params(), metric_params("ece"),
               {{"mode", Kind::Text, "test", "test or train"},
                {"fractions", Kind::RealList, default_grid(), "flip fractions"},
                {"seeds", Kind::Int, 5, "number of seeds"},
                {"seed", Kind::Int, 0, "first seed"},
                out, csv}}),
       cmd_sensitivity},
      {"rank", "rank training points as likely mislabeled",
       concat({data_params(), model_params(), metric_params("brier"),
               {{"method", Kind::Text, "if-disparity-label",
                 "if-disparity, if-disparity-label, if-norm, loss, cv-uncertainty, logit-margin"},
                {"k", Kind::IntList, Json::array({50}), "precision@k cutoffs"},
                {"cv_folds", Kind::Int, 5, "folds of cv-uncertainty"},
                {"seed", Kind::Int, 0, "seed of cv-uncertainty"},
                out, csv,
                {"scores_csv", Kind::Text, "", "optional per-point influence score CSV"}}}),
       cmd_rank},
      {"relabel", "flip positively scored labels then finetune or retrain",
       concat({data_params(), model_params(), metric_params("ece"),
               {{"top_fraction", Kind::Real, 0.2, "share of training points to relabel"},
                {"epochs", Kind::Int, 1, "finetuning epochs"},
                {"lr", Kind::Real, 1e-3, "finetuning learning rate"},
                {"full_retrain", Kind::Flag, false, "refit instead of finetuning"},
                {"pool_group", Kind::Int, -1, "relabel only this group (-1: all)"},
                out}}),
       cmd_relabel},
      {"oracle-check", "compare influence estimates with brute-force retraining",
       concat({{{"n", Kind::Int, 60, "total samples"},
                {"dim", Kind::Int, 4, "feature dimension"},
                {"epsilon", Kind::Real, 0.15, "group imbalance"},
                {"separation", Kind::Real, 2.0, "distance between class means"},
                {"seed", Kind::Int, 0, "generator and split seed"}},
               model_params(), metric_params("brier"),
               {{"test_index", Kind::Int, 0, "test point of the loss influence"},
                {"min_spearman", Kind::Real, 0.95, "required rank correlation"},
                {"min_sign_agreement", Kind::Real, 0.0, "required label-flip sign agreement"},
                {"out", Kind::Text, "", "optional report JSON path"}}}),
       cmd_oracle_check},
  };
}

/// Resolves defaults, then the config file, then explicit flags.
Config effective_config(const Command& cmd, const std::string& config_path,
                        const std::map<std::string, std::string>& raw,
                        const std::map<std::string, const CLI::Option*>& opts,
                        const std::map<std::string, bool>& flags) {
  Json values = Json::object();
  for (const auto& p : cmd.params) values[p.name] = p.fallback;
  values["threads"] = nullptr;

  if (!config_path.empty()) {
    Json file = read_json(config_path);
    if (file.contains("config") && file["config"].is_object()) {
      if (file.contains("command") && file["command"] != cmd.name) {
        throw ConfigError("config was written by '" + file["command"].get<std::string>() + "'");
      }
      file = file["config"];
    }
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, v] : file.items()) {
      if (key == "threads") {
        values["threads"] = v.is_null() ? v : coerce_scalar(key, Kind::Int, v);
        continue;
      }
      auto it = std::find_if(cmd.params.begin(), cmd.params.end(), [&](const Param& p) { return p.name == key; });
      if (it == cmd.params.end()) throw ConfigError("unknown config key '" + key + "'");
      values[key] = coerce(*it, v);
    }
  }

  for (const auto& p : cmd.params) {
    if (p.kind == Kind::Flag) {
      if (flags.at(p.name)) values[p.name] = true;
    } else if (opts.at(p.name)->count() > 0) {
      values[p.name] = coerce(p, Json(raw.at(p.name)));
    }
  }
  if (opts.at("threads")->count() > 0) values["threads"] = coerce_scalar("threads", Kind::Int, raw.at("threads"));

  if (values["threads"].is_null()) {
    const char* env = std::getenv("INFLUENCE_AUDIT_THREADS");
    values["threads"] = env != nullptr && *env != '\0' ? coerce_scalar("threads", Kind::Int, std::string(env))
                                                       : Json(1);
  }
  const long long t = values["threads"].get<long long>();
  require(t >= 1 && t <= 1024, "--threads must lie in [1, 1024]");
  return Config{values};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> table = commands();

  CLI::App app{"Audit how label errors move group disparity metrics of a ridge logistic model."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");

  struct Bound {
    std::map<std::string, std::string> raw;
    std::map<std::string, const CLI::Option*> opts;
    std::map<std::string, bool> flags;
    std::string config;
    CLI::App* sub = nullptr;
  };
  std::vector<Bound> bound(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    Bound& b = bound[i];
    b.sub = app.add_subcommand(table[i].name, table[i].description);
    b.sub->add_option("--config", b.config, "JSON config file (flags override it)");
    for (const auto& p : table[i].params) {
      if (p.kind == Kind::Flag) {
        b.flags[p.name] = false;
        b.sub->add_flag(flag_of(p.name), b.flags[p.name], p.help);
      } else {
        std::string help = p.help;
        if (!p.fallback.is_null() && p.fallback != "") help += " [" + p.fallback.dump() + "]";
        b.opts[p.name] = b.sub->add_option(flag_of(p.name), b.raw[p.name], help);
      }
    }
    b.opts["threads"] = b.sub->add_option("--threads", b.raw["threads"],
                                          "worker threads (default: $INFLUENCE_AUDIT_THREADS or 1)");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!bound[i].sub->parsed()) continue;
    Context ctx{out, err};
    try {
      const Config cfg = effective_config(table[i], bound[i].config, bound[i].raw, bound[i].opts, bound[i].flags);
      return table[i].run(cfg, ctx);
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const InvariantBreach& e) {
      err << "invariant breach: " << e.what() << "\n";
      return kExitInvariant;
    } catch (const ConvergenceError& e) {
      err << "convergence error: " << e.what() << "\n";
      return kExitConvergence;
    } catch (const NotPositiveDefiniteError& e) {
      err << "convergence error: " << e.what() << "\n";
      return kExitConvergence;
    } catch (const UndefinedMetricError& e) {
      err << "undefined metric: " << e.what() << "\n";
      return kExitUndefinedMetric;
    } catch (const Error& e) {
      err << "data error: " << e.what() << "\n";
      return kExitData;
    } catch (const fs::filesystem_error& e) {
      err << "data error: " << e.what() << "\n";
      return kExitData;
    }
  }
  return kExitConfig;
}

}  // namespace dinf
