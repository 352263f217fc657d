#include "dinf/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dinf/errors.hpp"
#include "dinf/stats.hpp"

namespace dinf {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Json to_json(const ModelParams& model) {
  Json w = Json::array();
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) w.push_back(model.weights[i]);
  return Json{{"weights", w}, {"ridge", model.ridge}};
}

ModelParams model_from_json(const Json& j) {
  try {
    const auto w = j.at("weights").get<std::vector<double>>();
    return ModelParams(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())),
                       j.at("ridge").get<double>());
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed model: ") + e.what());
  }
}

Json to_json(const FlipRecord& record) {
  return Json{{"fraction", record.fraction},
              {"seed", record.seed},
              {"flipped_indices", record.flipped_indices}};
}

FlipRecord flip_record_from_json(const Json& j) {
  try {
    FlipRecord r;
    r.fraction = j.at("fraction").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.flipped_indices = j.at("flipped_indices").get<std::vector<std::size_t>>();
    return r;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed flip record: ") + e.what());
  }
}

Json to_json(const MetricKind& metric) {
  Json j{{"type", metric_type_name(metric.type)}};
  if (metric.type == MetricType::Ece) j["bins"] = metric.bins;
  j["group_filter"] = metric.group_filter ? Json(*metric.group_filter) : Json(nullptr);
  return j;
}

namespace {

Json group_map(const std::map<int, double>& m) {
  Json j = Json::object();
  for (const auto& [g, v] : m) j[std::to_string(g)] = v;
  return j;
}

}  // namespace

Json to_json(const GroupReport& report) {
  return Json{{"metric", to_json(report.metric)},
              {"per_group", group_map(report.per_group)},
              {"undefined_groups", report.undefined_groups},
              {"group_sizes", report.group_sizes},
              {"majority", report.majority},
              {"minority", report.minority}};
}

Json to_json(const SensitivityReport& report) {
  Json cells = Json::array();
  for (const auto& c : report.cells) {
    Json cell{{"fraction", c.fraction},
              {"seed", c.seed},
              {"valid", c.valid},
              {"flipped", c.flipped},
              {"values", group_map(c.values)},
              {"percent_change", group_map(c.percent_change)},
              {"flagged_groups", c.flagged_groups}};
    if (!c.valid) cell["error"] = c.error;
    cells.push_back(std::move(cell));
  }

  Json summary = Json::array();
  for (std::size_t f = 0; f < report.grid.size(); ++f) {
    Json groups = Json::object();
    for (const auto& [g, base] : report.baseline) {
      (void)base;
      const auto pcs = report.percent_changes(g, f);
      groups[std::to_string(g)] = Json{{"mean_percent_change", mean(pcs)},
                                       {"stddev_percent_change", stddev(pcs)},
                                       {"mean_abs_percent_change", report.mean_abs_percent_change(g, f)},
                                       {"valid_seeds", pcs.size()}};
    }
    summary.push_back(Json{{"fraction", report.grid[f]}, {"groups", groups}});
  }

  return Json{{"mode", sensitivity_mode_name(report.mode)},
              {"metric", to_json(report.metric)},
              {"grid", report.grid},
              {"seeds", report.seeds},
              {"baseline", group_map(report.baseline)},
              {"group_sizes", report.group_sizes},
              {"majority", report.majority},
              {"minority", report.minority},
              {"summary", summary},
              {"cells", cells}};
}

Json to_json(const RankingResult& result) {
  Json pk = Json::object();
  for (const auto& [k, v] : result.precision_at_k) pk[std::to_string(k)] = v;
  return Json{{"method", result.method},
              {"order", result.order},
              {"scores", result.scores},
              {"precision_at_k", pk},
              {"ground_truth", result.ground_truth}};
}

Json to_json(const RelabelOutcome& outcome) {
  return Json{{"before", to_json(outcome.before)},
              {"after", to_json(outcome.after)},
              {"audited_before", outcome.audited_before},
              {"audited_after", outcome.audited_after},
              {"train_risk_before", outcome.train_risk_before},
              {"train_risk_after", outcome.train_risk_after},
              {"relabeled", outcome.relabeled},
              {"updated_model", to_json(outcome.updated)}};
}

std::string sensitivity_csv(const SensitivityReport& report) {
  std::ostringstream os;
  os << "mode,metric,group,fraction,seed,valid,flipped,value,percent_change\n";
  const std::string mode = sensitivity_mode_name(report.mode);
  const std::string metric = report.metric.name();
  for (const auto& c : report.cells) {
    for (const auto& [g, base] : report.baseline) {
      (void)base;
      os << mode << ',' << metric << ',' << g << ',' << format_double(c.fraction) << ',' << c.seed
         << ',' << (c.valid ? 1 : 0) << ',' << c.flipped << ',';
      if (auto it = c.values.find(g); it != c.values.end()) os << format_double(it->second);
      os << ',';
      if (auto it = c.percent_change.find(g); it != c.percent_change.end()) {
        os << format_double(it->second);
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string ranking_csv(const RankingResult& result, const Dataset& train) {
  const std::unordered_set<std::size_t> truth(result.ground_truth.begin(), result.ground_truth.end());
  std::ostringstream os;
  os << "rank,train_index,method,score,group,label,flipped\n";
  for (std::size_t r = 0; r < result.order.size(); ++r) {
    const std::size_t i = result.order[r];
    os << r + 1 << ',' << i << ',' << result.method << ',' << format_double(result.scores[i]) << ','
       << train[i].group << ',' << train[i].label << ',' << (truth.count(i) ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string scores_csv(std::span<const InfluenceScore> scores, const Dataset& train) {
  std::ostringstream os;
  os << "train_index,estimator,raw_value,canonical_score,group,label\n";
  for (const auto& s : scores) {
    const Sample& z = train[s.train_index];
    const bool label_estimator =
        s.estimator == Estimator::PertLabelLoss || s.estimator == Estimator::PertLabelDisparity;
    os << s.train_index << ',' << estimator_name(s.estimator) << ',' << format_double(s.value) << ',';
    if (label_estimator) os << format_double(canonical_score(s.value, z.label));
    os << ',' << z.group << ',' << z.label << '\n';
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DomainError("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace dinf
