#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

#include "dinf/audit.hpp"
#include "dinf/data.hpp"
#include "dinf/influence.hpp"
#include "dinf/metrics.hpp"
#include "dinf/model.hpp"

namespace dinf {

using Json = nlohmann::ordered_json;

/// Version stamped into every report.
inline constexpr int kSchemaVersion = 1;

Json to_json(const ModelParams& model);
ModelParams model_from_json(const Json& j);

Json to_json(const FlipRecord& record);
FlipRecord flip_record_from_json(const Json& j);

Json to_json(const MetricKind& metric);
Json to_json(const GroupReport& report);
Json to_json(const SensitivityReport& report);
Json to_json(const RankingResult& result);
Json to_json(const RelabelOutcome& outcome);

/// One row per group x fraction x seed:
/// mode,metric,group,fraction,seed,valid,flipped,value,percent_change
std::string sensitivity_csv(const SensitivityReport& report);

/// One row per training point in rank order:
/// rank,train_index,method,score,group,label,flipped
std::string ranking_csv(const RankingResult& result, const Dataset& train);

/// One row per training point:
/// train_index,estimator,raw_value,canonical_score,group,label
/// The canonical score is filled for the label-perturbation estimators only.
std::string scores_csv(std::span<const InfluenceScore> scores, const Dataset& train);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Pretty-printed with a trailing newline. Throws DomainError when the file
/// cannot be written.
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
/// Throws SchemaError on malformed JSON and DomainError when unreadable.
Json read_json(const std::filesystem::path& path);

}  // namespace dinf
