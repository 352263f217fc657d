#include "dinf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "dinf/errors.hpp"

namespace dinf {

Dataset::Dataset(std::vector<Sample> samples, std::size_t feature_dim, int num_groups)
    : samples_(std::move(samples)), feature_dim_(feature_dim), num_groups_(num_groups) {
  if (num_groups_ < 1) throw DomainError("dataset needs at least one group");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.features.size() != feature_dim_) {
      throw DomainError("sample " + std::to_string(i) + " has " +
                        std::to_string(s.features.size()) + " features, expected " +
                        std::to_string(feature_dim_));
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) {
        throw DomainError("sample " + std::to_string(i) + " has a non-finite feature");
      }
    }
    if (s.label != 0 && s.label != 1) {
      throw DomainError("sample " + std::to_string(i) + " has non-binary label " +
                        std::to_string(s.label));
    }
    if (s.group < 0 || s.group >= num_groups_) {
      throw DomainError("sample " + std::to_string(i) + " has group " +
                        std::to_string(s.group) + " outside [0, " +
                        std::to_string(num_groups_) + ")");
    }
  }
}

std::vector<std::size_t> Dataset::group_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_groups_), 0);
  for (const Sample& s : samples_) ++counts[static_cast<std::size_t>(s.group)];
  return counts;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples_.size());
  for (const Sample& s : samples_) out.push_back(s.label);
  return out;
}

void Dataset::require_all_groups_present() const {
  const auto counts = group_counts();
  for (std::size_t g = 0; g < counts.size(); ++g) {
    if (counts[g] == 0) {
      throw DomainError("group " + std::to_string(g) + " has no samples");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples_.size()) throw DomainError("subset index out of range");
    out.push_back(samples_[i]);
  }
  Dataset d;
  d.samples_ = std::move(out);
  d.feature_dim_ = feature_dim_;
  d.num_groups_ = num_groups_;
  return d;
}

Dataset Dataset::filter_group(int group) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (samples_[i].group == group) idx.push_back(i);
  }
  return subset(idx);
}

Dataset Dataset::without(std::size_t index) const {
  if (index >= samples_.size()) throw DomainError("index out of range");
  Dataset d = *this;
  d.samples_.erase(d.samples_.begin() + static_cast<std::ptrdiff_t>(index));
  return d;
}

Dataset Dataset::with_label(std::size_t index, int label) const {
  if (index >= samples_.size()) throw DomainError("index out of range");
  if (label != 0 && label != 1) throw DomainError("label must be 0 or 1");
  Dataset d = *this;
  d.samples_[index].label = label;
  return d;
}

Eigen::MatrixXd Dataset::design_matrix() const {
  const auto n = static_cast<Eigen::Index>(samples_.size());
  const auto d = static_cast<Eigen::Index>(feature_dim_);
  Eigen::MatrixXd x(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = samples_[static_cast<std::size_t>(i)].features;
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = f[static_cast<std::size_t>(j)];
    x(i, d) = 1.0;
  }
  return x;
}

Eigen::VectorXd Dataset::label_vector() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples_.size()));
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = samples_[i].label;
  }
  return y;
}

Eigen::VectorXd augmented(const Sample& s) {
  const auto d = static_cast<Eigen::Index>(s.features.size());
  Eigen::VectorXd x(d + 1);
  for (Eigen::Index j = 0; j < d; ++j) x(j) = s.features[static_cast<std::size_t>(j)];
  x(d) = 1.0;
  return x;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_row(line);
  for (auto& h : header) h = trim(h);

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);

  auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw SchemaError(path.string() + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t label_col = require(schema.label_column);
  const std::size_t group_col = require(schema.group_column);

  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != label_col && i != group_col) feature_cols.push_back(i);
    }
  } else {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(require(name));
  }
  if (feature_cols.empty()) throw SchemaError(path.string() + ": no feature columns");

  std::vector<Sample> samples;
  int max_group = -1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw ParseError(row, "expected " + std::to_string(header.size()) + " cells, found " +
                                std::to_string(cells.size()));
    }
    Sample s;
    s.features.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v)) {
        throw ParseError(row, "column '" + header[c] + "' is not a finite number: '" +
                                  cells[c] + "'");
      }
      s.features.push_back(v);
    }
    if (!parse_number(cells[label_col], s.label) || (s.label != 0 && s.label != 1)) {
      throw ParseError(row, "label must be 0 or 1, found '" + cells[label_col] + "'");
    }
    if (!parse_number(cells[group_col], s.group) || s.group < 0) {
      throw ParseError(row, "group must be a non-negative integer, found '" +
                                cells[group_col] + "'");
    }
    max_group = std::max(max_group, s.group);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw SizeError(path.string() + ": no data rows");

  Dataset data(std::move(samples), feature_cols.size(), max_group + 1);
  data.require_all_groups_present();
  return data;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t j = 0; j < data.feature_dim(); ++j) out << 'x' << j << ',';
  out << "label,group\n";
  for (const Sample& s : data.samples()) {
    for (double v : s.features) out << format_double(v) << ',';
    out << s.label << ',' << s.group << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Splitting and corruption

DataSplit split(const Dataset& data, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 10) throw SizeError("split needs at least 10 samples, got " + std::to_string(n));
  const std::size_t n_test = (3 * n + 5) / 10;     // round(0.30 n)
  const std::size_t n_val = (14 * n + 50) / 100;   // round(0.20 * 0.70 n)
  if (n_test == 0 || n_val == 0 || n_test + n_val >= n) {
    throw SizeError("split cannot populate train/val/test with n = " + std::to_string(n));
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  DataSplit out;
  out.test_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.val_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test),
                         perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  out.train_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val),
                           perm.end());
  for (auto* v : {&out.train_indices, &out.val_indices, &out.test_indices}) {
    std::sort(v->begin(), v->end());
  }
  out.train = data.subset(out.train_indices);
  out.val = data.subset(out.val_indices);
  out.test = data.subset(out.test_indices);
  return out;
}

std::size_t flip_count(double fraction, std::size_t pool_size) {
  // The nudge keeps products like 0.15 * 10 from rounding down.
  const double exact = fraction * static_cast<double>(pool_size);
  return static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
}

std::pair<Dataset, FlipRecord> flip_labels(const Dataset& data, double fraction,
                                           std::uint64_t seed, FlipScope scope) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw DomainError("flip fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!scope.group || data[i].group == *scope.group) pool.push_back(i);
  }
  const std::size_t count = std::min(flip_count(fraction, pool.size()), pool.size());
  if (pool.empty() && fraction > 0.0) {
    throw DomainError("flip pool is empty");
  }

  // Partial Fisher-Yates: draw i is independent of `count`, so a larger
  // fraction extends the flip set of a smaller one.
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }

  FlipRecord record;
  record.fraction = fraction;
  record.seed = seed;
  record.flipped_indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(record.flipped_indices.begin(), record.flipped_indices.end());
  return {apply_flips(data, record), std::move(record)};
}

Dataset apply_flips(const Dataset& data, const FlipRecord& record) {
  std::vector<Sample> samples(data.samples().begin(), data.samples().end());
  for (std::size_t i : record.flipped_indices) {
    if (i >= samples.size()) throw DomainError("flip index out of range");
    samples[i].label = 1 - samples[i].label;
  }
  return Dataset(std::move(samples), data.feature_dim(), data.num_groups());
}

Dataset make_synthetic_group_task(std::size_t n, std::size_t d, double epsilon_group,
                                  double separation, std::uint64_t seed,
                                  const SyntheticOptions& options) {
  if (n == 0 || n % 2 != 0) throw DomainError("synthetic task needs a positive even n");
  if (d == 0) throw DomainError("synthetic task needs d >= 1");
  if (!(epsilon_group >= 0.0 && epsilon_group <= 0.5)) {
    throw DomainError("epsilon_group must lie in [0, 1/2]");
  }
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw DomainError("separation must be finite and non-negative");
  }

  const std::size_t half = n / 2;
  const std::size_t minority = flip_count(2.0 * epsilon_group, n);
  if (minority == 0 || minority >= n) {
    throw DomainError("epsilon_group leaves one group empty");
  }
  std::size_t minority_pos = std::min(flip_count(0.5 + epsilon_group, minority), half);
  std::size_t minority_neg = minority - minority_pos;
  if (minority_neg > half) {
    minority_neg = half;
    minority_pos = minority - half;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Class direction u and an orthogonal group direction v.
  Eigen::VectorXd u(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = gauss(rng);
  u.normalize();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(u.size());
  if (d >= 2) {
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = gauss(rng);
    v -= v.dot(u) * u;
    v.normalize();
  }

  std::vector<int> labels(n, 0);
  std::fill(labels.begin() + static_cast<std::ptrdiff_t>(half), labels.end(), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < n; ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::vector<int> groups(n, 0);
  for (std::size_t k = 0; k < minority_neg; ++k) groups[neg[k]] = 1;
  for (std::size_t k = 0; k < minority_pos; ++k) groups[pos[k]] = 1;

  std::vector<Sample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = labels[i] == 1 ? 1.0 : -1.0;
    const bool in_minority = groups[i] == 1;
    const double noise = in_minority ? options.minority_noise_scale : 1.0;
    const double cls = in_minority ? options.minority_class_sign : 1.0;
    Eigen::VectorXd x = cls * sign * 0.5 * separation * u;
    if (in_minority) x += options.group_shift * v;
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += noise * gauss(rng);
    samples[i].features.assign(x.data(), x.data() + x.size());
    samples[i].label = labels[i];
    samples[i].group = groups[i];
  }

  Dataset data(std::move(samples), d, 2);
  data.require_all_groups_present();
  return data;
}

}  // namespace dinf
