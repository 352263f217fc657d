#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dinf {

/// One labeled, group-annotated example z = (x, a, y).
struct Sample {
  std::vector<double> features;
  int label = 0;
  int group = 0;

  bool operator==(const Sample&) const = default;
};

/// An ordered collection of samples sharing a feature dimension.
///
/// Group ids live in [0, num_groups). Subsets produced by `subset` or
/// `filter_group` keep the parent's declared group count and may leave some
/// groups empty; datasets built from files or the synthetic generator are
/// checked with `require_all_groups_present`.
class Dataset {
 public:
  Dataset() = default;
  /// Throws DomainError on a ragged/non-finite feature, a non-binary label
  /// or a group id outside [0, num_groups).
  Dataset(std::vector<Sample> samples, std::size_t feature_dim, int num_groups);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  int num_groups() const noexcept { return num_groups_; }

  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::span<const Sample> samples() const noexcept { return samples_; }

  std::vector<std::size_t> group_counts() const;
  std::vector<int> labels() const;

  /// Throws DomainError when a declared group has no samples.
  void require_all_groups_present() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset filter_group(int group) const;
  Dataset without(std::size_t index) const;
  Dataset with_label(std::size_t index, int label) const;

  /// n x (d+1) matrix whose last column is the constant bias feature.
  Eigen::MatrixXd design_matrix() const;
  Eigen::VectorXd label_vector() const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Sample> samples_;
  std::size_t feature_dim_ = 0;
  int num_groups_ = 0;
};

/// The bias-augmented feature vector (x, 1).
Eigen::VectorXd augmented(const Sample& s);

/// Column names used to read and write datasets.
struct CsvSchema {
  /// Empty means "every column except label and group, in file order".
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  std::string group_column = "group";
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes a header row then one row per sample; reals use the shortest
/// round-trip representation so a reload is exact.
void write_csv(const std::filesystem::path& path, const Dataset& data);

struct DataSplit {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> test_indices;
};

/// 30% held-out test; of the remaining 70%, a fifth is validation
/// (sizes 56/14/30 for n = 100). Shuffle order depends only on `seed`.
DataSplit split(const Dataset& data, std::uint64_t seed);

/// Which samples are eligible for flipping.
struct FlipScope {
  std::optional<int> group;  ///< nullopt = all samples

  static FlipScope all() { return {}; }
  static FlipScope only(int g) { return {g}; }
};

struct FlipRecord {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> flipped_indices;  ///< sorted ascending

  bool operator==(const FlipRecord&) const = default;
};

/// round-half-up(fraction * pool_size)
std::size_t flip_count(double fraction, std::size_t pool_size);

/// Flips round(fraction * |pool|) labels drawn uniformly without replacement
/// from the scope's pool. For a fixed seed the flipped sets are nested in
/// `fraction`.
std::pair<Dataset, FlipRecord> flip_labels(const Dataset& data, double fraction,
                                           std::uint64_t seed,
                                           FlipScope scope = FlipScope::all());

/// Toggles the labels listed in `record`; applying it twice is the identity.
Dataset apply_flips(const Dataset& data, const FlipRecord& record);

/// Knobs of the synthetic two-group task beyond the positional arguments.
struct SyntheticOptions {
  /// Offset of minority-group features along a direction orthogonal to the
  /// class direction, in units of the noise standard deviation.
  double group_shift = 1.0;
  /// Noise standard deviation of minority-group features relative to the
  /// majority group.
  double minority_noise_scale = 1.0;
  /// Multiplies the class offset of minority samples; -1 inverts the class
  /// direction for that group.
  double minority_class_sign = 1.0;
};

/// Two Gaussian class clusters at +/- separation/2 along a random unit
/// direction, balanced labels, and a minority group holding round(2 eps n)
/// samples whose class mix is (1/2 - eps, 1/2 + eps) negatives/positives.
/// Group 1 is the minority whenever eps < 1/4.
Dataset make_synthetic_group_task(std::size_t n, std::size_t d, double epsilon_group,
                                  double separation, std::uint64_t seed,
                                  const SyntheticOptions& options = {});

}  // namespace dinf
