#pragma once

#include <span>
#include <vector>

namespace dinf {

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> v);

/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> v);

/// Spearman rank correlation (Pearson correlation of average ranks).
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace dinf
