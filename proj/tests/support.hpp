#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numerical code; only data containers are shared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dinf/data.hpp"
#include "dinf/model.hpp"

namespace oracle {

/// Random dataset with standard normal features, random labels and every
/// group present.
inline dinf::Dataset random_dataset(std::size_t n, std::size_t d, int groups, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin;
  std::uniform_int_distribution<int> group(0, groups - 1);
  std::vector<dinf::Sample> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].features.resize(d);
    for (auto& v : s[i].features) v = normal(rng);
    s[i].label = coin(rng) ? 1 : 0;
    s[i].group = i < static_cast<std::size_t>(groups) ? static_cast<int>(i) : group(rng);
  }
  return dinf::Dataset(std::move(s), d, groups);
}

inline Eigen::VectorXd random_vector(std::size_t size, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(size));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

/// The first `n_train` points of a seeded shuffle, and the rest.
inline std::pair<dinf::Dataset, dinf::Dataset> holdout(const dinf::Dataset& full, std::size_t n_train,
                                                       std::uint64_t seed) {
  std::vector<std::size_t> idx(full.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {full.subset(a), full.subset(b)};
}

/// Scalar long-double reimplementation of the ridge logistic risk.
inline double risk(const Eigen::VectorXd& w, double ridge, const dinf::Dataset& data) {
  const std::size_t d = data.feature_dim();
  long double total = 0.0L;
  for (const auto& s : data.samples()) {
    long double z = w[static_cast<Eigen::Index>(d)];
    for (std::size_t k = 0; k < d; ++k) z += w[static_cast<Eigen::Index>(k)] * s.features[k];
    // log(1 + e^z) - y z, written two ways depending on the sign of z.
    const long double log1pexp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += log1pexp - s.label * z;
  }
  long double pen = 0.0L;
  for (std::size_t k = 0; k < d; ++k) pen += w[static_cast<Eigen::Index>(k)] * w[static_cast<Eigen::Index>(k)];
  return static_cast<double>(total / data.size() + 0.5L * ridge * pen);
}

inline double probability(const Eigen::VectorXd& w, const std::vector<double>& x) {
  long double z = w[w.size() - 1];
  for (std::size_t k = 0; k < x.size(); ++k) z += w[static_cast<Eigen::Index>(k)] * x[k];
  return static_cast<double>(1.0L / (1.0L + std::exp(-z)));
}

/// Central differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Central differences of a vector function, one column per coordinate.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::MatrixXd J(x.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    J.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return J;
}

inline double relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

/// Binned ECE by explicit interval membership: bin m holds (m-1)/M < p <= m/M,
/// with p = 0 in bin 1.
inline double ece(const std::vector<double>& p, const std::vector<int>& y, int bins) {
  double total = 0.0;
  for (int m = 1; m <= bins; ++m) {
    const double lo = static_cast<double>(m - 1) / bins;
    const double hi = static_cast<double>(m) / bins;
    double conf = 0.0, pos = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool in = (p[i] > lo && p[i] <= hi) || (m == 1 && p[i] == 0.0);
      if (!in) continue;
      conf += p[i];
      pos += y[i];
      ++count;
    }
    if (count > 0) total += std::abs(conf - pos) / static_cast<double>(p.size());
  }
  return total;
}

/// Spearman correlation with average ranks, computed by pairwise counting.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0.0, equal = 0.0;
      for (double u : v) {
        less += u < v[i];
        equal += u == v[i];
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Round half up of f * pool, computed on integers when f is a multiple of
/// 1/1000.
inline std::size_t rounded_count(int permille, std::size_t pool) {
  return (static_cast<std::size_t>(permille) * pool + 500) / 1000;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dinf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace oracle
