#pragma once

// Planted-rule KPI-like data. Each row draws a latent z ~ N(0, I₈); the
// label is 1 iff z₀ − z₂ + σ·e > t, with e ~ N(0, 1) and t set for the
// requested anomaly rate. Raw features are mean_k + scale_k·z_k, so the
// source and target domains differ only in their per-feature means and
// scales.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "msclstm/csv.hpp"
#include "msclstm/data.hpp"
#include "msclstm/random.hpp"

namespace msclstm {

enum class Domain { source, target };

struct SyntheticSpec {
  std::size_t rows = 10000;
  double anomaly_rate = 0.2;
  double noise = 0.05;
  Domain domain = Domain::source;
};

inline constexpr std::size_t kSyntheticFeatures = 8;

inline const std::array<std::string, kSyntheticFeatures>& synthetic_feature_names() {
  static const std::array<std::string, kSyntheticFeatures> names{
      "PRBUsageUL", "PRBUsageDL", "meanThr_DL", "meanThr_UL",
      "maxThr_DL",  "maxThr_UL",  "meanUE_DL",  "meanUE_UL"};
  return names;
}

struct DomainShape {
  std::array<double, kSyntheticFeatures> mean, scale;
};

inline DomainShape domain_shape(Domain d) {
  if (d == Domain::source)
    return {{12.0, 18.0, 1.6, 0.25, 9.0, 0.9, 1.1, 0.9}, {4.0, 6.0, 0.5, 0.08, 3.0, 0.3, 0.3, 0.25}};
  return {{20.0, 11.0, 2.9, 0.12, 15.0, 0.5, 1.9, 0.6}, {7.5, 3.5, 1.1, 0.05, 5.5, 0.2, 0.6, 0.15}};
}

/// Standard normal quantile by bisection on erfc; |error| < 1e-12.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile: p must be in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline Dataset synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.rows < 2) throw ConfigError("synthetic dataset needs at least 2 rows");
  if (!(spec.anomaly_rate > 0.0 && spec.anomaly_rate < 1.0))
    throw ConfigError("anomaly rate must be in (0, 1)");
  const DomainShape shape = domain_shape(spec.domain);
  const double t = normal_quantile(1.0 - spec.anomaly_rate) * std::sqrt(2.0 + spec.noise * spec.noise);
  Rng rng(seed);
  Dataset ds;
  ds.X = Tensor<double>({spec.rows, kSyntheticFeatures});
  ds.y.resize(spec.rows);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    std::array<double, kSyntheticFeatures> z;
    for (auto& v : z) v = rng.normal();
    const double e = rng.normal();
    ds.y[r] = z[0] - z[2] + spec.noise * e > t ? 1 : 0;
    for (std::size_t c = 0; c < kSyntheticFeatures; ++c) ds.X.at(r, c) = shape.mean[c] + shape.scale[c] * z[c];
  }
  const auto& names = synthetic_feature_names();
  ds.feature_names.assign(names.begin(), names.end());
  return ds;
}

/// Writes features then a trailing "Unusual" label column.
inline void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<std::string> row(ds.feature_names);
  row.push_back("Unusual");
  csv::write_row(out, row);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    row.clear();
    for (std::size_t c = 0; c < ds.features(); ++c) row.push_back(csv::number(ds.X.at(r, c)));
    row.push_back(std::to_string(ds.y[r]));
    csv::write_row(out, row);
  }
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace msclstm
