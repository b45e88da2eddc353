#pragma once

// Independent checkers shared by the unit and acceptance suites.

#include <algorithm>
#include <atomic>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "msclstm/data.hpp"
#include "msclstm/random.hpp"

namespace msclstm::oracle {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("msclstm-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Seeded two-class Gaussian fixture with the given counts.
inline Dataset gaussian_fixture(std::size_t n0, std::size_t n1, std::size_t F, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.X = Tensor<double>({n0 + n1, F});
  for (std::size_t r = 0; r < n0 + n1; ++r) {
    const int label = r < n0 ? 0 : 1;
    ds.y.push_back(label);
    for (std::size_t c = 0; c < F; ++c) ds.X.at(r, c) = rng.normal() + (label ? 1.5 : 0.0) * (c % 2 ? -1 : 1);
  }
  for (std::size_t c = 0; c < F; ++c) ds.feature_names.push_back("f" + std::to_string(c));
  return ds;
}

struct SmoteCheck {
  bool counts_equal = false;
  bool prefix_preserved = false;
  bool labels_minority = false;
  double worst_distance = 0.0;  // max over synthetic points of min segment distance
  std::size_t synthetic = 0;
  bool ok(double tol) const { return counts_equal && prefix_preserved && labels_minority && worst_distance < tol; }
};

/// Exhaustive verification of a SMOTE output against its input. Neighbor
/// sets admit every point at distance ≤ the k-th smallest, so the check
/// does not depend on how ties are broken.
inline SmoteCheck check_smote(const Dataset& in, const Dataset& out, std::size_t k) {
  SmoteCheck r;
  const std::size_t N = in.rows(), F = in.features();
  r.counts_equal = out.count(0) == out.count(1);
  r.prefix_preserved = out.rows() >= N &&
                       std::equal(in.y.begin(), in.y.end(), out.y.begin()) &&
                       std::memcmp(in.X.raw(), out.X.raw(), N * F * sizeof(double)) == 0;
  const int minority = in.count(1) < in.count(0) ? 1 : 0;
  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < N; ++i)
    if (in.y[i] == minority) pts.emplace_back(in.X.raw() + i * F, in.X.raw() + (i + 1) * F);
  const auto dist2 = [F](const double* a, const double* b) {
    double s = 0;
    for (std::size_t c = 0; c < F; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    return s;
  };
  const std::size_t m = pts.size(), keff = std::min(k, m - 1);
  std::vector<std::vector<std::size_t>> nbrs(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) d.push_back(dist2(pts[i].data(), pts[j].data()));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(keff - 1), d.end());
    const double cutoff = d[keff - 1];
    for (std::size_t j = 0; j < m; ++j)
      if (j != i && dist2(pts[i].data(), pts[j].data()) <= cutoff) nbrs[i].push_back(j);
  }
  r.labels_minority = true;
  r.synthetic = out.rows() - N;
  for (std::size_t s = N; s < out.rows(); ++s) {
    if (out.y[s] != minority) r.labels_minority = false;
    const double* p = out.X.raw() + s * F;
    double best = INFINITY;
    for (std::size_t i = 0; i < m && best > 0; ++i) {
      for (std::size_t j : nbrs[i]) {
        const double* a = pts[i].data();
        const double* b = pts[j].data();
        double num = 0, den = 0;
        for (std::size_t c = 0; c < F; ++c) {
          num += (p[c] - a[c]) * (b[c] - a[c]);
          den += (b[c] - a[c]) * (b[c] - a[c]);
        }
        const double u = den > 0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
        double d = 0;
        for (std::size_t c = 0; c < F; ++c) {
          const double e = p[c] - (a[c] + u * (b[c] - a[c]));
          d += e * e;
        }
        best = std::min(best, std::sqrt(d));
      }
    }
    r.worst_distance = std::max(r.worst_distance, best);
  }
  return r;
}

}  // namespace msclstm::oracle
