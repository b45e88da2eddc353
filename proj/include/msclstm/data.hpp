#pragma once

// Tabular KPI ingestion: CSV → encoded feature matrix, z-score
// normalization, stratified splitting and SMOTE oversampling.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "msclstm/csv.hpp"
#include "msclstm/errors.hpp"
#include "msclstm/random.hpp"
#include "msclstm/tensor.hpp"

namespace msclstm {

struct DatasetSchema {
  std::vector<std::string> feature_columns;  // empty: every non-label column
  std::vector<std::string> categorical_columns;
  std::string label_column;      // empty: last column
  std::string timestamp_column;  // empty: none

  static DatasetSchema from_json(const nlohmann::json& j) {
    DatasetSchema s;
    try {
      if (!j.is_object()) throw SchemaError("schema config must be a JSON object");
      for (const auto& [key, _] : j.items()) {
        if (key != "feature_columns" && key != "categorical_columns" && key != "label_column" &&
            key != "timestamp_column") {
          throw SchemaError("schema config: unknown key '" + key + "'");
        }
      }
      if (j.contains("feature_columns") && !j["feature_columns"].is_null())
        s.feature_columns = j["feature_columns"].get<std::vector<std::string>>();
      if (j.contains("categorical_columns") && !j["categorical_columns"].is_null())
        s.categorical_columns = j["categorical_columns"].get<std::vector<std::string>>();
      if (j.contains("label_column") && !j["label_column"].is_null())
        s.label_column = j["label_column"].get<std::string>();
      if (j.contains("timestamp_column") && !j["timestamp_column"].is_null())
        s.timestamp_column = j["timestamp_column"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("schema config: ") + e.what());
    }
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["feature_columns"] = feature_columns.empty() ? nlohmann::json(nullptr)
                                                   : nlohmann::json(feature_columns);
    j["categorical_columns"] = categorical_columns;
    j["label_column"] = label_column.empty() ? nlohmann::json(nullptr) : nlohmann::json(label_column);
    j["timestamp_column"] =
        timestamp_column.empty() ? nlohmann::json(nullptr) : nlohmann::json(timestamp_column);
    return j;
  }
};

inline DatasetSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema config " + path.string() + ": " + e.what());
  }
  return DatasetSchema::from_json(j);
}

/// FNV-1a-64 over the comma-joined post-encoding feature names.
inline std::uint64_t schema_fingerprint(const std::vector<std::string>& feature_names) {
  std::string joined;
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    if (i) joined.push_back(',');
    joined += feature_names[i];
  }
  return fnv1a64(joined);
}

struct NormStat {
  double mean = 0.0;
  double std = 1.0;
};
using NormStats = std::vector<NormStat>;

inline constexpr double kDegenerateStd = 1e-12;

struct Dataset {
  Tensor<double> X;  // N×F
  std::vector<int> y;
  std::vector<std::string> feature_names;
  NormStats norm;  // empty until normalized
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return y.size(); }
  std::size_t features() const { return feature_names.size(); }
  std::uint64_t fingerprint() const { return schema_fingerprint(feature_names); }
  std::size_t count(int label) const {
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), label));
  }
};

/// Rows `idx` of `ds`, in the given order.
inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw DataError("empty subset");
  const std::size_t F = ds.features();
  Dataset out;
  out.X = Tensor<double>({idx.size(), F});
  out.y.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(ds.X.raw() + idx[r] * F, F, out.X.raw() + r * F);
    out.y.push_back(ds.y[idx[r]]);
  }
  out.feature_names = ds.feature_names;
  out.norm = ds.norm;
  out.dropped_rows = ds.dropped_rows;
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<int> parse_digits(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// "HH:MM[:SS]" → fractional hour.
inline std::optional<double> parse_clock(std::string_view s) {
  std::vector<std::string_view> parts;
  for (std::size_t pos = 0;;) {
    const std::size_t colon = s.find(':', pos);
    parts.push_back(s.substr(pos, colon == std::string_view::npos ? colon : colon - pos));
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
  const auto h = parse_digits(parts[0]), m = parse_digits(parts[1]);
  if (!h || !m || *h < 0 || *h > 23 || *m < 0 || *m > 59) return std::nullopt;
  double sec = 0;
  if (parts.size() == 3) {
    const auto sv = parse_number(parts[2]);
    if (!sv || *sv < 0 || *sv >= 61) return std::nullopt;
    sec = *sv;
  }
  return *h + *m / 60.0 + sec / 3600.0;
}

/// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DDTHH:MM[:SS]" and
/// "HH:MM[:SS]". Returns (hour of day, day of week Monday=0); a bare clock
/// time has day of week 0.
inline std::optional<std::pair<double, double>> parse_timestamp(std::string_view s) {
  s = trim(s);
  if (s.find('-') == std::string_view::npos) {
    const auto h = parse_clock(s);
    if (!h) return std::nullopt;
    return std::pair{*h, 0.0};
  }
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto yy = parse_digits(s.substr(0, 4)), mm = parse_digits(s.substr(5, 2)),
             dd = parse_digits(s.substr(8, 2));
  if (!yy || !mm || !dd) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{*yy},
                                        std::chrono::month{static_cast<unsigned>(*mm)},
                                        std::chrono::day{static_cast<unsigned>(*dd)}};
  if (!ymd.ok()) return std::nullopt;
  const unsigned iso = std::chrono::weekday{std::chrono::sys_days{ymd}}.iso_encoding();
  double hour = 0;
  if (s.size() > 10) {
    if (s[10] != ' ' && s[10] != 'T') return std::nullopt;
    const auto h = parse_clock(s.substr(11));
    if (!h) return std::nullopt;
    hour = *h;
  }
  return std::pair{hour, static_cast<double>(iso - 1)};
}

inline std::optional<int> parse_label(std::string_view s) {
  const auto v = parse_number(s);
  if (!v) return std::nullopt;
  if (*v == 0.0) return 0;
  if (*v == 1.0) return 1;
  return std::nullopt;
}

}  // namespace detail

struct LoadOptions {
  bool require_label = true;
};

/// Parses a CSV into an encoded, un-normalized Dataset. Timestamp columns
/// become "<col>.hour" and "<col>.dow"; categorical columns become one
/// "<col>=<value>" indicator per value in first-appearance order. Rows with
/// a wrong field count, an unparseable numeric or timestamp, or a label other
/// than 0/1 are dropped and counted. Without a label column (allowed only when
/// `require_label` is false) every y is 0.
inline Dataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema,
                        LoadOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header) || (header.size() == 1 && header[0].empty()))
    throw DataError(path.string() + ": no header row");
  if (header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  for (auto& h : header) h = std::string(detail::trim(h));

  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  std::optional<std::size_t> label_col;
  if (schema.label_column.empty()) {
    if (opts.require_label) label_col = header.size() - 1;
  } else {
    label_col = column(schema.label_column);
    if (!label_col && opts.require_label)
      throw SchemaError("label column '" + schema.label_column + "' not found in " + path.string());
  }

  std::vector<std::string> feature_cols = schema.feature_columns;
  if (feature_cols.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (!label_col || c != *label_col) feature_cols.push_back(header[c]);
  }
  if (feature_cols.empty()) throw SchemaError("no feature columns");

  enum class Kind { numeric, categorical, timestamp };
  struct Col {
    std::size_t index;
    Kind kind;
    std::string name;
  };
  std::vector<Col> cols;
  for (const auto& name : feature_cols) {
    const auto idx = column(name);
    if (!idx) throw SchemaError("feature column '" + name + "' not found in " + path.string());
    if (label_col && *idx == *label_col)
      throw SchemaError("label column '" + name + "' cannot also be a feature");
    Kind kind = Kind::numeric;
    if (std::find(schema.categorical_columns.begin(), schema.categorical_columns.end(), name) !=
        schema.categorical_columns.end())
      kind = Kind::categorical;
    if (name == schema.timestamp_column) {
      if (kind == Kind::categorical)
        throw SchemaError("column '" + name + "' is both categorical and timestamp");
      kind = Kind::timestamp;
    }
    cols.push_back({*idx, kind, name});
  }
  for (const auto& c : schema.categorical_columns) {
    if (std::find(feature_cols.begin(), feature_cols.end(), c) == feature_cols.end())
      throw SchemaError("categorical column '" + c + "' is not a feature column");
  }
  if (!schema.timestamp_column.empty() &&
      std::find(feature_cols.begin(), feature_cols.end(), schema.timestamp_column) ==
          feature_cols.end())
    throw SchemaError("timestamp column '" + schema.timestamp_column + "' is not a feature column");

  // Pass 1: parse rows, keeping categorical values as strings.
  struct Row {
    std::vector<double> numeric;
    std::vector<std::string> categorical;
    int label;
  };
  std::vector<Row> rows;
  std::size_t dropped = 0;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;  // blank line
    if (fields.size() != header.size() || reader.unterminated()) {
      ++dropped;
      continue;
    }
    Row row{{}, {}, 0};
    bool ok = true;
    if (label_col) {
      const auto lab = detail::parse_label(fields[*label_col]);
      ok = lab.has_value();
      if (ok) row.label = *lab;
    }
    for (const auto& c : cols) {
      if (!ok) break;
      switch (c.kind) {
        case Kind::numeric: {
          const auto v = detail::parse_number(fields[c.index]);
          ok = v.has_value();
          if (ok) row.numeric.push_back(*v);
          break;
        }
        case Kind::timestamp: {
          const auto ts = detail::parse_timestamp(fields[c.index]);
          ok = ts.has_value();
          if (ok) {
            row.numeric.push_back(ts->first);
            row.numeric.push_back(ts->second);
          }
          break;
        }
        case Kind::categorical:
          row.categorical.emplace_back(detail::trim(fields[c.index]));
          break;
      }
    }
    if (!ok) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw DataError(path.string() + ": no usable rows (" + std::to_string(dropped) + " dropped)");

  // Category vocabularies in first-appearance order over kept rows.
  std::vector<std::vector<std::string>> vocab;
  for (const auto& c : cols)
    if (c.kind == Kind::categorical) vocab.emplace_back();
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.categorical.size(); ++k) {
      auto& v = vocab[k];
      if (std::find(v.begin(), v.end(), row.categorical[k]) == v.end())
        v.push_back(row.categorical[k]);
    }
  }

  Dataset ds;
  {
    std::size_t k = 0;
    for (const auto& c : cols) {
      switch (c.kind) {
        case Kind::numeric:
          ds.feature_names.push_back(c.name);
          break;
        case Kind::timestamp:
          ds.feature_names.push_back(c.name + ".hour");
          ds.feature_names.push_back(c.name + ".dow");
          break;
        case Kind::categorical:
          for (const auto& v : vocab[k]) ds.feature_names.push_back(c.name + "=" + v);
          ++k;
          break;
      }
    }
  }
  const std::size_t N = rows.size(), F = ds.feature_names.size();
  ds.X = Tensor<double>({N, F});
  ds.y.reserve(N);
  for (std::size_t r = 0; r < N; ++r) {
    double* out = ds.X.raw() + r * F;
    std::size_t num = 0, cat = 0;
    for (const auto& c : cols) {
      switch (c.kind) {
        case Kind::numeric:
          *out++ = rows[r].numeric[num++];
          break;
        case Kind::timestamp:
          *out++ = rows[r].numeric[num++];
          *out++ = rows[r].numeric[num++];
          break;
        case Kind::categorical: {
          const auto& v = vocab[cat];
          const auto hit = std::find(v.begin(), v.end(), rows[r].categorical[cat]) - v.begin();
          for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(v.size()); ++j)
            *out++ = j == hit ? 1.0 : 0.0;
          ++cat;
          break;
        }
      }
    }
    ds.y.push_back(rows[r].label);
  }
  ds.dropped_rows = dropped;
  return ds;
}

/// Applies z-score statistics in place. Columns whose std is below
/// kDegenerateStd are only centered.
inline void apply_norm(const NormStats& stats, Dataset& ds) {
  const std::size_t F = ds.features();
  if (stats.size() != F)
    throw SchemaError("normalization stats cover " + std::to_string(stats.size()) +
                      " features, dataset has " + std::to_string(F));
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    double* row = ds.X.raw() + r * F;
    for (std::size_t c = 0; c < F; ++c) {
      const double centered = row[c] - stats[c].mean;
      row[c] = stats[c].std < kDegenerateStd ? centered : centered / stats[c].std;
    }
  }
  ds.norm = stats;
}

/// Population mean and std per column, rounded to float so that stats read
/// back from a checkpoint reproduce the training-time transform exactly.
inline NormStats compute_norm(const Dataset& ds) {
  const std::size_t N = ds.rows(), F = ds.features();
  NormStats stats(F);
  for (std::size_t c = 0; c < F; ++c) {
    double sum = 0;
    for (std::size_t r = 0; r < N; ++r) sum += ds.X.at(r, c);
    const double mean = sum / static_cast<double>(N);
    double ss = 0;
    for (std::size_t r = 0; r < N; ++r) {
      const double d = ds.X.at(r, c) - mean;
      ss += d * d;
    }
    stats[c].mean = static_cast<float>(mean);
    stats[c].std = static_cast<float>(std::sqrt(ss / static_cast<double>(N)));
  }
  return stats;
}

inline NormStats normalize(Dataset& train) {
  NormStats stats = compute_norm(train);
  apply_norm(stats, train);
  return stats;
}

inline void require_both_classes(const Dataset& ds, const char* what) {
  for (int label : {0, 1}) {
    const std::size_t n = ds.count(label);
    if (n < 2)
      throw DataError(std::string(what) + ": class " + std::to_string(label) + " has " +
                      std::to_string(n) + " sample(s), need at least 2");
  }
}

struct Split {
  Dataset train, val;
};

/// Per-class proportional split. Each class contributes
/// round(n_c · val_fraction) rows to validation, clamped to [1, n_c − 1].
/// Both index sets keep the original row order.
inline Split stratified_split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ValidationError("val_fraction must be in (0, 1), got " + csv::number(val_fraction));
  require_both_classes(ds, "stratified_split");
  Rng rng(seed);
  std::vector<std::size_t> train_idx, val_idx;
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.rows(); ++i)
      if (ds.y[i] == label) idx.push_back(i);
    rng.shuffle(idx);
    const double want = std::round(static_cast<double>(idx.size()) * val_fraction);
    const std::size_t n_val =
        std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, idx.size() - 1);
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  return {subset(ds, train_idx), subset(ds, val_idx)};
}

inline constexpr std::size_t kSmoteNeighbors = 5;

/// Indices (into `points`) of the k nearest other points of points[i] by
/// Euclidean distance; ties broken by lower index.
inline std::vector<std::size_t> nearest_neighbors(const Tensor<double>& X,
                                                  const std::vector<std::size_t>& points,
                                                  std::size_t i, std::size_t k) {
  const std::size_t F = X.dim(1);
  const double* xi = X.raw() + points[i] * F;
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(points.size() - 1);
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == i) continue;
    const double* xj = X.raw() + points[j] * F;
    double s = 0;
    for (std::size_t c = 0; c < F; ++c) s += (xi[c] - xj[c]) * (xi[c] - xj[c]);
    d.emplace_back(s, j);
  }
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t n = 0; n < k; ++n) out[n] = d[n].second;
  return out;
}

/// Oversamples the minority class until both classes have equal counts.
/// Originals are kept unchanged as a prefix; synthetic rows follow. Seeds are
/// minority points in round-robin order; the neighbor is uniform among the
/// seed's k nearest minority points (k capped at minority size − 1).
inline Dataset smote(const Dataset& train, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("smote: k must be at least 1");
  const std::size_t n0 = train.count(0), n1 = train.count(1);
  if (n0 == 0 || n1 == 0) throw DataError("smote: dataset has a single class");
  const int minority = n1 < n0 ? 1 : 0;
  const std::size_t m = std::min(n0, n1), need = std::max(n0, n1) - m;
  if (m < 2) throw DataError("smote: minority class has a single sample");

  std::vector<std::size_t> points;
  for (std::size_t i = 0; i < train.rows(); ++i)
    if (train.y[i] == minority) points.push_back(i);

  const std::size_t F = train.features(), N = train.rows();
  Dataset out;
  out.X = Tensor<double>({N + need, F});
  std::copy_n(train.X.raw(), N * F, out.X.raw());
  out.y = train.y;
  out.y.resize(N + need, minority);
  out.feature_names = train.feature_names;
  out.norm = train.norm;
  out.dropped_rows = train.dropped_rows;

  std::vector<std::vector<std::size_t>> neighbors(std::min(m, need));
  Rng rng(seed);
  for (std::size_t s = 0; s < need; ++s) {
    const std::size_t i = s % m;
    if (neighbors[i].empty()) neighbors[i] = nearest_neighbors(train.X, points, i, k);
    const std::size_t j = neighbors[i][rng.index(neighbors[i].size())];
    const double u = rng.uniform();
    const double* xi = train.X.raw() + points[i] * F;
    const double* xj = train.X.raw() + points[j] * F;
    double* dst = out.X.raw() + (N + s) * F;
    for (std::size_t c = 0; c < F; ++c) dst[c] = xi[c] + u * (xj[c] - xi[c]);
  }
  return out;
}

}  // namespace msclstm
