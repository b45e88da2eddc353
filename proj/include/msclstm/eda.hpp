#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "msclstm/csv.hpp"
#include "msclstm/data.hpp"
#include "msclstm/errors.hpp"
#include "msclstm/tensor.hpp"

namespace msclstm {

struct ClassDistribution {
  std::size_t counts[2] = {0, 0};
  double fractions[2] = {0.0, 0.0};
  std::size_t total() const { return counts[0] + counts[1]; }
};

inline ClassDistribution class_distribution(const std::vector<int>& y) {
  ClassDistribution d;
  for (int v : y) {
    if (v != 0 && v != 1) throw ValidationError("label outside {0,1}: " + std::to_string(v));
    ++d.counts[v];
  }
  if (y.empty()) throw DataError("class_distribution of an empty label vector");
  d.fractions[0] = static_cast<double>(d.counts[0]) / static_cast<double>(y.size());
  d.fractions[1] = static_cast<double>(d.counts[1]) / static_cast<double>(y.size());
  return d;
}

/// Population Pearson correlation of the columns of X (N×F). A pair that
/// involves a zero-variance column is 0 off the diagonal; the diagonal is 1.
inline Tensor<double> pearson_correlation(const Tensor<double>& X) {
  if (X.rank() != 2) throw DimensionError("pearson_correlation expects N×F, got " + shape_string(X.shape()));
  const std::size_t N = X.dim(0), F = X.dim(1);
  if (N < 2) throw DataError("pearson_correlation needs at least 2 rows");

  std::vector<double> mean(F, 0.0);
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t c = 0; c < F; ++c) mean[c] += X.at(r, c);
  for (auto& m : mean) m /= static_cast<double>(N);

  Tensor<double> centered({N, F});
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t c = 0; c < F; ++c) centered.at(r, c) = X.at(r, c) - mean[c];

  // Column-pair sums, upper triangle only; the lower is mirrored.
  Tensor<double> cov({F, F});
  for (std::size_t r = 0; r < N; ++r) {
    const double* row = centered.raw() + r * F;
    for (std::size_t a = 0; a < F; ++a)
      for (std::size_t b = a; b < F; ++b) cov.at(a, b) += row[a] * row[b];
  }

  Tensor<double> corr({F, F});
  for (std::size_t a = 0; a < F; ++a) {
    corr.at(a, a) = 1.0;
    for (std::size_t b = a + 1; b < F; ++b) {
      const double va = cov.at(a, a), vb = cov.at(b, b);
      double r = 0.0;
      if (va > 0.0 && vb > 0.0) r = std::clamp(cov.at(a, b) / std::sqrt(va * vb), -1.0, 1.0);
      corr.at(a, b) = r;
      corr.at(b, a) = r;
    }
  }
  return corr;
}

struct EdaReport {
  ClassDistribution classes;
  Tensor<double> correlation;
  std::vector<std::string> feature_names;
  std::size_t dropped_row_count = 0;
};

inline EdaReport eda_report(const Dataset& ds) {
  return {class_distribution(ds.y), pearson_correlation(ds.X), ds.feature_names, ds.dropped_rows};
}

/// Diverging map: −1 blue, 0 white, +1 red.
inline std::string correlation_color(double r) {
  r = std::clamp(r, -1.0, 1.0);
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(r))));
  char buf[8];
  if (r >= 0)
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", fade, fade);
  else
    std::snprintf(buf, sizeof buf, "#%02x%02xff", fade, fade);
  return buf;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string());
}

}  // namespace detail

inline nlohmann::json class_distribution_json(const EdaReport& r) {
  nlohmann::json j;
  j["counts"] = {{"0", r.classes.counts[0]}, {"1", r.classes.counts[1]}};
  j["fractions"] = {{"0", r.classes.fractions[0]}, {"1", r.classes.fractions[1]}};
  j["total"] = r.classes.total();
  j["dropped_row_count"] = r.dropped_row_count;
  return j;
}

inline std::string correlation_csv(const EdaReport& r) {
  std::ostringstream out;
  std::vector<std::string> row{""};
  row.insert(row.end(), r.feature_names.begin(), r.feature_names.end());
  csv::write_row(out, row);
  const std::size_t F = r.feature_names.size();
  for (std::size_t a = 0; a < F; ++a) {
    row.assign(1, r.feature_names[a]);
    for (std::size_t b = 0; b < F; ++b) row.push_back(csv::number(r.correlation.at(a, b)));
    csv::write_row(out, row);
  }
  return out.str();
}

/// F×F heatmap: one <rect> per cell and no other rects. The legend bar is
/// a gradient-filled path.
inline std::string correlation_svg(const EdaReport& r) {
  const std::size_t F = r.feature_names.size();
  const int cell = 28, label = 150, legend = 70;
  const int side = static_cast<int>(F) * cell;
  const int width = label + side + legend, height = label + side + 10;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"0\" x2=\"0\" y2=\"1\">"
       "<stop offset=\"0\" stop-color=\"#ff0000\"/><stop offset=\"0.5\" stop-color=\"#ffffff\"/>"
       "<stop offset=\"1\" stop-color=\"#0000ff\"/></linearGradient></defs>\n";
  for (std::size_t a = 0; a < F; ++a) {
    for (std::size_t b = 0; b < F; ++b) {
      const double v = r.correlation.at(a, b);
      s << "<rect class=\"cell\" x=\"" << label + static_cast<int>(b) * cell << "\" y=\""
        << label + static_cast<int>(a) * cell << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"" << correlation_color(v) << "\"><title>"
        << detail::xml_escape(r.feature_names[a]) << " / " << detail::xml_escape(r.feature_names[b])
        << ": " << csv::number(v) << "</title></rect>\n";
    }
  }
  for (std::size_t a = 0; a < F; ++a) {
    const int mid = label + static_cast<int>(a) * cell + cell / 2 + 4;
    s << "<text x=\"" << label - 4 << "\" y=\"" << mid << "\" text-anchor=\"end\">"
      << detail::xml_escape(r.feature_names[a]) << "</text>\n";
    s << "<text transform=\"translate(" << mid - 2 << "," << label - 4
      << ") rotate(-90)\">" << detail::xml_escape(r.feature_names[a]) << "</text>\n";
  }
  const int lx = label + side + 20;
  s << "<path d=\"M" << lx << ' ' << label << " h16 v" << side << " h-16 Z\" fill=\"url(#scale)\""
    << " stroke=\"#444\"/>\n";
  s << "<text x=\"" << lx + 20 << "\" y=\"" << label + 8 << "\">+1</text>\n";
  s << "<text x=\"" << lx + 20 << "\" y=\"" << label + side / 2 + 4 << "\">0</text>\n";
  s << "<text x=\"" << lx + 20 << "\" y=\"" << label + side << "\">-1</text>\n";
  s << "</svg>\n";
  return s.str();
}

/// Writes class_distribution.json, correlation.csv and correlation.svg.
inline void emit_eda(const EdaReport& r, const std::filesystem::path& out_dir) {
  detail::ensure_directory(out_dir);
  detail::write_text_file(out_dir / "class_distribution.json", class_distribution_json(r).dump(2) + "\n");
  detail::write_text_file(out_dir / "correlation.csv", correlation_csv(r));
  detail::write_text_file(out_dir / "correlation.svg", correlation_svg(r));
}

}  // namespace msclstm
