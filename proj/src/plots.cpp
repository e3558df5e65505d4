#include "gamlab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gamlab {

namespace {

std::string num(double x, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// Median training value inside value bin `b` of `binning`, with cut-based fallbacks.
double bin_anchor(const FeatureBinning& binning, std::size_t b, const std::vector<double>& sorted_train) {
  if (binning.representatives.size() == binning.value_bins()) return binning.representatives[b];
  const double lo = b > 0 ? binning.cuts[b - 1] : -INFINITY;
  const double hi = b < binning.cuts.size() ? binning.cuts[b] : INFINITY;
  const auto first = std::lower_bound(sorted_train.begin(), sorted_train.end(), lo);
  const auto last = std::lower_bound(sorted_train.begin(), sorted_train.end(), hi);
  if (first != last) return *(first + (last - first - 1) / 2);
  if (std::isfinite(lo)) return lo;
  return hi - 1.0;
}

std::vector<double> sorted_train_values(const BinnedDataset& data, const std::string& feature) {
  std::vector<double> v;
  const auto& col = data.raw->column(feature);
  for (auto r : data.split.train) {
    if (!std::isnan(col.numeric[r])) v.push_back(col.numeric[r]);
  }
  std::sort(v.begin(), v.end());
  return v;
}

double train_share(const BinnedDataset& data, const FeatureBinning& spec, std::size_t bin) {
  if (data.split.train.empty() || bin >= spec.train_counts.size()) return 0.0;
  return spec.train_counts[bin] / static_cast<double>(data.split.train.size());
}

const std::vector<std::string> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string safe_file_stem(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  if (out.empty() || out[0] == '.') out.insert(out.begin(), '_');
  return out;
}

std::vector<ShapePoint> shape_points(const AdditiveModel& model, const BinnedDataset& data, const std::string& feature) {
  const auto m = center(model, *data.raw, data.split.train);
  const auto& s = m.shape(feature);
  const auto& spec = data.spec.feature(feature);
  std::vector<ShapePoint> out;
  if (s.kind() == ColumnKind::categorical) {
    for (std::size_t b = 0; b < spec.value_bins(); ++b) {
      out.push_back({spec.categories[b], s.at_category(spec.categories[b]), train_share(data, spec, b)});
    }
  } else if (s.form == ShapeForm::piecewise_constant) {
    const auto train = sorted_train_values(data, feature);
    for (std::size_t b = 0; b < s.binning.value_bins(); ++b) {
      const double x = bin_anchor(s.binning, b, train);
      out.push_back({num(x), s.values[b], train_share(data, spec, spec.bin_of(x))});
    }
  } else {
    for (std::size_t k = 0; k < s.knots.size(); ++k) {
      out.push_back({num(s.knots[k]), s.values[k], train_share(data, spec, spec.bin_of(s.knots[k]))});
    }
  }
  if (auto mb = spec.missing_bin()) out.push_back({"missing", s.at_missing(), train_share(data, spec, *mb)});
  return out;
}

std::string shape_csv(const std::vector<ShapePoint>& points, ColumnKind kind) {
  std::string out = kind == ColumnKind::categorical ? "category,value,density\n" : "x,value,density\n";
  for (const auto& p : points) out += csv_field(p.x) + "," + num(p.value) + "," + num(p.density) + "\n";
  return out;
}

std::string shape_svg(const std::vector<PlotSeries>& series, const BinnedDataset& data, const std::string& feature) {
  if (series.empty()) throw std::invalid_argument("shape_svg: no series");
  const auto& spec = data.spec.feature(feature);
  const auto j = *data.spec.index_of(feature);
  const bool bars = spec.kind == ColumnKind::categorical || data.unique_values[j].size() <= 2;

  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 60;
  // Bar categories (token and numeric anchor) or the continuous x range.
  std::vector<std::string> labels;
  std::vector<double> anchors;
  double x_lo = 0.0, x_hi = 1.0;
  if (bars) {
    if (spec.kind == ColumnKind::categorical) {
      labels.assign(spec.categories.begin(), spec.categories.end());
    } else {
      for (double v : data.unique_values[j]) {
        labels.push_back(num(v, 6));
        anchors.push_back(v);
      }
    }
  } else {
    x_lo = data.unique_values[j].front();
    x_hi = data.unique_values[j].back();
  }

  // Polyline vertices or bar heights per series.
  std::vector<std::vector<std::pair<double, double>>> lines;
  std::vector<std::vector<double>> heights;
  double y_lo = 0.0, y_hi = 0.0;
  for (const auto& ps : series) {
    const auto m = center(ps.model, *data.raw, data.split.train);
    const auto& s = m.shape(feature);
    if (bars) {
      std::vector<double> h;
      for (std::size_t k = 0; k < labels.size(); ++k) {
        h.push_back(spec.kind == ColumnKind::categorical ? s.at_category(labels[k]) : s.at_numeric(anchors[k]));
      }
      for (double v : h) y_lo = std::min(y_lo, v), y_hi = std::max(y_hi, v);
      heights.push_back(std::move(h));
      continue;
    }
    std::vector<std::pair<double, double>> pts;
    if (s.form == ShapeForm::piecewise_constant) {
      for (std::size_t b = 0; b < s.binning.value_bins(); ++b) {
        const double lo = std::max(x_lo, b > 0 ? s.binning.cuts[b - 1] : x_lo);
        const double hi = std::min(x_hi, b < s.binning.cuts.size() ? s.binning.cuts[b] : x_hi);
        if (lo > hi) continue;
        pts.emplace_back(lo, s.values[b]);
        pts.emplace_back(hi, s.values[b]);
      }
    } else {
      pts.emplace_back(x_lo, s.at_numeric(x_lo));
      for (double k : s.knots) {
        if (k > x_lo && k < x_hi) pts.emplace_back(k, s.at_numeric(k));
      }
      pts.emplace_back(x_hi, s.at_numeric(x_hi));
    }
    for (const auto& p : pts) y_lo = std::min(y_lo, p.second), y_hi = std::max(y_hi, p.second);
    lines.push_back(std::move(pts));
  }
  if (y_hi - y_lo < 1e-9) y_hi = y_lo + 1.0;
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  if (x_hi - x_lo <= 0.0) x_hi = x_lo + 1.0;

  auto sx = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto sy = [&](double y) { return T + (y_hi - y) / (y_hi - y_lo) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
    << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(feature) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << num(sy(0.0), 6) << "\" x2=\"" << W - R << "\" y2=\"" << num(sy(0.0), 6)
    << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = y_lo + (y_hi - y_lo) * t / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << num(sy(y) + 4, 6) << "\" text-anchor=\"end\">" << num(y, 3) << "</text>\n";
  }
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\" text-anchor=\"middle\">log-odds</text>\n";

  if (bars) {
    const double slot = (W - L - R) / static_cast<double>(std::max<std::size_t>(labels.size(), 1));
    const double bar = 0.8 * slot / static_cast<double>(series.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
      const double x0 = L + slot * static_cast<double>(k) + 0.1 * slot;
      for (std::size_t s = 0; s < series.size(); ++s) {
        const double v = heights[s][k];
        const double top = std::min(sy(v), sy(0.0)), h = std::abs(sy(v) - sy(0.0));
        o << "<rect x=\"" << num(x0 + bar * static_cast<double>(s), 6) << "\" y=\"" << num(top, 6) << "\" width=\""
          << num(bar, 6) << "\" height=\"" << num(h, 6) << "\" fill=\"" << kPalette[s % kPalette.size()] << "\"/>\n";
      }
      o << "<text x=\"" << num(x0 + 0.4 * slot, 6) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
        << xml_escape(labels[k]) << "</text>\n";
    }
  } else {
    for (int t = 0; t <= 4; ++t) {
      const double x = x_lo + (x_hi - x_lo) * t / 4.0;
      o << "<text x=\"" << num(sx(x), 6) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << num(x, 4)
        << "</text>\n";
    }
    for (std::size_t s = 0; s < lines.size(); ++s) {
      o << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kPalette[s % kPalette.size()] << "\" points=\"";
      for (std::size_t k = 0; k < lines[s].size(); ++k) {
        o << (k ? " " : "") << num(sx(lines[s][k].first), 6) << ',' << num(sy(lines[s][k].second), 6);
      }
      o << "\"/>\n";
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = H - 18;
    const double x = L + 110.0 * static_cast<double>(s);
    o << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[s % kPalette.size()]
      << "\"/><text x=\"" << x + 14 << "\" y=\"" << y << "\">" << xml_escape(series[s].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> export_shapes(const AdditiveModel& m, const BinnedDataset& data,
                                                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  const std::vector<PlotSeries> one{{m.algorithm.empty() ? std::string("model") : m.algorithm, m}};
  for (const auto& s : m.shapes) {
    const auto stem = safe_file_stem(s.feature);
    const auto csv = out_dir / (stem + ".csv");
    const auto svg = out_dir / (stem + ".svg");
    write_file(csv, shape_csv(shape_points(m, data, s.feature), s.kind()));
    write_file(svg, shape_svg(one, data, s.feature));
    files.push_back(csv);
    files.push_back(svg);
  }
  return files;
}

std::vector<std::filesystem::path> export_overlay(const std::vector<PlotSeries>& series, const BinnedDataset& data,
                                                  const std::filesystem::path& out_dir) {
  if (series.empty()) throw std::invalid_argument("export_overlay: no series");
  std::filesystem::create_directories(out_dir);
  std::vector<PlotSeries> aligned;
  for (const auto& s : series) aligned.push_back({s.label, discretize(s.model, data.spec)});
  std::vector<std::filesystem::path> files;
  for (const auto& shape : aligned.front().model.shapes) {
    const auto& f = shape.feature;
    std::vector<std::vector<ShapePoint>> pts;
    for (const auto& s : aligned) pts.push_back(shape_points(s.model, data, f));
    std::string csv = shape.kind() == ColumnKind::categorical ? "category" : "x";
    for (const auto& s : aligned) csv += "," + csv_field(s.label);
    csv += ",density\n";
    for (std::size_t k = 0; k < pts.front().size(); ++k) {
      csv += csv_field(pts.front()[k].x);
      for (const auto& p : pts) csv += "," + num(p[k].value);
      csv += "," + num(pts.front()[k].density) + "\n";
    }
    const auto stem = safe_file_stem(f);
    write_file(out_dir / (stem + ".csv"), csv);
    write_file(out_dir / (stem + ".svg"), shape_svg(aligned, data, f));
    files.push_back(out_dir / (stem + ".csv"));
    files.push_back(out_dir / (stem + ".svg"));
  }
  return files;
}

}  // namespace gamlab
