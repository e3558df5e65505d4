#pragma once

// Shape-plot export: one CSV and one static SVG per feature.

#include <filesystem>
#include <string>
#include <vector>

#include "gamlab/dataset.hpp"
#include "gamlab/model.hpp"

namespace gamlab {

// One plotted point of a shape: `x` is a numeric value, a category token, or
// "missing". Numeric x values are exact evaluation points of the shape.
struct ShapePoint {
  std::string x;
  double value = 0.0;
  double density = 0.0;   // share of training rows in the data bin holding x
};

// Points of the model's shape for `feature` after centering on the training
// rows. Piecewise-constant shapes give one point per value bin, linear
// shapes one point per knot; a missing point is appended when the data has one.
std::vector<ShapePoint> shape_points(const AdditiveModel& m, const BinnedDataset& data, const std::string& feature);

// Header `x,value,density` (or `category,...`), doubles with 17 significant digits.
std::string shape_csv(const std::vector<ShapePoint>& points, ColumnKind kind);

struct PlotSeries {
  std::string label;
  AdditiveModel model;
};

// Step or line chart for numeric features, bars for categorical and
// two-valued features; y axis in log-odds. Several series share the axes.
std::string shape_svg(const std::vector<PlotSeries>& series, const BinnedDataset& data, const std::string& feature);

// Writes <feature>.csv and <feature>.svg for every shape; returns the paths.
std::vector<std::filesystem::path> export_shapes(const AdditiveModel& m, const BinnedDataset& data,
                                                 const std::filesystem::path& out_dir);

// Overlay of several models: every model is discretized onto data.spec so
// the series share x positions. Writes <feature>.svg and <feature>.csv with
// one value column per series.
std::vector<std::filesystem::path> export_overlay(const std::vector<PlotSeries>& series, const BinnedDataset& data,
                                                  const std::filesystem::path& out_dir);

// File-name-safe version of a feature name.
std::string safe_file_stem(std::string_view name);

}  // namespace gamlab
