#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gamlab/dataset.hpp"

namespace gamlab {

enum class ShapeForm { piecewise_constant, piecewise_linear };

// One additive term f_j, in log-odds units.
//
// Piecewise-constant shapes carry the feature's bin layout and one value per
// bin. Piecewise-linear shapes interpolate between knots, stay flat beyond
// the end knots, and use `missing_value` for missing input. Categorical
// features are always piecewise-constant.
struct ShapeFunction {
  std::string feature;
  ShapeForm form = ShapeForm::piecewise_constant;
  FeatureBinning binning;
  std::vector<double> knots;
  std::vector<double> values;
  double missing_value = 0.0;

  ColumnKind kind() const { return binning.kind; }

  static ShapeFunction constant_over(const FeatureBinning& binning, std::vector<double> values);
  static ShapeFunction linear(std::string feature, std::vector<double> knots, std::vector<double> values,
                              double missing_value = 0.0);

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  double at_numeric(double x) const;          // NaN means missing
  double at_category(std::string_view token) const;
  double at_missing() const;
  double at_bin(std::size_t bin) const;       // piecewise-constant only

  // Value for every row of a dataset column.
  std::vector<double> evaluate(const Column& column) const;
};

struct AdditiveModel {
  static constexpr int kFormatVersion = 1;

  std::string algorithm;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string binning_digest;
  double intercept = 0.0;
  std::vector<ShapeFunction> shapes;
  std::vector<std::string> flags;

  std::optional<std::size_t> shape_index(std::string_view feature) const;
  const ShapeFunction& shape(std::string_view feature) const;
};

using Cell = std::variant<std::monostate, double, std::string>;
using Row = std::map<std::string, Cell, std::less<>>;

double logistic(double score);

double predict_score(const AdditiveModel& m, const Row& row);
double predict_proba(const AdditiveModel& m, const Row& row);
double shape_value(const AdditiveModel& m, std::string_view feature, const Cell& x);

// Per-feature contributions [feature][row] on a dataset, features in model order.
std::vector<std::vector<double>> shape_contributions(const AdditiveModel& m, const RawDataset& ds);
std::vector<double> predict_scores(const AdditiveModel& m, const RawDataset& ds);
std::vector<double> predict_probas(const AdditiveModel& m, const RawDataset& ds);

// Moves the data-weighted mean of each shape into the intercept; `rows`
// defaults to every row of `data`.
AdditiveModel center(const AdditiveModel& m, const RawDataset& data);
AdditiveModel center(const AdditiveModel& m, const RawDataset& data, std::span<const std::size_t> rows);
AdditiveModel center(const AdditiveModel& m, const BinnedDataset& data);

// Re-expresses every shape as piecewise-constant over `spec`, taking the
// value at each bin's representative training value.
AdditiveModel discretize(const AdditiveModel& m, const BinningSpec& spec);

void to_json(nlohmann::json& j, const ShapeFunction& s);
void from_json(const nlohmann::json& j, ShapeFunction& s);
void to_json(nlohmann::json& j, const AdditiveModel& m);
void from_json(const nlohmann::json& j, AdditiveModel& m);

class FormatVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize(const AdditiveModel& m);
AdditiveModel deserialize(std::string_view payload);
void save_model(const AdditiveModel& m, const std::filesystem::path& path);
AdditiveModel load_model(const std::filesystem::path& path);

}  // namespace gamlab
