#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gamlab {

enum class ColumnKind { numeric, categorical };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view text);

// One feature column. Numeric columns store NaN for missing; categorical
// columns store an index into `dictionary`, or -1 for missing.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> numeric;
  std::vector<std::int32_t> codes;
  std::vector<std::string> dictionary;

  std::size_t size() const;
  bool is_missing(std::size_t row) const;
};

struct RawDataset {
  std::string name;
  std::vector<Column> columns;
  // Binary labels from load_csv; semi-synthetic data may carry soft labels in [0,1].
  std::vector<double> labels;
  std::vector<std::string> group_columns;

  std::size_t rows() const { return labels.size(); }
  std::size_t features() const { return columns.size(); }
  std::optional<std::size_t> column_index(std::string_view column) const;
  const Column& column(std::string_view column) const;
  double positive_rate() const;

  // Copy without one feature column (used by ablation studies).
  RawDataset without_column(std::string_view column) const;
};

struct ColumnSchema {
  std::optional<ColumnKind> kind;
  enum class Role { feature, label, group, ignore } role = Role::feature;
};

struct CsvOptions {
  std::string label_column = "label";
  std::map<std::string, ColumnSchema> schema;
  std::vector<std::string> missing_markers = {"", "NA", "?"};
  std::vector<std::string> group_columns;
};

// Schema override file: {"column": {"kind": "numeric", "role": "label"}, ...}.
std::map<std::string, ColumnSchema> parse_schema(const nlohmann::json& j);

RawDataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
RawDataset parse_csv(std::string_view text, const CsvOptions& options = {},
                     std::string name = "inline");

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  SplitFractions fractions;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  std::vector<std::size_t> all() const;
};

// Stratified by label; sizes are round(N*val), round(N*test), remainder to train.
SplitPlan make_split(const RawDataset& ds, std::uint64_t seed, SplitFractions fractions = {});

// Bin layout of one feature: value bins [0, value_bins()), then the missing
// bin if present, then (categorical only) the reserved unknown-category bin.
struct FeatureBinning {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> cuts;              // numeric: bin b holds cuts[b-1] <= x < cuts[b]
  std::vector<std::string> categories;   // categorical: label-encoding order
  bool has_missing_bin = false;
  bool degenerate = false;
  std::vector<double> representatives;   // numeric: median training value per value bin
  std::vector<double> train_counts;      // training rows per bin (all bins)

  std::size_t value_bins() const;
  std::size_t bin_count() const;
  std::optional<std::size_t> missing_bin() const;
  std::optional<std::size_t> unknown_bin() const;

  std::size_t bin_of(double x) const;                 // numeric, non-missing
  std::size_t bin_of_category(std::string_view token) const;
};

struct BinningSpec {
  std::vector<FeatureBinning> features;

  const FeatureBinning& feature(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::string digest() const;
};

void to_json(nlohmann::json& j, const FeatureBinning& binning);
void from_json(const nlohmann::json& j, FeatureBinning& binning);

BinningSpec fit_binning(const RawDataset& ds, std::span<const std::size_t> train_rows,
                        std::size_t max_bins = 255);

// Bin index of every row of `column` under `binning`. Unseen categories map to
// the unknown bin; a missing value without a missing bin throws.
std::vector<std::uint16_t> bin_column(const FeatureBinning& binning, const Column& column);

struct BinnedDataset {
  std::shared_ptr<const RawDataset> raw;
  BinningSpec spec;
  SplitPlan split;
  std::vector<std::vector<std::uint16_t>> bins;        // [feature][row]
  std::vector<std::vector<double>> unique_values;      // [feature] sorted training values (numeric)

  std::size_t rows() const { return raw->rows(); }
  std::size_t features() const { return spec.features.size(); }
  std::span<const double> labels() const { return raw->labels; }

  // Boolean indicator columns for a categorical feature, one per category;
  // exactly one is set per row with a seen, non-missing category.
  std::vector<std::vector<std::uint8_t>> one_hot(std::size_t feature) const;

  BinnedDataset without_feature(std::string_view name) const;
};

BinnedDataset encode(std::shared_ptr<const RawDataset> ds, const BinningSpec& spec,
                     SplitPlan split);

// make_split + fit_binning(train) + encode.
BinnedDataset prepare(std::shared_ptr<const RawDataset> ds, std::uint64_t seed,
                      std::size_t max_bins = 255, SplitFractions fractions = {});

}  // namespace gamlab
