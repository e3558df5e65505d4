#include "gamlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "gamlab/random.hpp"

namespace gamlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

// RFC-4180: quoted fields may contain separators, doubled quotes and newlines.
std::vector<std::vector<std::string>> parse_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && trim(record[0]).empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && trim(field).empty()) {
      field.clear();
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

double median_of_sorted(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return kNaN;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

ColumnKind column_kind_from_string(std::string_view text) {
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "categorical") return ColumnKind::categorical;
  throw std::invalid_argument("unknown column kind: " + std::string(text));
}

std::size_t Column::size() const {
  return kind == ColumnKind::numeric ? numeric.size() : codes.size();
}

bool Column::is_missing(std::size_t row) const {
  return kind == ColumnKind::numeric ? std::isnan(numeric[row]) : codes[row] < 0;
}

std::optional<std::size_t> RawDataset::column_index(std::string_view column) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].name == column) return j;
  }
  return std::nullopt;
}

const Column& RawDataset::column(std::string_view column) const {
  auto j = column_index(column);
  if (!j) throw std::out_of_range("no column named '" + std::string(column) + "'");
  return columns[*j];
}

double RawDataset::positive_rate() const {
  if (labels.empty()) return 0.0;
  return std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
}

RawDataset RawDataset::without_column(std::string_view column) const {
  auto j = column_index(column);
  if (!j) throw std::invalid_argument("cannot drop unknown feature '" + std::string(column) + "'");
  if (columns.size() == 1) throw std::invalid_argument("cannot drop the only feature");
  RawDataset out = *this;
  out.columns.erase(out.columns.begin() + static_cast<std::ptrdiff_t>(*j));
  std::erase(out.group_columns, std::string(column));
  return out;
}

std::map<std::string, ColumnSchema> parse_schema(const nlohmann::json& j) {
  std::map<std::string, ColumnSchema> schema;
  for (const auto& [column, entry] : j.items()) {
    ColumnSchema s;
    if (entry.contains("kind")) s.kind = column_kind_from_string(entry.at("kind").get<std::string>());
    if (entry.contains("role")) {
      const auto role = entry.at("role").get<std::string>();
      if (role == "feature") s.role = ColumnSchema::Role::feature;
      else if (role == "label") s.role = ColumnSchema::Role::label;
      else if (role == "group") s.role = ColumnSchema::Role::group;
      else if (role == "ignore") s.role = ColumnSchema::Role::ignore;
      else throw std::invalid_argument("unknown column role: " + role);
    }
    schema[column] = s;
  }
  return schema;
}

RawDataset parse_csv(std::string_view text, const CsvOptions& options, std::string name) {
  auto records = parse_records(text);
  if (records.empty()) throw std::runtime_error("csv: missing header row");
  const auto& header = records.front();

  std::string label_column = options.label_column;
  std::vector<std::string> groups = options.group_columns;
  for (const auto& [column, s] : options.schema) {
    if (s.role == ColumnSchema::Role::label) label_column = column;
    if (s.role == ColumnSchema::Role::group &&
        std::find(groups.begin(), groups.end(), column) == groups.end()) {
      groups.push_back(column);
    }
  }

  std::optional<std::size_t> label_pos;
  std::vector<std::size_t> feature_pos;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string col{trim(header[c])};
    if (col == label_column) {
      label_pos = c;
      continue;
    }
    auto it = options.schema.find(col);
    if (it != options.schema.end() && it->second.role == ColumnSchema::Role::ignore) continue;
    feature_pos.push_back(c);
  }
  if (!label_pos) throw std::runtime_error("csv: label column '" + label_column + "' absent");
  if (feature_pos.empty()) throw std::runtime_error("csv: no feature columns");

  const std::size_t n = records.size() - 1;
  if (n == 0) throw std::runtime_error("csv: no data rows");
  auto is_missing = [&](std::string_view v) {
    v = trim(v);
    return std::find(options.missing_markers.begin(), options.missing_markers.end(), v) !=
           options.missing_markers.end();
  };

  RawDataset ds;
  ds.name = std::move(name);
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& rec = records[r + 1];
    if (rec.size() != header.size()) {
      throw std::runtime_error("csv: row " + std::to_string(r + 2) + " has " +
                               std::to_string(rec.size()) + " fields, header has " +
                               std::to_string(header.size()));
    }
    const auto value = parse_number(rec[*label_pos]);
    if (!value || (*value != 0.0 && *value != 1.0)) {
      throw std::runtime_error("csv: label not binary at row " + std::to_string(r + 2) + ": '" +
                               rec[*label_pos] + "'");
    }
    ds.labels[r] = *value;
  }

  for (std::size_t c : feature_pos) {
    Column col;
    col.name = std::string(trim(header[c]));
    std::optional<ColumnKind> forced;
    if (auto it = options.schema.find(col.name); it != options.schema.end()) forced = it->second.kind;
    bool numeric = true;
    if (forced) {
      numeric = *forced == ColumnKind::numeric;
    } else {
      for (std::size_t r = 0; r < n && numeric; ++r) {
        const auto& v = records[r + 1][c];
        if (!is_missing(v) && !parse_number(v)) numeric = false;
      }
    }
    if (numeric) {
      col.kind = ColumnKind::numeric;
      col.numeric.resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto& v = records[r + 1][c];
        if (is_missing(v)) {
          col.numeric[r] = kNaN;
          continue;
        }
        auto parsed = parse_number(v);
        if (!parsed) throw std::runtime_error("csv: non-numeric value '" + v + "' in " + col.name);
        col.numeric[r] = *parsed;
      }
    } else {
      col.kind = ColumnKind::categorical;
      col.codes.resize(n);
      std::unordered_map<std::string, std::int32_t> lookup;
      for (std::size_t r = 0; r < n; ++r) {
        const auto& v = records[r + 1][c];
        if (is_missing(v)) {
          col.codes[r] = -1;
          continue;
        }
        std::string token{trim(v)};
        auto [it, inserted] = lookup.try_emplace(token, static_cast<std::int32_t>(col.dictionary.size()));
        if (inserted) col.dictionary.push_back(token);
        col.codes[r] = it->second;
      }
    }
    ds.columns.push_back(std::move(col));
  }
  for (const auto& g : groups) {
    if (!ds.column_index(g)) throw std::runtime_error("csv: group column '" + g + "' is not a feature");
  }
  ds.group_columns = std::move(groups);
  return ds;
}

RawDataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), options, path.stem().string());
}

std::vector<std::size_t> SplitPlan::all() const {
  std::vector<std::size_t> rows;
  rows.reserve(train.size() + val.size() + test.size());
  rows.insert(rows.end(), train.begin(), train.end());
  rows.insert(rows.end(), val.begin(), val.end());
  rows.insert(rows.end(), test.begin(), test.end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

SplitPlan make_split(const RawDataset& ds, std::uint64_t seed, SplitFractions fractions) {
  if (fractions.train <= 0 || fractions.val < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must be positive and sum to 1");
  }
  const std::size_t n = ds.rows();
  const auto n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(fractions.test * static_cast<double>(n)));
  if (n_val + n_test >= n || (fractions.val > 0 && n_val == 0) || (fractions.test > 0 && n_test == 0)) {
    throw std::invalid_argument("split would leave a partition empty (N=" + std::to_string(n) + ")");
  }

  // Shuffle each label class, then interleave classes by fractional position
  // so that every contiguous block carries the overall positive rate.
  Rng rng(mix_seed(seed, 0x5717));
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (ds.labels[i] >= 0.5 ? pos : neg).push_back(i);
  rng.shuffle(std::span(pos));
  rng.shuffle(std::span(neg));
  struct Keyed {
    double key;
    int cls;
    std::size_t row;
  };
  std::vector<Keyed> order;
  order.reserve(n);
  for (std::size_t r = 0; r < pos.size(); ++r) {
    order.push_back({(static_cast<double>(r) + 0.5) / static_cast<double>(pos.size()), 0, pos[r]});
  }
  for (std::size_t r = 0; r < neg.size(); ++r) {
    order.push_back({(static_cast<double>(r) + 0.5) / static_cast<double>(neg.size()), 1, neg[r]});
  }
  std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });

  SplitPlan plan;
  plan.seed = seed;
  plan.fractions = fractions;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = order[i].row;
    if (i < n_test) plan.test.push_back(row);
    else if (i < n_test + n_val) plan.val.push_back(row);
    else plan.train.push_back(row);
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

std::size_t FeatureBinning::value_bins() const {
  return kind == ColumnKind::numeric ? cuts.size() + 1 : categories.size();
}

std::size_t FeatureBinning::bin_count() const {
  return value_bins() + (has_missing_bin ? 1 : 0) + (kind == ColumnKind::categorical ? 1 : 0);
}

std::optional<std::size_t> FeatureBinning::missing_bin() const {
  if (!has_missing_bin) return std::nullopt;
  return value_bins();
}

std::optional<std::size_t> FeatureBinning::unknown_bin() const {
  if (kind != ColumnKind::categorical) return std::nullopt;
  return bin_count() - 1;
}

std::size_t FeatureBinning::bin_of(double x) const {
  return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

std::size_t FeatureBinning::bin_of_category(std::string_view token) const {
  for (std::size_t k = 0; k < categories.size(); ++k) {
    if (categories[k] == token) return k;
  }
  return *unknown_bin();
}

const FeatureBinning& BinningSpec::feature(std::string_view name) const {
  auto j = index_of(name);
  if (!j) throw std::out_of_range("binning has no feature '" + std::string(name) + "'");
  return features[*j];
}

std::optional<std::size_t> BinningSpec::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].name == name) return j;
  }
  return std::nullopt;
}

void to_json(nlohmann::json& j, const FeatureBinning& b) {
  j = nlohmann::json{{"name", b.name}, {"kind", to_string(b.kind)}, {"has_missing", b.has_missing_bin}};
  if (b.kind == ColumnKind::numeric) j["bin_edges"] = b.cuts;
  else j["categories"] = b.categories;
}

void from_json(const nlohmann::json& j, FeatureBinning& b) {
  b.name = j.at("name").get<std::string>();
  b.kind = column_kind_from_string(j.at("kind").get<std::string>());
  b.has_missing_bin = j.value("has_missing", false);
  if (b.kind == ColumnKind::numeric) {
    b.cuts = j.at("bin_edges").get<std::vector<double>>();
    if (!std::is_sorted(b.cuts.begin(), b.cuts.end()) ||
        std::adjacent_find(b.cuts.begin(), b.cuts.end()) != b.cuts.end()) {
      throw std::invalid_argument("bin edges of '" + b.name + "' are not strictly increasing");
    }
  } else {
    b.categories = j.at("categories").get<std::vector<std::string>>();
  }
}

std::string BinningSpec::digest() const {
  nlohmann::json j = features;
  return sha256_hex(j.dump()).substr(0, 16);
}

namespace {

FeatureBinning fit_numeric(const Column& col, std::span<const std::size_t> rows, std::size_t max_bins) {
  FeatureBinning b;
  b.name = col.name;
  b.kind = ColumnKind::numeric;
  std::vector<double> values;
  values.reserve(rows.size());
  for (std::size_t r : rows) {
    if (!std::isnan(col.numeric[r])) values.push_back(col.numeric[r]);
  }
  for (std::size_t r = 0; r < col.size(); ++r) {
    if (std::isnan(col.numeric[r])) {
      b.has_missing_bin = true;
      break;
    }
  }
  std::sort(values.begin(), values.end());
  const std::size_t value_budget = std::max<std::size_t>(1, max_bins - (b.has_missing_bin ? 1 : 0));

  std::vector<double> uniq = values;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  b.degenerate = uniq.size() <= 1;
  if (uniq.size() <= value_budget) {
    for (std::size_t k = 1; k < uniq.size(); ++k) b.cuts.push_back(0.5 * (uniq[k - 1] + uniq[k]));
  } else {
    const std::size_t n = values.size();
    for (std::size_t q = 1; q < value_budget; ++q) {
      std::size_t idx = q * n / value_budget;
      idx = std::clamp<std::size_t>(idx, 1, n - 1);
      double cut;
      if (values[idx - 1] < values[idx]) {
        cut = 0.5 * (values[idx - 1] + values[idx]);
      } else {
        // Tied quantile: cut just above the tied value so no bin is empty.
        auto next = std::upper_bound(values.begin(), values.end(), values[idx]);
        if (next == values.end()) continue;
        cut = 0.5 * (values[idx] + *next);
      }
      if (b.cuts.empty() || cut > b.cuts.back()) b.cuts.push_back(cut);
    }
  }

  b.representatives.assign(b.value_bins(), kNaN);
  b.train_counts.assign(b.bin_count(), 0.0);
  std::size_t start = 0;
  for (std::size_t k = 0; k < b.value_bins(); ++k) {
    std::size_t stop = start;
    while (stop < values.size() && (k == b.cuts.size() || values[stop] < b.cuts[k])) ++stop;
    b.representatives[k] = median_of_sorted(std::span(values).subspan(start, stop - start));
    b.train_counts[k] = static_cast<double>(stop - start);
    start = stop;
  }
  if (b.has_missing_bin) {
    b.train_counts[*b.missing_bin()] = static_cast<double>(rows.size() - values.size());
  }
  return b;
}

FeatureBinning fit_categorical(const Column& col, std::span<const std::size_t> rows) {
  FeatureBinning b;
  b.name = col.name;
  b.kind = ColumnKind::categorical;
  std::vector<std::size_t> ordered(rows.begin(), rows.end());
  std::sort(ordered.begin(), ordered.end());
  std::vector<std::int32_t> seen(col.dictionary.size(), -1);
  for (std::size_t r : ordered) {
    const auto code = col.codes[r];
    if (code >= 0 && seen[static_cast<std::size_t>(code)] < 0) {
      seen[static_cast<std::size_t>(code)] = static_cast<std::int32_t>(b.categories.size());
      b.categories.push_back(col.dictionary[static_cast<std::size_t>(code)]);
    }
  }
  for (std::size_t r = 0; r < col.size(); ++r) {
    if (col.codes[r] < 0) {
      b.has_missing_bin = true;
      break;
    }
  }
  b.degenerate = b.categories.size() <= 1;
  b.representatives.resize(b.categories.size());
  std::iota(b.representatives.begin(), b.representatives.end(), 0.0);
  b.train_counts.assign(b.bin_count(), 0.0);
  for (std::size_t r : rows) {
    const auto code = col.codes[r];
    if (code < 0) b.train_counts[*b.missing_bin()] += 1.0;
    else b.train_counts[static_cast<std::size_t>(seen[static_cast<std::size_t>(code)])] += 1.0;
  }
  return b;
}

}  // namespace

BinningSpec fit_binning(const RawDataset& ds, std::span<const std::size_t> train_rows, std::size_t max_bins) {
  if (max_bins < 2) throw std::invalid_argument("max_bins must be at least 2");
  if (train_rows.empty()) throw std::invalid_argument("binning needs training rows");
  BinningSpec spec;
  for (const auto& col : ds.columns) {
    auto b = col.kind == ColumnKind::numeric ? fit_numeric(col, train_rows, max_bins)
                                             : fit_categorical(col, train_rows);
    if (b.bin_count() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::runtime_error("feature '" + col.name + "' has too many categories");
    }
    spec.features.push_back(std::move(b));
  }
  return spec;
}

std::vector<std::uint16_t> bin_column(const FeatureBinning& binning, const Column& column) {
  if (binning.kind != column.kind) {
    throw std::invalid_argument("column '" + column.name + "' kind does not match its binning");
  }
  const std::size_t n = column.size();
  std::vector<std::uint16_t> out(n);
  if (column.kind == ColumnKind::numeric) {
    for (std::size_t r = 0; r < n; ++r) {
      const double x = column.numeric[r];
      if (std::isnan(x)) {
        if (!binning.has_missing_bin) {
          throw std::invalid_argument("missing value in '" + column.name + "' but binning has no missing bin");
        }
        out[r] = static_cast<std::uint16_t>(*binning.missing_bin());
      } else {
        out[r] = static_cast<std::uint16_t>(binning.bin_of(x));
      }
    }
    return out;
  }
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t k = 0; k < binning.categories.size(); ++k) index.emplace(binning.categories[k], k);
  std::vector<std::size_t> translate(column.dictionary.size());
  for (std::size_t c = 0; c < column.dictionary.size(); ++c) {
    auto it = index.find(column.dictionary[c]);
    translate[c] = it == index.end() ? *binning.unknown_bin() : it->second;
  }
  for (std::size_t r = 0; r < n; ++r) {
    const auto code = column.codes[r];
    if (code < 0) {
      out[r] = static_cast<std::uint16_t>(binning.has_missing_bin ? *binning.missing_bin()
                                                                  : *binning.unknown_bin());
    } else {
      out[r] = static_cast<std::uint16_t>(translate[static_cast<std::size_t>(code)]);
    }
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> BinnedDataset::one_hot(std::size_t feature) const {
  const auto& b = spec.features.at(feature);
  if (b.kind != ColumnKind::categorical) throw std::invalid_argument("one_hot needs a categorical feature");
  std::vector<std::vector<std::uint8_t>> out(b.categories.size(), std::vector<std::uint8_t>(rows(), 0));
  const auto& col = bins[feature];
  for (std::size_t r = 0; r < rows(); ++r) {
    if (col[r] < b.categories.size()) out[col[r]][r] = 1;
  }
  return out;
}

BinnedDataset BinnedDataset::without_feature(std::string_view name) const {
  auto j = spec.index_of(name);
  if (!j) throw std::invalid_argument("cannot drop unknown feature '" + std::string(name) + "'");
  BinnedDataset out;
  out.raw = std::make_shared<const RawDataset>(raw->without_column(name));
  out.spec = spec;
  out.split = split;
  out.bins = bins;
  out.unique_values = unique_values;
  const auto pos = static_cast<std::ptrdiff_t>(*j);
  out.spec.features.erase(out.spec.features.begin() + pos);
  out.bins.erase(out.bins.begin() + pos);
  out.unique_values.erase(out.unique_values.begin() + pos);
  return out;
}

BinnedDataset encode(std::shared_ptr<const RawDataset> ds, const BinningSpec& spec, SplitPlan split) {
  if (!ds) throw std::invalid_argument("encode: null dataset");
  BinnedDataset out;
  out.spec = spec;
  out.split = std::move(split);
  for (const auto& b : spec.features) {
    const auto& col = ds->column(b.name);
    out.bins.push_back(bin_column(b, col));
    std::vector<double> uniq;
    if (col.kind == ColumnKind::numeric) {
      for (std::size_t r : out.split.train) {
        if (!std::isnan(col.numeric[r])) uniq.push_back(col.numeric[r]);
      }
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    }
    out.unique_values.push_back(std::move(uniq));
  }
  out.raw = std::move(ds);
  return out;
}

BinnedDataset prepare(std::shared_ptr<const RawDataset> ds, std::uint64_t seed, std::size_t max_bins,
                      SplitFractions fractions) {
  auto split = make_split(*ds, seed, fractions);
  auto spec = fit_binning(*ds, split.train, max_bins);
  return encode(std::move(ds), spec, std::move(split));
}

}  // namespace gamlab
