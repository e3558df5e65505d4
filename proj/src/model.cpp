#include "gamlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace gamlab {

ShapeFunction ShapeFunction::constant_over(const FeatureBinning& binning, std::vector<double> values) {
  ShapeFunction s;
  s.feature = binning.name;
  s.form = ShapeForm::piecewise_constant;
  s.binning = binning;
  s.values = std::move(values);
  s.validate();
  return s;
}

ShapeFunction ShapeFunction::linear(std::string feature, std::vector<double> knots, std::vector<double> values,
                                    double missing_value) {
  ShapeFunction s;
  s.feature = feature;
  s.form = ShapeForm::piecewise_linear;
  s.binning.name = std::move(feature);
  s.binning.kind = ColumnKind::numeric;
  s.knots = std::move(knots);
  s.values = std::move(values);
  s.missing_value = missing_value;
  s.validate();
  return s;
}

void ShapeFunction::validate() const {
  auto fail = [&](const std::string& why) { throw std::invalid_argument("shape '" + feature + "': " + why); };
  if (form == ShapeForm::piecewise_constant) {
    if (values.size() != binning.bin_count()) fail("value count does not match bin count");
  } else {
    if (binning.kind != ColumnKind::numeric) fail("categorical shapes must be piecewise-constant");
    if (knots.empty() || knots.size() != values.size()) fail("knot and value counts differ");
    for (std::size_t k = 1; k < knots.size(); ++k) {
      if (!(knots[k] > knots[k - 1])) fail("knots not strictly increasing");
    }
    if (!std::isfinite(missing_value)) fail("non-finite missing value");
  }
  for (double v : values) {
    if (!std::isfinite(v)) fail("non-finite value");
  }
}

double ShapeFunction::at_missing() const {
  if (form == ShapeForm::piecewise_linear) return missing_value;
  if (auto b = binning.missing_bin()) return values[*b];
  // No missing bin: categorical falls back to the unknown bin, numeric is neutral.
  if (auto b = binning.unknown_bin()) return values[*b];
  return 0.0;
}

double ShapeFunction::at_numeric(double x) const {
  if (std::isnan(x)) return at_missing();
  if (binning.kind != ColumnKind::numeric) {
    throw std::invalid_argument("shape '" + feature + "' expects a category, got a number");
  }
  if (form == ShapeForm::piecewise_constant) return values[binning.bin_of(x)];
  if (x <= knots.front()) return values.front();
  if (x >= knots.back()) return values.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - knots[lo]) / (knots[hi] - knots[lo]);
  return values[lo] + t * (values[hi] - values[lo]);
}

double ShapeFunction::at_category(std::string_view token) const {
  if (binning.kind != ColumnKind::categorical) {
    throw std::invalid_argument("shape '" + feature + "' expects a number, got a category");
  }
  return values[binning.bin_of_category(token)];
}

double ShapeFunction::at_bin(std::size_t bin) const {
  if (form != ShapeForm::piecewise_constant) throw std::logic_error("at_bin on a piecewise-linear shape");
  return values.at(bin);
}

std::vector<double> ShapeFunction::evaluate(const Column& column) const {
  if (column.kind != binning.kind) {
    throw std::invalid_argument("column '" + column.name + "' kind does not match shape '" + feature + "'");
  }
  const std::size_t n = column.size();
  std::vector<double> out(n);
  if (column.kind == ColumnKind::numeric) {
    for (std::size_t r = 0; r < n; ++r) out[r] = at_numeric(column.numeric[r]);
    return out;
  }
  std::vector<double> by_code(column.dictionary.size());
  for (std::size_t c = 0; c < by_code.size(); ++c) by_code[c] = at_category(column.dictionary[c]);
  const double missing = at_missing();
  for (std::size_t r = 0; r < n; ++r) {
    out[r] = column.codes[r] < 0 ? missing : by_code[static_cast<std::size_t>(column.codes[r])];
  }
  return out;
}

std::optional<std::size_t> AdditiveModel::shape_index(std::string_view feature) const {
  for (std::size_t j = 0; j < shapes.size(); ++j) {
    if (shapes[j].feature == feature) return j;
  }
  return std::nullopt;
}

const ShapeFunction& AdditiveModel::shape(std::string_view feature) const {
  auto j = shape_index(feature);
  if (!j) throw std::out_of_range("model has no feature '" + std::string(feature) + "'");
  return shapes[*j];
}

double logistic(double score) {
  if (score >= 0) return 1.0 / (1.0 + std::exp(-score));
  const double e = std::exp(score);
  return e / (1.0 + e);
}

namespace {

double cell_value(const ShapeFunction& s, const Cell& x) {
  if (std::holds_alternative<std::monostate>(x)) return s.at_missing();
  if (const auto* d = std::get_if<double>(&x)) return s.at_numeric(*d);
  return s.at_category(std::get<std::string>(x));
}

}  // namespace

double shape_value(const AdditiveModel& m, std::string_view feature, const Cell& x) {
  return cell_value(m.shape(feature), x);
}

double predict_score(const AdditiveModel& m, const Row& row) {
  double score = m.intercept;
  for (const auto& s : m.shapes) {
    auto it = row.find(s.feature);
    if (it == row.end()) throw std::invalid_argument("row is missing feature '" + s.feature + "'");
    score += cell_value(s, it->second);
  }
  return score;
}

double predict_proba(const AdditiveModel& m, const Row& row) { return logistic(predict_score(m, row)); }

std::vector<std::vector<double>> shape_contributions(const AdditiveModel& m, const RawDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(m.shapes.size());
  for (const auto& s : m.shapes) out.push_back(s.evaluate(ds.column(s.feature)));
  return out;
}

std::vector<double> predict_scores(const AdditiveModel& m, const RawDataset& ds) {
  std::vector<double> scores(ds.rows(), m.intercept);
  for (const auto& s : m.shapes) {
    const auto contrib = s.evaluate(ds.column(s.feature));
    for (std::size_t r = 0; r < scores.size(); ++r) scores[r] += contrib[r];
  }
  return scores;
}

std::vector<double> predict_probas(const AdditiveModel& m, const RawDataset& ds) {
  auto p = predict_scores(m, ds);
  for (double& v : p) v = logistic(v);
  return p;
}

AdditiveModel center(const AdditiveModel& m, const RawDataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("center: no rows");
  AdditiveModel out = m;
  for (auto& s : out.shapes) {
    const auto contrib = s.evaluate(data.column(s.feature));
    double mean = 0.0;
    for (std::size_t r : rows) mean += contrib[r];
    mean /= static_cast<double>(rows.size());
    for (double& v : s.values) v -= mean;
    if (s.form == ShapeForm::piecewise_linear) s.missing_value -= mean;
    out.intercept += mean;
  }
  return out;
}

AdditiveModel center(const AdditiveModel& m, const RawDataset& data) {
  std::vector<std::size_t> rows(data.rows());
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
  return center(m, data, rows);
}

AdditiveModel center(const AdditiveModel& m, const BinnedDataset& data) { return center(m, *data.raw); }

AdditiveModel discretize(const AdditiveModel& m, const BinningSpec& spec) {
  AdditiveModel out = m;
  out.binning_digest = spec.digest();
  for (auto& s : out.shapes) {
    const auto& b = spec.feature(s.feature);
    if (b.kind != s.kind()) throw std::invalid_argument("discretize: kind mismatch for '" + s.feature + "'");
    std::vector<double> values(b.bin_count());
    for (std::size_t k = 0; k < b.value_bins(); ++k) {
      values[k] = b.kind == ColumnKind::numeric ? s.at_numeric(b.representatives[k])
                                                : s.at_category(b.categories[k]);
    }
    if (auto mb = b.missing_bin()) values[*mb] = s.at_missing();
    if (auto ub = b.unknown_bin()) {
      values[*ub] = s.form == ShapeForm::piecewise_constant ? s.values[*s.binning.unknown_bin()] : 0.0;
    }
    FeatureBinning layout = b;
    s = ShapeFunction::constant_over(layout, std::move(values));
  }
  return out;
}

void to_json(nlohmann::json& j, const ShapeFunction& s) {
  j = nlohmann::json{{"name", s.feature}, {"kind", to_string(s.kind())}};
  if (s.form == ShapeForm::piecewise_constant) {
    j["form"] = "bins";
    if (s.kind() == ColumnKind::numeric) j["bin_edges"] = s.binning.cuts;
    else j["categories"] = s.binning.categories;
    j["has_missing"] = s.binning.has_missing_bin;
  } else {
    j["form"] = "knots";
    j["knots"] = s.knots;
    j["missing_value"] = s.missing_value;
  }
  j["values"] = s.values;
}

void from_json(const nlohmann::json& j, ShapeFunction& s) {
  s = ShapeFunction{};
  s.feature = j.at("name").get<std::string>();
  const auto kind = column_kind_from_string(j.at("kind").get<std::string>());
  const auto form = j.value("form", std::string(j.contains("knots") ? "knots" : "bins"));
  s.values = j.at("values").get<std::vector<double>>();
  s.binning.name = s.feature;
  s.binning.kind = kind;
  if (form == "bins") {
    s.form = ShapeForm::piecewise_constant;
    from_json(j, s.binning);
  } else if (form == "knots") {
    s.form = ShapeForm::piecewise_linear;
    s.knots = j.at("knots").get<std::vector<double>>();
    s.missing_value = j.value("missing_value", 0.0);
  } else {
    throw std::invalid_argument("unknown shape form '" + form + "'");
  }
  s.validate();
}

void to_json(nlohmann::json& j, const AdditiveModel& m) {
  j = nlohmann::json{{"version", AdditiveModel::kFormatVersion},
                     {"algorithm", m.algorithm},
                     {"seed", m.seed},
                     {"intercept", m.intercept},
                     {"features", m.shapes},
                     {"binning_digest", m.binning_digest},
                     {"config_digest", m.config_digest}};
  if (!m.flags.empty()) j["flags"] = m.flags;
}

void from_json(const nlohmann::json& j, AdditiveModel& m) {
  if (!j.is_object() || !j.contains("version")) throw std::invalid_argument("model payload has no version");
  const int version = j.at("version").get<int>();
  if (version != AdditiveModel::kFormatVersion) {
    throw FormatVersionError("unsupported model format version " + std::to_string(version));
  }
  m = AdditiveModel{};
  m.algorithm = j.value("algorithm", std::string{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.intercept = j.at("intercept").get<double>();
  m.shapes = j.at("features").get<std::vector<ShapeFunction>>();
  m.binning_digest = j.value("binning_digest", std::string{});
  m.config_digest = j.value("config_digest", std::string{});
  m.flags = j.value("flags", std::vector<std::string>{});
  if (!std::isfinite(m.intercept)) throw std::invalid_argument("non-finite intercept");
}

std::string serialize(const AdditiveModel& m) {
  nlohmann::json j = m;
  return j.dump(1);
}

AdditiveModel deserialize(std::string_view payload) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed model payload: ") + e.what());
  }
  try {
    return j.get<AdditiveModel>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed model payload: ") + e.what());
  }
}

void save_model(const AdditiveModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(m) << '\n';
}

AdditiveModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

}  // namespace gamlab
