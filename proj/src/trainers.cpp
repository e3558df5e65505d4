#include "gamlab/trainers.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gamlab/random.hpp"

namespace gamlab {

using nlohmann::json;

std::string_view to_string(Scale scale) { return scale == Scale::paper ? "paper" : "desk"; }

Scale scale_from_string(std::string_view text) {
  if (text == "desk") return Scale::desk;
  if (text == "paper") return Scale::paper;
  throw std::invalid_argument("unknown scale '" + std::string(text) + "'");
}

const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names = {"ebm", "ebm-bf", "xgb", "xgb-l2", "flam",
                                                 "spline", "lr", "lasso", "ilr", "mlr"};
  return names;
}

TrainConfig TrainConfig::preset(std::string_view algorithm, Scale scale) {
  TrainConfig c;
  c.algorithm = std::string(algorithm);
  c.scale = scale;
  const bool paper = scale == Scale::paper;
  auto boost = [&](BoostMode mode) {
    c.family = Family::boosting;
    c.boost = paper ? BoostConfig::paper_scale(mode) : BoostConfig{};
    c.boost.mode = mode;
    if (mode == BoostMode::newton || mode == BoostMode::newton_one_feature) {
      c.boost.learning_rate = 0.3;
      c.boost.leaves_per_stump = 2;
      c.boost.inner_bags = 0;
      c.boost.one_hot_categoricals = true;
    }
  };
  if (algorithm == "ebm") {
    boost(BoostMode::cyclic);
  } else if (algorithm == "ebm-bf") {
    boost(BoostMode::best_first);
  } else if (algorithm == "xgb") {
    boost(BoostMode::newton);
  } else if (algorithm == "xgb-l2") {
    boost(BoostMode::newton_one_feature);
  } else if (algorithm == "flam") {
    c.family = Family::flam;
    if (paper) c.flam = FlamConfig::paper_scale();
  } else if (algorithm == "spline") {
    c.family = Family::spline;
    c.spline.grid_points = paper ? 15 : 10;
  } else if (algorithm == "lr" || algorithm == "lasso" || algorithm == "ilr" || algorithm == "mlr") {
    c.family = Family::linear;
    c.linear.penalty = algorithm == "lasso" ? Penalty::l1 : Penalty::l2;
    c.linear.variant = algorithm == "ilr"   ? LinearVariant::indicator_bins
                       : algorithm == "mlr" ? LinearVariant::marginalized
                                            : LinearVariant::plain;
  } else {
    throw std::invalid_argument("unknown algorithm '" + std::string(algorithm) + "'");
  }
  return c;
}

void TrainConfig::validate() const {
  if (max_bins < 2 || max_bins > 65535) throw std::invalid_argument("train config: max_bins must be in [2, 65535]");
  switch (family) {
    case Family::boosting: boost.validate(); break;
    case Family::flam: flam.validate(); break;
    case Family::spline: spline.validate(); break;
    case Family::linear: linear.validate(); break;
  }
}

std::string TrainConfig::digest() const {
  json j = *this;
  return sha256_hex(j.dump());
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"algorithm", c.algorithm}, {"scale", to_string(c.scale)}, {"max_bins", c.max_bins}};
  switch (c.family) {
    case Family::boosting:
      j["mode"] = to_string(c.boost.mode);
      j["learning_rate"] = c.boost.learning_rate;
      j["max_rounds"] = c.boost.max_rounds;
      j["patience"] = c.boost.patience;
      j["outer_bags"] = c.boost.outer_bags;
      j["inner_bags"] = c.boost.inner_bags;
      j["leaves_per_stump"] = c.boost.leaves_per_stump;
      j["newton_lambda"] = c.boost.newton_lambda;
      j["one_hot_categoricals"] = c.boost.one_hot_categoricals;
      j["threads"] = c.boost.threads;
      break;
    case Family::flam:
      j["path_length"] = c.flam.path_length;
      j["min_ratio"] = c.flam.min_ratio;
      j["max_sweeps"] = c.flam.max_sweeps;
      j["tolerance"] = c.flam.tolerance;
      break;
    case Family::spline:
      j["max_basis"] = c.spline.max_basis;
      j["grid_points"] = c.spline.grid_points;
      j["lambda_lo"] = c.spline.lambda_lo;
      j["lambda_hi"] = c.spline.lambda_hi;
      j["export_points"] = c.spline.export_points;
      j["max_iterations"] = c.spline.max_iterations;
      j["tolerance"] = c.spline.tolerance;
      if (!c.spline.lambdas.empty()) j["lambdas"] = c.spline.lambdas;
      break;
    case Family::linear:
      j["Cs"] = c.linear.grid();
      j["folds"] = c.linear.folds;
      j["max_iterations"] = c.linear.max_iterations;
      j["tolerance"] = c.linear.tolerance;
      break;
  }
}

TrainConfig train_config_from_json(const json& j, Scale scale) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  if (j.contains("scale")) scale = scale_from_string(j.at("scale").get<std::string>());
  auto c = TrainConfig::preset(j.value("algorithm", std::string("ebm")), scale);
  for (const auto& [key, v] : j.items()) {
    if (key == "algorithm" || key == "scale") continue;
    if (key == "max_bins") {
      c.max_bins = v.get<std::size_t>();
      continue;
    }
    bool known = true;
    switch (c.family) {
      case Family::boosting:
        if (key == "mode") c.boost.mode = boost_mode_from_string(v.get<std::string>());
        else if (key == "learning_rate") c.boost.learning_rate = v.get<double>();
        else if (key == "max_rounds") c.boost.max_rounds = v.get<std::size_t>();
        else if (key == "patience") c.boost.patience = v.get<std::size_t>();
        else if (key == "outer_bags") c.boost.outer_bags = v.get<std::size_t>();
        else if (key == "inner_bags") c.boost.inner_bags = v.get<std::size_t>();
        else if (key == "leaves_per_stump") c.boost.leaves_per_stump = v.get<std::size_t>();
        else if (key == "newton_lambda") c.boost.newton_lambda = v.get<double>();
        else if (key == "one_hot_categoricals") c.boost.one_hot_categoricals = v.get<bool>();
        else if (key == "threads") c.boost.threads = v.get<std::size_t>();
        else known = false;
        break;
      case Family::flam:
        if (key == "path_length") c.flam.path_length = v.get<std::size_t>();
        else if (key == "min_ratio") c.flam.min_ratio = v.get<double>();
        else if (key == "max_sweeps") c.flam.max_sweeps = v.get<std::size_t>();
        else if (key == "tolerance") c.flam.tolerance = v.get<double>();
        else known = false;
        break;
      case Family::spline:
        if (key == "max_basis") c.spline.max_basis = v.get<std::size_t>();
        else if (key == "grid_points") c.spline.grid_points = v.get<std::size_t>();
        else if (key == "lambda_lo") c.spline.lambda_lo = v.get<double>();
        else if (key == "lambda_hi") c.spline.lambda_hi = v.get<double>();
        else if (key == "export_points") c.spline.export_points = v.get<std::size_t>();
        else if (key == "max_iterations") c.spline.max_iterations = v.get<std::size_t>();
        else if (key == "tolerance") c.spline.tolerance = v.get<double>();
        else if (key == "lambdas") c.spline.lambdas = v.get<std::vector<double>>();
        else known = false;
        break;
      case Family::linear:
        if (key == "Cs") c.linear.Cs = v.get<std::vector<double>>();
        else if (key == "folds") c.linear.folds = v.get<std::size_t>();
        else if (key == "max_iterations") c.linear.max_iterations = v.get<std::size_t>();
        else if (key == "tolerance") c.linear.tolerance = v.get<double>();
        else known = false;
        break;
    }
    if (!known) throw std::invalid_argument("train config: unknown key '" + key + "' for " + c.algorithm);
  }
  c.validate();
  return c;
}

AdditiveModel train(const BinnedDataset& data, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  AdditiveModel m;
  switch (cfg.family) {
    case Family::boosting: {
      auto b = cfg.boost;
      b.seed = seed;
      m = fit_boosted(data, b);
      break;
    }
    case Family::flam: m = fit_flam(data, cfg.flam); break;
    case Family::spline: m = fit_spline(data, cfg.spline); break;
    case Family::linear: {
      auto l = cfg.linear;
      l.seed = seed;
      m = fit_linear(data, l);
      break;
    }
  }
  m.algorithm = cfg.algorithm;
  m.seed = seed;
  m.config_digest = cfg.digest();
  return m;
}

Trainer make_trainer(TrainConfig cfg) {
  cfg.validate();
  return [cfg = std::move(cfg)](const BinnedDataset& data, std::uint64_t seed) { return train(data, cfg, seed); };
}

}  // namespace gamlab
