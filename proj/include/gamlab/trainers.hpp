#pragma once

// Named training presets shared by the CLI, the experiment runner and the
// Python bindings.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gamlab/boosting.hpp"
#include "gamlab/dataset.hpp"
#include "gamlab/model.hpp"
#include "gamlab/smooth.hpp"

namespace gamlab {

enum class Scale { desk, paper };

std::string_view to_string(Scale scale);
Scale scale_from_string(std::string_view text);

enum class Family { boosting, flam, spline, linear };

struct TrainConfig {
  std::string algorithm = "ebm";
  Scale scale = Scale::desk;
  std::size_t max_bins = 255;
  Family family = Family::boosting;
  BoostConfig boost;
  FlamConfig flam;
  SplineConfig spline;
  LinearConfig linear;

  // Throws std::invalid_argument for an unknown algorithm name.
  static TrainConfig preset(std::string_view algorithm, Scale scale = Scale::desk);

  void validate() const;
  std::string digest() const;
};

// ebm, ebm-bf, xgb, xgb-l2, flam, spline, lr, lasso, ilr, mlr.
const std::vector<std::string>& algorithm_names();

// Flat JSON: {"algorithm": ..., "scale": ..., "max_bins": ..., <family keys>}.
void to_json(nlohmann::json& j, const TrainConfig& cfg);
// Starts from the preset named by "algorithm" at `scale` (or the object's own
// "scale") and applies the remaining keys. Unknown keys throw.
TrainConfig train_config_from_json(const nlohmann::json& j, Scale scale = Scale::desk);

// Fits on data.split.train (validation rows drive early stopping or model
// selection where the algorithm uses them). The seed replaces cfg's seed.
AdditiveModel train(const BinnedDataset& data, const TrainConfig& cfg, std::uint64_t seed);

// Fitting procedure as used by the evaluation protocols.
using Trainer = std::function<AdditiveModel(const BinnedDataset& data, std::uint64_t seed)>;

Trainer make_trainer(TrainConfig cfg);

}  // namespace gamlab
