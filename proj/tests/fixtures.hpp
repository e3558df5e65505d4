#pragma once

// Small synthetic datasets shared by the test binaries.

#include <memory>
#include <string>
#include <vector>

#include "gamlab/dataset.hpp"
#include "gamlab/random.hpp"

namespace fixtures {

// Numeric features drawn N(0,1); labels from `label_of(row features, rng)`.
template <typename LabelFn>
std::shared_ptr<const gamlab::RawDataset> synthetic_raw(std::size_t rows, std::size_t features, std::uint64_t seed,
                                                        LabelFn label_of) {
  gamlab::Rng rng(seed);
  gamlab::RawDataset ds;
  ds.name = "synthetic";
  for (std::size_t j = 0; j < features; ++j) {
    gamlab::Column c;
    c.name = "x" + std::to_string(j + 1);
    c.numeric.resize(rows);
    ds.columns.push_back(std::move(c));
  }
  std::vector<double> x(features);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < features; ++j) {
      x[j] = rng.normal();
      ds.columns[j].numeric[r] = x[j];
    }
    ds.labels.push_back(label_of(x, rng) ? 1.0 : 0.0);
  }
  return std::make_shared<const gamlab::RawDataset>(std::move(ds));
}

template <typename LabelFn>
gamlab::BinnedDataset synthetic(std::size_t rows, std::size_t features, std::uint64_t seed, LabelFn label_of,
                                std::size_t max_bins = 64) {
  return gamlab::prepare(synthetic_raw(rows, features, seed, label_of), seed, max_bins);
}

}  // namespace fixtures
