#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>

#include "gamlab/dataset.hpp"
#include "gamlab/random.hpp"

using namespace gamlab;

namespace {

RawDataset numeric_dataset(std::vector<double> x, std::vector<double> y) {
  RawDataset ds;
  ds.name = "synthetic";
  Column c;
  c.name = "x";
  c.numeric = std::move(x);
  ds.columns.push_back(std::move(c));
  ds.labels = std::move(y);
  return ds;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

}  // namespace

TEST_CASE("load a small CSV with inferred kinds") {
  const auto ds = parse_csv("age,race,label\n23,Black,1\n41,White,0\n35,Other,0\n19,Black,1\n");
  CHECK(ds.rows() == 4);
  CHECK(ds.features() == 2);
  CHECK(ds.column("age").kind == ColumnKind::numeric);
  CHECK(ds.column("race").kind == ColumnKind::categorical);
  CHECK(ds.labels == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("missing markers, quoting and schema overrides") {
  CsvOptions opts;
  opts.label_column = "y";
  opts.schema["zip"].kind = ColumnKind::categorical;
  const auto ds = parse_csv("a,\"b, quoted\",zip,y\r\n1.5,\"x \"\"1\"\"\",02139,0\r\nNA,?,10001,1\r\n,y,02139,1\r\n", opts);
  CHECK(ds.features() == 3);
  const auto& a = ds.column("a");
  CHECK(a.kind == ColumnKind::numeric);
  CHECK_FALSE(a.is_missing(0));
  CHECK(a.is_missing(1));
  CHECK(a.is_missing(2));
  const auto& b = ds.column("b, quoted");
  CHECK(b.kind == ColumnKind::categorical);
  CHECK(b.dictionary[0] == "x \"1\"");
  CHECK(b.is_missing(1));
  const auto& zip = ds.column("zip");
  CHECK(zip.kind == ColumnKind::categorical);
  CHECK(zip.dictionary.size() == 2);
}

TEST_CASE("load_csv error paths") {
  CHECK_THROWS(load_csv("/nonexistent/file.csv"));
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2\n"), doctest::Contains("label column"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_csv("a,label\n1,2\n"), doctest::Contains("not binary"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_csv("a,label\n1,\n"), doctest::Contains("not binary"), std::runtime_error);
}

TEST_CASE("split sizes, determinism and disjointness") {
  std::vector<double> y(100, 0.0);
  for (std::size_t i = 0; i < 100; i += 3) y[i] = 1.0;
  const auto ds = numeric_dataset(std::vector<double>(100, 1.0), y);
  const auto a = make_split(ds, 0);
  CHECK(a.train.size() == 70);
  CHECK(a.val.size() == 15);
  CHECK(a.test.size() == 15);
  const auto b = make_split(ds, 0);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.all() == iota_rows(100));
  const auto c = make_split(ds, 1);
  CHECK(c.train != a.train);

  CHECK_THROWS_AS(make_split(numeric_dataset({1, 2, 3}, {0, 1, 0}), 0), std::invalid_argument);
  CHECK_THROWS_AS(make_split(ds, 0, {0.5, 0.4, 0.4}), std::invalid_argument);
}

TEST_CASE("stratified split keeps the positive rate within two points") {
  // 1000 rows, 100 positives: each partition's rate is counted directly.
  std::vector<double> y(1000, 0.0);
  for (std::size_t i = 0; i < 100; ++i) y[i * 7 % 1000] = 1.0;
  const auto ds = numeric_dataset(std::vector<double>(1000, 0.0), y);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto plan = make_split(ds, seed);
    for (const auto* part : {&plan.train, &plan.val, &plan.test}) {
      double pos = 0;
      for (auto r : *part) pos += y[r];
      const double rate = pos / static_cast<double>(part->size());
      CHECK(rate >= 0.08);
      CHECK(rate <= 0.12);
    }
  }
}

TEST_CASE("quantile edges of 1..1000 with four bins") {
  std::vector<double> x(1000);
  std::iota(x.begin(), x.end(), 1.0);
  const auto ds = numeric_dataset(x, std::vector<double>(1000, 0.0));
  const auto rows = iota_rows(1000);
  const auto spec = fit_binning(ds, rows, 4);
  // Quantile oracle: the cut for quantile q sits halfway between the sorted
  // values on either side of position q*n/B.
  std::vector<double> expected;
  for (int q = 1; q < 4; ++q) {
    const std::size_t pos = static_cast<std::size_t>(q) * 1000 / 4;
    expected.push_back(0.5 * (x[pos - 1] + x[pos]));
  }
  CHECK(spec.features[0].cuts == expected);
  CHECK(expected == std::vector<double>{250.5, 500.5, 750.5});
  CHECK(spec.features[0].bin_count() == 4);
  CHECK(spec.features[0].representatives[0] == doctest::Approx(125.5));
}

TEST_CASE("distinct-value cap and degenerate features") {
  const auto boolean = numeric_dataset({0, 1, 1, 0, 1, 0, 0}, std::vector<double>(7, 0.0));
  const auto spec = fit_binning(boolean, iota_rows(7), 255);
  CHECK(spec.features[0].bin_count() == 2);
  CHECK_FALSE(spec.features[0].degenerate);

  const auto constant = numeric_dataset({3, 3, 3, 3}, {0, 1, 0, 1});
  const auto cspec = fit_binning(constant, iota_rows(4), 255);
  CHECK(cspec.features[0].bin_count() == 1);
  CHECK(cspec.features[0].degenerate);

  CHECK_THROWS_AS(fit_binning(constant, iota_rows(4), 1), std::invalid_argument);
}

TEST_CASE("heavily tied values never produce empty bins") {
  std::vector<double> x(500, 0.0);
  for (std::size_t i = 400; i < 500; ++i) x[i] = static_cast<double>(i);
  const auto ds = numeric_dataset(x, std::vector<double>(500, 0.0));
  const auto spec = fit_binning(ds, iota_rows(500), 16);
  const auto& b = spec.features[0];
  CHECK(b.bin_count() <= 16);
  for (std::size_t k = 0; k < b.value_bins(); ++k) CHECK(b.train_counts[k] > 0);
  for (std::size_t k = 1; k < b.cuts.size(); ++k) CHECK(b.cuts[k] > b.cuts[k - 1]);
}

TEST_CASE("every raw value lands in the bin whose edges bracket it") {
  Rng rng(42);
  std::vector<double> x(2000);
  for (auto& v : x) v = std::round(rng.normal() * 100.0) / 10.0;
  const auto ds = std::make_shared<const RawDataset>(numeric_dataset(x, std::vector<double>(2000, 0.0)));
  const auto data = prepare(ds, 3, 32);
  const auto& b = data.spec.features[0];
  for (std::size_t r = 0; r < x.size(); ++r) {
    const std::size_t bin = data.bins[0][r];
    const double lo = bin == 0 ? -INFINITY : b.cuts[bin - 1];
    const double hi = bin == b.cuts.size() ? INFINITY : b.cuts[bin];
    CHECK(lo <= x[r]);
    CHECK(x[r] < hi);
  }
}

TEST_CASE("binning is fitted on training rows only") {
  // Test rows come from a shifted distribution; refitting with them must move edges.
  std::vector<double> x(1000);
  for (std::size_t i = 0; i < 1000; ++i) x[i] = static_cast<double>(i % 100);
  const auto ds = numeric_dataset(x, std::vector<double>(1000, 0.0));
  auto plan = make_split(ds, 0);
  RawDataset shifted = ds;
  for (auto r : plan.test) shifted.columns[0].numeric[r] += 1000.0;
  const auto train_only = fit_binning(shifted, plan.train, 8);
  std::vector<std::size_t> train_and_test = plan.train;
  train_and_test.insert(train_and_test.end(), plan.test.begin(), plan.test.end());
  const auto leaked = fit_binning(shifted, train_and_test, 8);
  CHECK(train_only.features[0].cuts != leaked.features[0].cuts);
  CHECK(train_only.features[0].cuts.back() < 100.0);
}

TEST_CASE("label encoding, one-hot and unseen categories") {
  const auto raw = parse_csv("race,label\nBlack,1\nWhite,0\nOther,0\nBlack,1\nWhite,1\nAsian,0\n");
  auto ds = std::make_shared<const RawDataset>(raw);
  const std::vector<std::size_t> train = {0, 1, 2, 3, 4};
  const auto spec = fit_binning(*ds, train);
  const auto& b = spec.features[0];
  CHECK(b.categories == std::vector<std::string>{"Black", "White", "Other"});
  SplitPlan plan;
  plan.train = train;
  plan.test = {5};
  const auto data = encode(ds, spec, plan);
  CHECK(data.bins[0][0] == 0);
  CHECK(data.bins[0][1] == 1);
  CHECK(data.bins[0][2] == 2);
  CHECK(data.bins[0][5] == *b.unknown_bin());

  const auto hot = data.one_hot(0);
  REQUIRE(hot.size() == 3);
  for (std::size_t r = 0; r < 5; ++r) {
    int total = 0;
    for (const auto& column : hot) total += column[r];
    CHECK(total == 1);
  }
  CHECK(hot[0][5] + hot[1][5] + hot[2][5] == 0);
}

TEST_CASE("missing numeric values get a dedicated bin") {
  const auto raw = parse_csv("x,label\n1,0\nNA,1\n2,0\n3,1\n,0\n");
  auto ds = std::make_shared<const RawDataset>(raw);
  std::vector<std::size_t> rows = {0, 1, 2, 3, 4};
  const auto spec = fit_binning(*ds, rows);
  const auto& b = spec.features[0];
  CHECK(b.has_missing_bin);
  CHECK(b.bin_count() == 4);
  SplitPlan plan;
  plan.train = rows;
  const auto data = encode(ds, spec, plan);
  CHECK(data.bins[0][1] == *b.missing_bin());
  CHECK(data.bins[0][4] == *b.missing_bin());
  CHECK(b.train_counts[*b.missing_bin()] == 2.0);
}

TEST_CASE("dropping a feature keeps the rest aligned") {
  const auto raw = parse_csv("a,b,c,label\n1,x,5,0\n2,y,6,1\n3,x,7,0\n4,y,8,1\n");
  auto ds = std::make_shared<const RawDataset>(raw);
  SplitPlan plan;
  plan.train = {0, 1, 2, 3};
  const auto data = encode(ds, fit_binning(*ds, plan.train), plan);
  const auto dropped = data.without_feature("b");
  CHECK(dropped.features() == 2);
  CHECK(dropped.spec.features[1].name == "c");
  CHECK(dropped.bins[1] == data.bins[2]);
  CHECK_THROWS(data.without_feature("zzz"));
  CHECK_THROWS(dropped.without_feature("a").without_feature("c"));
}
