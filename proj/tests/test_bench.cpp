#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gamlab/bench.hpp"
#include "gamlab/plots.hpp"
#include "gamlab/random.hpp"

using namespace gamlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gamlab_test_bench_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Two numeric features, a boolean-like categorical and a group column.
void write_csv(const fs::path& path, std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  std::ofstream f(path);
  f << "age,score,smoker,region,label\n";
  const char* regions[] = {"north", "south", "east"};
  for (std::size_t r = 0; r < rows; ++r) {
    const double age = std::round(20 + 50 * rng.uniform());
    const double score = rng.normal();
    const bool smoker = rng.bernoulli(0.3);
    const auto region = regions[rng.index(3)];
    const double z = 0.04 * (age - 45) + 0.8 * score + (smoker ? 0.7 : 0.0) - 0.3;
    f << age << ',' << score << ',' << (smoker ? "yes" : "no") << ',' << region << ','
      << (rng.bernoulli(1.0 / (1.0 + std::exp(-z))) ? 1 : 0) << '\n';
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

json small_config(const std::string& output) {
  return json{{"name", "small"},
              {"output", output},
              {"seeds", {0, 1}},
              {"tasks", {"accuracy"}},
              {"datasets", {{{"name", "toy"}, {"path", "toy.csv"}, {"groups", {"region"}}, {"ablate", {"region"}}}}},
              {"algorithms",
               {{{"id", "lr"}, {"Cs", {0.1, 10.0}}},
                {{"id", "ebm"}, {"outer_bags", 2}, {"inner_bags", 0}, {"max_rounds", 300}}}}};
}

}  // namespace

TEST_CASE("summarize: two-point normalization, ties and exclusions") {
  MetricTable one{{"d", {{"a", 60.0}, {"b", 80.0}}}};
  auto s = summarize(one, {"a", "b"});
  REQUIRE(s.rows.size() == 2);
  CHECK(s.rows[0].normalized_auc == 0.0);
  CHECK(s.rows[1].normalized_auc == 100.0);
  CHECK(s.rows[1].average_rank == 1.0);

  MetricTable tie{{"d", {{"a", 70.0}, {"b", 70.0}, {"c", 70.0}}}};
  s = summarize(tie, {"a", "b", "c"});
  for (const auto& r : s.rows) CHECK(r.average_rank == 2.0);

  MetricTable gap{{"d1", {{"a", 70.0}, {"b", 71.0}}}, {"d2", {{"a", 60.0}}}};
  s = summarize(gap, {"a", "b"});
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].algorithm == "a");
  CHECK(s.notes.size() == 1);
}

TEST_CASE("parse_experiment: rejects inconsistent configs") {
  const auto base = fs::temp_directory_path();
  auto c = small_config("out");
  CHECK_NOTHROW(parse_experiment(c, base));

  auto bad = c;
  bad["tasks"] = {"accuracy", "astrology"};
  CHECK_THROWS_AS(parse_experiment(bad, base), ConfigError);
  bad = c;
  bad["algorithms"].push_back("lr");
  CHECK_THROWS_AS(parse_experiment(bad, base), ConfigError);
  bad = c;
  bad["algorithms"][0]["no_such_knob"] = 1;
  CHECK_THROWS_AS(parse_experiment(bad, base), ConfigError);
  bad = c;
  bad["tasks"] = {"rankgap"};
  CHECK_THROWS_AS(parse_experiment(bad, base), ConfigError);
  bad = c;
  bad["surprise"] = true;
  CHECK_THROWS_AS(parse_experiment(bad, base), ConfigError);

  const auto cfg = parse_experiment(c, base / "nowhere");
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("run_experiment: accuracy grid, resume and determinism") {
  const auto dir = scratch("accuracy");
  write_csv(dir / "toy.csv", 1200, 3);
  const auto cfg = parse_experiment(small_config("out1"), dir);
  const auto first = run_experiment(cfg);
  CHECK_FALSE(first.any_failed());
  CHECK(first.task_status.at("accuracy") == "ok");

  const auto cells = slurp(dir / "out1" / "tables" / "accuracy_cells.csv");
  CHECK(count_lines(cells) == 1 + 4);
  const auto table = slurp(dir / "out1" / "tables" / "accuracy.csv");
  CHECK(table.find("Average AUC") != std::string::npos);
  CHECK(table.find("Average Rank") != std::string::npos);
  CHECK(table.find("Normalized AUC") != std::string::npos);
  CHECK(table.find(" ± ") != std::string::npos);

  // Rerun: every cell is skipped and every produced file keeps its hash.
  const auto again = run_experiment(cfg);
  for (const auto& c : again.cells) CHECK(c.status == "skipped");
  CHECK(again.files == first.files);

  // A model file that changed on disk invalidates its cell.
  { std::ofstream(dir / "out1" / "models" / "toy" / "lr" / "seed-0.json") << "{}"; }
  const auto repaired = run_experiment(cfg);
  std::size_t reran = 0;
  for (const auto& c : repaired.cells) reran += c.status == "ok";
  CHECK(reran == 1);
  // Cell records carry wall-clock time; every artifact is identical.
  for (const auto& [file, hash] : first.files) {
    if (file.rfind("cells/", 0) != 0) CHECK(repaired.files.at(file) == hash);
  }

  // An independent run into a fresh directory reproduces the tables exactly.
  const auto cfg2 = parse_experiment(small_config("out2"), dir);
  run_experiment(cfg2);
  for (const auto* name : {"accuracy.csv", "accuracy_cells.csv"}) {
    CHECK(sha256_file(dir / "out1" / "tables" / name) == sha256_file(dir / "out2" / "tables" / name));
  }
}

TEST_CASE("run_experiment: density, fairness with ablation, plots") {
  const auto dir = scratch("tasks");
  write_csv(dir / "toy.csv", 1200, 4);
  auto j = small_config("out");
  j["seeds"] = {0};
  j["tasks"] = {"density", "fairness", "plots"};
  j["fairness"] = {{"reference", "ebm"}};
  const auto cfg = parse_experiment(j, dir);
  const auto m = run_experiment(cfg);
  CHECK_FALSE(m.any_failed());

  const auto density = slurp(dir / "out" / "tables" / "density.csv");
  CHECK(density.find("Average") != std::string::npos);

  const auto fairness = slurp(dir / "out" / "tables" / "fairness.csv");
  CHECK(fairness.find("ebm-without-region") != std::string::npos);
  std::istringstream lines(fairness);
  std::string line;
  std::getline(lines, line);
  std::size_t ref_rows = 0;
  while (std::getline(lines, line)) {
    if (line.find(",ebm,") != std::string::npos) {
      ++ref_rows;
      CHECK(line.substr(line.rfind(',') + 1) == "0.0000");
    }
  }
  CHECK(ref_rows == 4);   // All + three regions

  CHECK(fs::exists(dir / "out" / "plots" / "toy" / "ebm" / "smoker.svg"));
  CHECK(fs::exists(dir / "out" / "plots" / "toy" / "overlay" / "age.svg"));
  CHECK(fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("export_shapes: boolean feature gives two bars and two rows") {
  const auto dir = scratch("plots");
  write_csv(dir / "toy.csv", 600, 5);
  CsvOptions o;
  auto raw = std::make_shared<const RawDataset>(load_csv(dir / "toy.csv", o));
  const auto data = prepare(raw, 0, 32);
  const auto& b = data.spec.feature("smoker");
  std::vector<double> v(b.bin_count(), 0.0);
  v[b.bin_of_category("yes")] = 0.8;
  AdditiveModel m;
  m.algorithm = "hand";
  m.shapes.push_back(ShapeFunction::constant_over(b, v));
  m.shapes.push_back(ShapeFunction::linear("age", {20.0, 45.0, 70.0}, {-1.0, 0.5, 0.2}));
  export_shapes(m, data, dir / "plots");

  const auto csv = slurp(dir / "plots" / "smoker.csv");
  CHECK(count_lines(csv) == 3);
  const auto svg = slurp(dir / "plots" / "smoker.svg");
  std::size_t bars = 0;
  for (std::size_t pos = svg.find("<rect x="); pos != std::string::npos; pos = svg.find("<rect x=", pos + 1)) ++bars;
  CHECK(bars == 2 + 1);   // two bars and the legend swatch
}

TEST_CASE("shape CSV values re-evaluate exactly") {
  const auto dir = scratch("roundtrip");
  write_csv(dir / "toy.csv", 800, 6);
  auto raw = std::make_shared<const RawDataset>(load_csv(dir / "toy.csv"));
  const auto data = prepare(raw, 0, 16);
  Rng rng(9);
  AdditiveModel m;
  for (const auto& b : data.spec.features) {
    std::vector<double> v(b.bin_count());
    for (auto& x : v) x = rng.normal();
    m.shapes.push_back(ShapeFunction::constant_over(b, v));
  }
  m.shapes[1] = ShapeFunction::linear("score", {-2.0, 0.1, 2.5}, {0.3, -0.7, 1.1});
  const auto centered = center(m, *raw, data.split.train);
  export_shapes(m, data, dir / "plots");
  for (const auto& s : m.shapes) {
    std::istringstream in(slurp(dir / "plots" / (s.feature + ".csv")));
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
      const auto x = line.substr(0, c1);
      const double value = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      Cell cell;
      if (x == "missing") cell = std::monostate{};
      else if (s.kind() == ColumnKind::categorical) cell = x;
      else cell = std::stod(x);
      CHECK(shape_value(centered, s.feature, cell) == value);
      ++rows;
    }
    CHECK(rows > 0);
  }
}

TEST_CASE("export_overlay: one SVG with a labeled series per model") {
  const auto dir = scratch("overlay");
  write_csv(dir / "toy.csv", 600, 7);
  auto raw = std::make_shared<const RawDataset>(load_csv(dir / "toy.csv"));
  const auto data = prepare(raw, 0, 16);
  AdditiveModel a, b;
  a.shapes.push_back(ShapeFunction::linear("age", {20.0, 70.0}, {-1.0, 1.0}));
  b.shapes.push_back(ShapeFunction::linear("age", {20.0, 70.0}, {1.0, -1.0}));
  export_overlay({{"first-model", a}, {"second-model", b}}, data, dir / "ov");
  const auto svg = slurp(dir / "ov" / "age.svg");
  CHECK(svg.find("first-model") != std::string::npos);
  CHECK(svg.find("second-model") != std::string::npos);
  std::size_t lines = 0;
  for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++lines;
  CHECK(lines == 2);
  CHECK(slurp(dir / "ov" / "age.csv").rfind("x,first-model,second-model,density\n", 0) == 0);
}
