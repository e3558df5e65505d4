#include "gamlab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>

#include "gamlab/parallel.hpp"
#include "gamlab/plots.hpp"
#include "gamlab/random.hpp"

namespace gamlab {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- Configuration ---------------------------------------------------------

std::string ExperimentConfig::digest() const { return sha256_hex(source.dump()); }

const DatasetEntry& ExperimentConfig::dataset(std::string_view n) const {
  for (const auto& d : datasets) {
    if (d.name == n) return d;
  }
  throw ConfigError("unknown dataset '" + std::string(n) + "'");
}

const AlgorithmEntry& ExperimentConfig::algorithm(std::string_view id) const {
  for (const auto& a : algorithms) {
    if (a.id == id) return a;
  }
  throw ConfigError("unknown algorithm id '" + std::string(id) + "'");
}

ExperimentConfig parse_experiment(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> keys = {"name",  "scale",    "output",   "datasets", "algorithms", "seeds",
                                             "tasks", "split",    "fidelity", "fairness", "biasvar"};
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (!keys.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    c.source = j;
    c.name = j.value("name", c.name);
    if (j.contains("scale")) c.scale = scale_from_string(j.at("scale").get<std::string>());
    c.output_dir = base_dir / j.value("output", std::string("out"));
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
    if (j.contains("tasks")) {
      c.tasks.clear();
      for (const auto& t : j.at("tasks")) {
        const auto name = t.get<std::string>();
        if (!known_tasks().contains(name)) throw ConfigError("unknown task '" + name + "'");
        c.tasks.insert(name);
      }
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.train = s.value("train", c.split.train);
      c.split.val = s.value("val", c.split.val);
      c.split.test = s.value("test", c.split.test);
    }
    for (const auto& d : j.at("datasets")) {
      DatasetEntry e;
      e.name = d.at("name").get<std::string>();
      e.path = base_dir / d.at("path").get<std::string>();
      e.label_column = d.value("label", e.label_column);
      e.group_columns = d.value("groups", std::vector<std::string>{});
      e.ablate = d.value("ablate", std::vector<std::string>{});
      if (d.contains("schema")) e.schema = d.at("schema");
      for (const auto& other : c.datasets) {
        if (other.name == e.name) throw ConfigError("duplicate dataset name '" + e.name + "'");
      }
      c.datasets.push_back(std::move(e));
    }
    for (const auto& a : j.at("algorithms")) {
      AlgorithmEntry e;
      if (a.is_string()) {
        e.id = a.get<std::string>();
        e.config = TrainConfig::preset(e.id, c.scale);
      } else {
        e.id = a.at("id").get<std::string>();
        json overrides = a;
        overrides.erase("id");
        if (!overrides.contains("algorithm")) overrides["algorithm"] = e.id;
        e.config = train_config_from_json(overrides, c.scale);
      }
      for (const auto& other : c.algorithms) {
        if (other.id == e.id) throw ConfigError("duplicate algorithm id '" + e.id + "'");
      }
      c.algorithms.push_back(std::move(e));
    }
    if (c.datasets.empty()) throw ConfigError("no datasets configured");
    if (c.algorithms.empty()) throw ConfigError("no algorithms configured");
    if (j.contains("fidelity")) {
      const auto& f = j.at("fidelity");
      c.fidelity_generators = f.value("generators", std::vector<std::string>{});
      if (f.contains("label_mode")) c.label_mode = label_mode_from_string(f.at("label_mode").get<std::string>());
    }
    for (const auto& g : c.fidelity_generators) c.algorithm(g);
    if (j.contains("fairness")) c.fairness_reference = j.at("fairness").value("reference", std::string());
    if (!c.fairness_reference.empty()) c.algorithm(c.fairness_reference);
    if (j.contains("biasvar")) {
      const auto& b = j.at("biasvar");
      c.biasvar.rounds = b.value("rounds", c.biasvar.rounds);
      c.biasvar.reps = b.value("reps", c.biasvar.reps);
      c.biasvar.subsample = b.value("subsample", c.biasvar.subsample);
      c.biasvar.min_rounds = b.value("min_rounds", std::min(c.biasvar.min_rounds, c.biasvar.rounds));
    }
    if (c.tasks.contains("rankgap") && !c.tasks.contains("fidelity")) {
      throw ConfigError("task rankgap requires task fidelity");
    }
    if (c.tasks.contains("fidelity") && c.algorithms.size() < 2) {
      throw ConfigError("task fidelity needs at least two algorithms");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment(j, path.parent_path());
}

std::shared_ptr<const RawDataset> load_dataset(const DatasetEntry& e) {
  CsvOptions o;
  o.label_column = e.label_column;
  o.group_columns = e.group_columns;
  o.schema = parse_schema(e.schema);
  auto raw = load_csv(e.path, o);
  raw.name = e.name;
  return std::make_shared<const RawDataset>(std::move(raw));
}

bool RunManifest::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellRecord& c) { return c.status == "failed"; });
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"config_digest", m.config_digest}, {"toolkit_version", m.toolkit_version}, {"tasks", m.task_status}};
  auto& cells = j["cells"] = json::array();
  for (const auto& c : m.cells) {
    json x{{"task", c.task}, {"key", c.key}, {"status", c.status}, {"seconds", c.seconds}, {"seed", c.seed}};
    if (!c.error.empty()) x["error"] = c.error;
    cells.push_back(std::move(x));
  }
  j["files"] = m.files;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return sha256_hex(s.str());
}

AccuracySummary summarize(const MetricTable& auc_table, const std::vector<std::string>& algorithms) {
  AccuracySummary out;
  std::vector<std::string> kept;
  for (const auto& a : algorithms) {
    bool complete = !auc_table.empty();
    for (const auto& [d, row] : auc_table) complete = complete && row.contains(a);
    if (complete) kept.push_back(a);
    else out.notes.push_back("algorithm '" + a + "' excluded: missing accuracy cells");
  }
  std::vector<SummaryRow> rows(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) rows[i].algorithm = kept[i];
  if (kept.empty()) return out;
  for (const auto& [d, row] : auc_table) {
    std::vector<double> v;
    for (const auto& a : kept) v.push_back(row.at(a));
    const auto ranks = average_ranks(v);
    const auto norm = normalize_0_100(v);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      rows[i].average_auc += v[i];
      rows[i].average_rank += ranks[i];
      rows[i].normalized_auc += norm[i];
    }
  }
  const double n = static_cast<double>(auc_table.size());
  for (auto& r : rows) {
    r.average_auc /= n;
    r.average_rank /= n;
    r.normalized_auc /= n;
  }
  out.rows = std::move(rows);
  return out;
}

// ---- Runner ------------------------------------------------------------------

namespace {

std::string fmt(double x, int decimals = 6) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << text;
  }
  fs::rename(tmp, p);
}

struct Cell {
  std::string task;
  std::string key;
  std::uint64_t seed = 0;
  // Produces the payload; appends every written file to `outputs`.
  std::function<json(std::vector<fs::path>& outputs)> body;
};

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, const RunOptions& opt) : cfg_(cfg), opt_(opt), out_(cfg.output_dir) {
    manifest_.config_digest = cfg.digest();
  }

  RunManifest run();

 private:
  const ExperimentConfig& cfg_;
  RunOptions opt_;
  fs::path out_;
  RunManifest manifest_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const RawDataset>> data_;
  std::map<std::string, std::string> data_errors_;

  // payloads by task/key; absent when the cell failed
  std::map<std::string, json> payload_;

  void log(const std::string& line) {
    if (!opt_.log) return;
    std::lock_guard lock(mu_);
    *opt_.log << line << '\n';
    opt_.log->flush();
  }

  fs::path record_path(const Cell& c) const {
    std::string k = c.key;
    std::replace(k.begin(), k.end(), '/', '~');
    return out_ / "cells" / c.task / (safe_file_stem(k) + ".json");
  }

  std::string rel(const fs::path& p) const { return fs::relative(p, out_).generic_string(); }

  std::optional<json> resume(const Cell& c) const {
    const auto path = record_path(c);
    if (!fs::exists(path)) return std::nullopt;
    try {
      std::ifstream f(path);
      const json rec = json::parse(f);
      if (rec.at("status") != "ok") return std::nullopt;
      for (const auto& [file, hash] : rec.at("outputs").items()) {
        const auto p = out_ / file;
        if (!fs::exists(p) || sha256_file(p) != hash.get<std::string>()) return std::nullopt;
      }
      return std::optional<json>(std::in_place, rec);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void run_cells(std::vector<Cell> cells, std::size_t threads) {
    std::vector<CellRecord> records(cells.size());
    std::vector<std::optional<json>> payloads(cells.size());
    parallel_for(cells.size(), std::max<std::size_t>(threads, 1), [&](std::size_t i) {
      const auto& c = cells[i];
      auto& r = records[i];
      r.task = c.task;
      r.key = c.key;
      r.seed = c.seed;
      if (auto rec = resume(c)) {
        r.status = "skipped";
        r.seconds = rec->value("seconds", 0.0);
        payloads[i] = rec->at("payload");
        log("[" + c.task + "] " + c.key + " skipped (up to date)");
        return;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        std::vector<fs::path> outputs;
        auto payload = c.body(outputs);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        json rec{{"task", c.task}, {"key", c.key}, {"seed", c.seed}, {"status", "ok"}, {"seconds", r.seconds},
                 {"payload", payload}, {"outputs", json::object()}};
        for (const auto& p : outputs) rec["outputs"][rel(p)] = sha256_file(p);
        write_text(record_path(c), rec.dump(1) + "\n");
        r.status = "ok";
        payloads[i] = std::move(payload);
        log("[" + c.task + "] " + c.key + " ok " + fmt(r.seconds, 1) + "s");
      } catch (const std::exception& e) {
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        r.status = "failed";
        r.error = e.what();
        log("[" + c.task + "] " + c.key + " FAILED: " + r.error);
      }
    });
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      auto& status = manifest_.task_status[c.task];
      if (status.empty()) status = "ok";
      if (records[i].status == "failed") status = "failed";
      if (payloads[i]) payload_[c.task + "/" + c.key] = std::move(*payloads[i]);
      manifest_.cells.push_back(std::move(records[i]));
    }
  }

  const json* payload(const std::string& task, const std::string& key) const {
    const auto it = payload_.find(task + "/" + key);
    return it == payload_.end() ? nullptr : &it->second;
  }

  std::shared_ptr<const RawDataset> dataset(const std::string& name) const {
    const auto it = data_.find(name);
    if (it == data_.end()) {
      const auto err = data_errors_.find(name);
      throw std::runtime_error("dataset '" + name + "' unavailable: " + (err == data_errors_.end() ? "" : err->second));
    }
    return it->second;
  }

  BinnedDataset prepared(const std::string& d, std::uint64_t seed, std::size_t max_bins) const {
    return prepare(dataset(d), seed, max_bins, cfg_.split);
  }

  static std::string seed_key(std::uint64_t s) { return "seed-" + std::to_string(s); }

  fs::path model_path(const std::string& d, const std::string& label, std::uint64_t seed) const {
    return out_ / "models" / safe_file_stem(d) / safe_file_stem(label) / (seed_key(seed) + ".json");
  }

  std::string reference_id() const {
    return cfg_.fairness_reference.empty() ? cfg_.algorithms.front().id : cfg_.fairness_reference;
  }

  std::vector<std::pair<std::string, std::string>> ablations(const DatasetEntry& d) const {
    std::vector<std::pair<std::string, std::string>> out;   // (label, feature)
    for (const auto& f : d.ablate) out.emplace_back(reference_id() + "-without-" + f, f);
    return out;
  }

  std::size_t inner_threads(std::size_t cells) const {
    return std::max<std::size_t>(1, opt_.threads / std::max<std::size_t>(cells, 1));
  }

  void model_cells();
  void ablation_cells();
  void density_cells();
  void biasvar_cells();
  void fidelity_cells();
  void fairness_cells();
  void plot_cells();
  void write_tables();
  void write_manifest();
};

json evaluation_json(const AdditiveModel& m, const BinnedDataset& data) {
  const auto e = evaluate(m, *data.raw, data.split.test);
  return json{{"auc", e.auc}, {"cross_entropy", e.cross_entropy}, {"n_test", e.n}};
}

void Runner::model_cells() {
  std::vector<Cell> cells;
  for (const auto& d : cfg_.datasets) {
    for (const auto& a : cfg_.algorithms) {
      for (auto s : cfg_.seeds) {
        cells.push_back({"accuracy", d.name + "/" + a.id + "/" + seed_key(s), s,
                         [this, d = d.name, a = a, s](std::vector<fs::path>& outputs) {
                           const auto data = prepared(d, s, a.config.max_bins);
                           const auto m = train(data, a.config, s);
                           const auto path = model_path(d, a.id, s);
                           fs::create_directories(path.parent_path());
                           save_model(m, path);
                           outputs.push_back(path);
                           return evaluation_json(m, data);
                         }});
      }
    }
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::ablation_cells() {
  std::vector<Cell> cells;
  const auto& ref = cfg_.algorithm(reference_id());
  for (const auto& d : cfg_.datasets) {
    for (const auto& [label, feature] : ablations(d)) {
      for (auto s : cfg_.seeds) {
        cells.push_back({"ablate", d.name + "/" + label + "/" + seed_key(s), s,
                         [this, d = d.name, label = label, feature = feature, ref, s](std::vector<fs::path>& outputs) {
                           const auto data = prepared(d, s, ref.config.max_bins);
                           const auto trainer = make_trainer(ref.config);
                           auto m = ablate_and_retrain(trainer, data, feature, s);
                           m.algorithm = label;
                           const auto path = model_path(d, label, s);
                           fs::create_directories(path.parent_path());
                           save_model(m, path);
                           outputs.push_back(path);
                           return evaluation_json(m, data);
                         }});
      }
    }
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::density_cells() {
  std::vector<Cell> cells;
  for (const auto& d : cfg_.datasets) {
    for (const auto& a : cfg_.algorithms) {
      for (auto s : cfg_.seeds) {
        cells.push_back({"density", d.name + "/" + a.id + "/" + seed_key(s), s,
                         [this, d = d.name, a = a, s](std::vector<fs::path>&) {
                           const auto m = load_model(model_path(d, a.id, s));
                           const auto data = prepared(d, s, a.config.max_bins);
                           return json(feature_density(m, data));
                         }});
      }
    }
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::biasvar_cells() {
  std::vector<Cell> cells;
  const std::size_t n = cfg_.datasets.size() * cfg_.algorithms.size();
  for (const auto& d : cfg_.datasets) {
    for (const auto& a : cfg_.algorithms) {
      const auto s = cfg_.seeds.front();
      cells.push_back({"biasvar", d.name + "/" + a.id, s, [this, d = d.name, a = a, s, n](std::vector<fs::path>&) {
                         auto o = cfg_.biasvar;
                         o.seed = s;
                         o.max_bins = a.config.max_bins;
                         o.threads = inner_threads(n);
                         return json(bias_variance(make_trainer(a.config), dataset(d), o));
                       }});
    }
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::fidelity_cells() {
  std::vector<Cell> cells;
  std::vector<std::string> gens = cfg_.fidelity_generators;
  if (gens.empty()) {
    for (const auto& a : cfg_.algorithms) gens.push_back(a.id);
  }
  for (const auto& d : cfg_.datasets) {
    const auto s = cfg_.seeds.front();
    cells.push_back({"fidelity", d.name, s, [this, d = d.name, gens, s](std::vector<fs::path>&) {
                       std::vector<NamedTrainer> candidates, generators;
                       std::size_t max_bins = 0;
                       for (const auto& a : cfg_.algorithms) {
                         candidates.push_back({a.id, make_trainer(a.config)});
                         max_bins = std::max(max_bins, a.config.max_bins);
                       }
                       for (const auto& g : gens) generators.push_back({g, make_trainer(cfg_.algorithm(g).config)});
                       FidelityOptions o;
                       o.seed = s;
                       o.max_bins = max_bins;
                       o.label_mode = cfg_.label_mode;
                       o.threads = inner_threads(cfg_.datasets.size());
                       return json(worst_case_fidelity(candidates, generators, dataset(d), o));
                     }});
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::fairness_cells() {
  std::vector<Cell> cells;
  for (const auto& d : cfg_.datasets) {
    std::vector<std::string> labels;
    for (const auto& a : cfg_.algorithms) labels.push_back(a.id);
    for (const auto& [label, f] : ablations(d)) labels.push_back(label);
    for (const auto& label : labels) {
      for (auto s : cfg_.seeds) {
        cells.push_back({"fairness", d.name + "/" + label + "/" + seed_key(s), s,
                         [this, d = d, label, s](std::vector<fs::path>&) {
                           const auto m = load_model(model_path(d.name, label, s));
                           const auto raw = dataset(d.name);
                           json j = json::object();
                           for (const auto& col : raw->group_columns) j[col] = subgroup_report(m, *raw, col);
                           return j;
                         }});
      }
    }
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::plot_cells() {
  std::vector<Cell> cells;
  for (const auto& d : cfg_.datasets) {
    const auto s = cfg_.seeds.front();
    cells.push_back({"plots", d.name, s, [this, d = d.name, s](std::vector<fs::path>& outputs) {
                       std::vector<PlotSeries> series;
                       std::size_t max_bins = 0;
                       for (const auto& a : cfg_.algorithms) max_bins = std::max(max_bins, a.config.max_bins);
                       const auto common = prepared(d, s, max_bins);
                       for (const auto& a : cfg_.algorithms) {
                         const auto m = load_model(model_path(d, a.id, s));
                         const auto own = prepared(d, s, a.config.max_bins);
                         const auto dir = out_ / "plots" / safe_file_stem(d) / safe_file_stem(a.id);
                         for (auto& f : export_shapes(m, own, dir)) outputs.push_back(f);
                         series.push_back({a.id, m});
                       }
                       for (auto& f : export_overlay(series, common, out_ / "plots" / safe_file_stem(d) / "overlay")) {
                         outputs.push_back(f);
                       }
                       return json::object();
                     }});
  }
  run_cells(std::move(cells), opt_.threads);
}

void Runner::write_tables() {
  const auto& ds = cfg_.datasets;
  const auto& algs = cfg_.algorithms;
  const bool want_accuracy = cfg_.tasks.contains("accuracy");

  if (want_accuracy) {
    std::string cells = "dataset,algorithm,seed,auc,cross_entropy\n";
    std::string table = "dataset";
    for (const auto& a : algs) table += "," + csv_field(a.id);
    table += "\n";
    MetricTable mean_auc;
    for (const auto& d : ds) {
      table += csv_field(d.name);
      for (const auto& a : algs) {
        std::vector<double> aucs;
        for (auto s : cfg_.seeds) {
          const auto* p = payload("accuracy", d.name + "/" + a.id + "/" + seed_key(s));
          if (!p) continue;
          const double auc = p->at("auc").is_number() ? p->at("auc").get<double>() : std::nan("");
          aucs.push_back(auc);
          cells += csv_field(d.name) + "," + csv_field(a.id) + "," + std::to_string(s) + "," + fmt(auc) + "," +
                   fmt(p->at("cross_entropy").get<double>()) + "\n";
        }
        if (aucs.size() == cfg_.seeds.size()) {
          const auto [m, sd] = mean_std(aucs);
          mean_auc[d.name][a.id] = 100.0 * m;
          table += "," + fmt(100.0 * m, 2) + " ± " + fmt(100.0 * sd, 2);
        } else {
          table += ",missing";
        }
      }
      table += "\n";
    }
    std::vector<std::string> ids;
    for (const auto& a : algs) ids.push_back(a.id);
    const auto summary = summarize(mean_auc, ids);
    std::map<std::string, const SummaryRow*> by_id;
    for (const auto& r : summary.rows) by_id[r.algorithm] = &r;
    const std::vector<std::pair<std::string, double SummaryRow::*>> footer = {
        {"Average AUC", &SummaryRow::average_auc},
        {"Average Rank", &SummaryRow::average_rank},
        {"Normalized AUC", &SummaryRow::normalized_auc}};
    for (const auto& [label, field] : footer) {
      table += label;
      for (const auto& a : algs) table += "," + (by_id.contains(a.id) ? fmt(by_id[a.id]->*field, 2) : std::string("excluded"));
      table += "\n";
    }
    write_text(out_ / "tables" / "accuracy_cells.csv", cells);
    write_text(out_ / "tables" / "accuracy.csv", table);
  }

  if (cfg_.tasks.contains("density")) {
    std::string cells = "dataset,algorithm,seed,density,degenerate\n";
    std::string table = "dataset";
    for (const auto& a : algs) table += "," + csv_field(a.id);
    table += "\n";
    std::map<std::string, std::vector<double>> per_alg;
    for (const auto& d : ds) {
      table += csv_field(d.name);
      for (const auto& a : algs) {
        std::vector<double> v;
        for (auto s : cfg_.seeds) {
          const auto* p = payload("density", d.name + "/" + a.id + "/" + seed_key(s));
          if (!p) continue;
          v.push_back(p->at("density").get<double>());
          cells += csv_field(d.name) + "," + csv_field(a.id) + "," + std::to_string(s) + "," + fmt(v.back()) + "," +
                   (p->at("degenerate").get<bool>() ? "1" : "0") + "\n";
        }
        const auto [m, sd] = mean_std(v);
        per_alg[a.id].push_back(m);
        table += "," + fmt(m, 2);
      }
      table += "\n";
    }
    table += "Average";
    for (const auto& a : algs) table += "," + fmt(mean_std(per_alg[a.id]).first, 2);
    table += "\n";
    write_text(out_ / "tables" / "density_cells.csv", cells);
    write_text(out_ / "tables" / "density.csv", table);
  }

  if (cfg_.tasks.contains("biasvar")) {
    std::string table = "dataset,algorithm,empirical_bias,variance,total,rounds_used,bias_rank,variance_rank\n";
    for (const auto& d : ds) {
      std::vector<const json*> ps;
      std::vector<double> neg_bias, neg_var;
      for (const auto& a : algs) {
        ps.push_back(payload("biasvar", d.name + "/" + a.id));
        neg_bias.push_back(ps.back() ? -ps.back()->at("empirical_bias").get<double>() : -INFINITY);
        neg_var.push_back(ps.back() ? -ps.back()->at("variance").get<double>() : -INFINITY);
      }
      const auto rb = average_ranks(neg_bias), rv = average_ranks(neg_var);
      for (std::size_t i = 0; i < algs.size(); ++i) {
        if (!ps[i]) continue;
        const auto& p = *ps[i];
        table += csv_field(d.name) + "," + csv_field(algs[i].id) + "," + fmt(p.at("empirical_bias").get<double>()) + "," +
                 fmt(p.at("variance").get<double>()) + "," + fmt(p.at("total").get<double>()) + "," +
                 std::to_string(p.at("rounds_used").get<std::size_t>()) + "," + fmt(rb[i], 1) + "," + fmt(rv[i], 1) + "\n";
      }
    }
    write_text(out_ / "tables" / "biasvar.csv", table);
  }

  if (cfg_.tasks.contains("fidelity")) {
    std::string cells = "dataset,generator,algorithm,distance,score,test_auc\n";
    std::string table = "dataset";
    for (const auto& a : algs) table += "," + csv_field(a.id);
    table += "\n";
    std::map<std::string, std::vector<double>> per_alg;
    MetricTable auc_t, fid_t;
    for (const auto& d : ds) {
      const auto* p = payload("fidelity", d.name);
      if (!p) continue;
      const auto gens = p->at("generators").get<std::vector<std::string>>();
      const auto cands = p->at("candidates").get<std::vector<std::string>>();
      for (std::size_t g = 0; g < gens.size(); ++g) {
        for (std::size_t c = 0; c < cands.size(); ++c) {
          const double dist = p->at("distance")[g][c].get<double>();
          const double score = p->at("score")[g][c].get<double>();
          const double auc = p->at("test_auc")[g][c].is_number() ? p->at("test_auc")[g][c].get<double>() : std::nan("");
          cells += csv_field(d.name) + "," + csv_field(gens[g]) + "," + csv_field(cands[c]) + "," + fmt(dist) + "," +
                   fmt(score) + "," + fmt(auc) + "\n";
          auc_t[d.name + "/" + gens[g]][cands[c]] = auc;
          fid_t[d.name + "/" + gens[g]][cands[c]] = score;
        }
      }
      table += csv_field(d.name);
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const double w = p->at("worst_case")[c].get<double>();
        per_alg[cands[c]].push_back(w);
        table += "," + fmt(w, 2);
      }
      table += "\n";
    }
    table += "Average";
    for (const auto& a : algs) table += "," + fmt(mean_std(per_alg[a.id]).first, 2);
    table += "\n";
    write_text(out_ / "tables" / "fidelity_cells.csv", cells);
    write_text(out_ / "tables" / "fidelity.csv", table);

    if (cfg_.tasks.contains("rankgap") && !auc_t.empty()) {
      const auto gap = rank_gap(auc_t, fid_t);
      std::string rg = "algorithm,positive_rank_difference\n";
      for (const auto& a : algs) rg += csv_field(a.id) + "," + fmt(gap.contains(a.id) ? gap.at(a.id) : std::nan(""), 4) + "\n";
      write_text(out_ / "tables" / "rankgap.csv", rg);
    }
  }

  if (cfg_.tasks.contains("fairness")) {
    std::string table = "dataset,column,group,model,n,loss,relative_percent\n";
    for (const auto& d : ds) {
      std::vector<std::string> labels;
      for (const auto& a : algs) labels.push_back(a.id);
      for (const auto& [label, f] : ablations(d)) labels.push_back(label);
      const auto ref = reference_id();
      // (label, column, group) -> (n, losses over seeds)
      std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::size_t, std::vector<double>>> acc;
      std::vector<std::pair<std::string, std::string>> order;   // (column, group) in first-seen order
      for (const auto& label : labels) {
        for (auto s : cfg_.seeds) {
          const auto* p = payload("fairness", d.name + "/" + label + "/" + seed_key(s));
          if (!p) continue;
          for (const auto& [col, rep] : p->items()) {
            auto add = [&](const json& row) {
              const auto g = row.at("group").get<std::string>();
              auto& e = acc[{label, col, g}];
              e.first = row.at("n").get<std::size_t>();
              e.second.push_back(row.at("loss").get<double>());
              if (std::find(order.begin(), order.end(), std::make_pair(col, g)) == order.end()) order.emplace_back(col, g);
            };
            add(rep.at("overall"));
            for (const auto& row : rep.at("groups")) add(row);
          }
        }
      }
      for (const auto& [col, g] : order) {
        const auto rit = acc.find({ref, col, g});
        const double ref_loss = rit == acc.end() ? std::nan("") : mean_std(rit->second.second).first;
        for (const auto& label : labels) {
          const auto it = acc.find({label, col, g});
          if (it == acc.end()) continue;
          const double loss = mean_std(it->second.second).first;
          table += csv_field(d.name) + "," + csv_field(col) + "," + csv_field(g) + "," + csv_field(label) + "," +
                   std::to_string(it->second.first) + "," + fmt(loss) + "," + fmt(100.0 * (loss - ref_loss) / ref_loss, 4) +
                   "\n";
        }
      }
    }
    write_text(out_ / "tables" / "fairness.csv", table);
  }
}

void Runner::write_manifest() {
  manifest_.files.clear();
  for (const auto& e : fs::recursive_directory_iterator(out_)) {
    if (!e.is_regular_file()) continue;
    const auto r = rel(e.path());
    if (r == "manifest.json") continue;
    manifest_.files[r] = sha256_file(e.path());
  }
  write_text(out_ / "manifest.json", json(manifest_).dump(1) + "\n");
}

RunManifest Runner::run() {
  fs::create_directories(out_);
  for (const auto& d : cfg_.datasets) {
    try {
      data_[d.name] = load_dataset(d);
    } catch (const std::exception& e) {
      data_errors_[d.name] = e.what();
      log("dataset " + d.name + " failed to load: " + e.what());
    }
  }
  const auto& t = cfg_.tasks;
  const bool need_models = t.contains("accuracy") || t.contains("density") || t.contains("fairness") || t.contains("plots");
  if (need_models) model_cells();
  if (t.contains("fairness")) ablation_cells();
  if (t.contains("density")) density_cells();
  if (t.contains("biasvar")) biasvar_cells();
  if (t.contains("fidelity")) fidelity_cells();
  if (t.contains("fairness")) fairness_cells();
  if (t.contains("plots")) plot_cells();
  write_tables();
  if (t.contains("rankgap")) manifest_.task_status["rankgap"] = manifest_.task_status["fidelity"];
  write_manifest();
  return manifest_;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  for (const auto& d : cfg.datasets) {
    if (!fs::exists(d.path)) throw ConfigError("dataset '" + d.name + "': file not found: " + d.path.string());
  }
  Runner r(cfg, options);
  return r.run();
}

}  // namespace gamlab
