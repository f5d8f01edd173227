// feddrive: generate synthetic trip data, train central/federated scoring
// models, score trips, and compare model consistency.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "feddrive/feddrive.hpp"

namespace fs = std::filesystem;
using namespace feddrive;

namespace {

struct CommonOpts {
  std::string config_path;
  json config;

  void load() {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw config_error("cannot open config file: " + config_path);
    in >> config;
  }

  template <typename T>
  void fill(const CLI::Option* opt, const char* key, T& value) const {
    if (opt->count() == 0 && config.contains(key)) {
      value = config.at(key).get<T>();
    }
  }
};

unsigned resolve_key_bits(const CLI::Option* opt, unsigned flag_value) {
  if (opt->count() == 0) {
    if (const char* env = std::getenv("FEDDRIVE_KEY_BITS")) {
      return static_cast<unsigned>(std::stoul(env));
    }
  }
  return flag_value;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void write_manifest(const fs::path& where, const std::string& command, json settings) {
  json m{{"tool", "feddrive"},
         {"version", kVersion},
         {"command", command},
         {"settings", std::move(settings)}};
  write_json(where, m);
}

std::vector<MetricSpec> load_specs(const std::string& path) {
  return read_json(path).get<std::vector<MetricSpec>>();
}

std::vector<fed::SimClient> clients_from_table(const csvio::MetricTable& table) {
  std::vector<fed::SimClient> clients;
  for (auto& [vehicle, data] : table.by_vehicle()) {
    clients.emplace_back(vehicle, std::move(data));
  }
  if (clients.empty()) throw data_error("no vehicles in the dataset");
  return clients;
}

void check_table_matches(const csvio::MetricTable& table,
                         const std::vector<MetricSpec>& specs) {
  if (table.X.cols() != specs.size()) {
    throw data_error("metrics CSV has " + std::to_string(table.X.cols()) +
                     " metric columns but the spec file lists " +
                     std::to_string(specs.size()));
  }
}

// ---------------------------------------------------------------- gen ----

int cmd_gen(const std::string& preset, std::uint64_t seed, const std::string& out_dir) {
  datagen::PopulationSpec pop;
  if (preset == "fleet") {
    pop = datagen::fleet_preset(seed);
  } else if (preset == "ubi") {
    pop = datagen::ubi_preset(seed);
  } else {
    throw config_error("unknown preset: " + preset + " (expected fleet or ubi)");
  }

  Matrix X = datagen::gen_synthetic_population(pop);
  auto parts = datagen::partition(X, pop);

  csvio::MetricTable table;
  for (const auto& s : pop.specs) table.metric_names.push_back(s.name);
  for (std::size_t c = 0; c < parts.size(); ++c) {
    for (std::size_t r = 0; r < parts[c].rows(); ++r) {
      table.vehicle_ids.push_back("driver-" + std::to_string(c + 1));
      table.trip_ids.push_back("t" + std::to_string(table.trip_ids.size() + 1));
      std::vector<double> row(parts[c].row(r), parts[c].row(r) + parts[c].cols());
      table.X.append_row(row);
    }
  }

  fs::create_directories(out_dir);
  csvio::write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), table);
  write_json(fs::path(out_dir) / "specs.json", json(pop.specs));
  write_manifest(fs::path(out_dir) / "manifest.json", "gen",
                 json{{"preset", preset},
                      {"seed", seed},
                      {"trips", pop.n_trips},
                      {"clients", pop.clients},
                      {"shards", pop.n_shards}});
  std::cout << "wrote " << out_dir << "/metrics.csv (" << table.X.rows() << " trips, "
            << parts.size() << " clients)\n";
  return 0;
}

// ------------------------------------------------------------ extract ----

int cmd_extract(const std::string& in_csv, const std::string& specs_path,
                const std::string& out_csv) {
  const auto specs = load_specs(specs_path);
  auto streams = csvio::read_records_csv(in_csv);

  csvio::MetricTable table;
  for (const auto& s : specs) table.metric_names.push_back(s.name);
  for (const auto& [vehicle, stream] : streams) {
    metrics::EventThresholds th;
    th.fuel_cap = metrics::fuel_percentile_cap(stream);
    auto trips = metrics::segment_trips(stream, th);
    std::size_t k = 0;
    for (const auto& trip : trips) {
      table.vehicle_ids.push_back(vehicle);
      table.trip_ids.push_back("t" + std::to_string(++k));
      table.X.append_row(metrics::extract_metrics(trip, specs, th));
    }
  }
  if (table.X.rows() == 0) throw data_error("no trips survived segmentation");
  csvio::write_metrics_csv(out_csv, table);
  write_manifest(fs::path(out_csv).string() + ".manifest.json", "extract",
                 json{{"in", in_csv}, {"specs", specs_path}, {"trips", table.X.rows()}});
  std::cout << "wrote " << out_csv << " (" << table.X.rows() << " trips)\n";
  return 0;
}

// --------------------------------------------------------------- hist ----

int cmd_hist(const std::string& data_csv, const std::string& specs_path,
             const std::string& out_dir, int bins, bool svg, std::uint64_t seed,
             unsigned key_bits) {
  const auto specs = load_specs(specs_path);
  auto table = csvio::read_metrics_csv(data_csv);
  check_table_matches(table, specs);
  auto clients = clients_from_table(table);

  fed::Arbiter arbiter(key_bits, seed);
  fed::Transcript log;
  auto [u, v] = fed::global_minmax_pass(clients, specs, arbiter, 1000000000L, seed, &log);
  auto edges = fed::make_bin_edges(v, u, bins);
  auto counts = fed::secure_histogram(clients, edges, &log);

  fs::create_directories(out_dir);
  for (std::size_t j = 0; j < specs.size(); ++j) {
    fs::path base = fs::path(out_dir) / ("hist_" + specs[j].name);
    csvio::write_histogram_csv(base.string() + ".csv", edges[j], counts[j]);
    if (svg) {
      csvio::write_histogram_svg(base.string() + ".svg", edges[j], counts[j],
                                 specs[j].name);
    }
  }
  log.write_jsonl((fs::path(out_dir) / "transcript.jsonl").string());
  write_manifest(fs::path(out_dir) / "manifest.json", "hist",
                 json{{"data", data_csv},
                      {"specs", specs_path},
                      {"bins", bins},
                      {"seed", seed},
                      {"key_bits", key_bits}});
  std::cout << "wrote " << specs.size() << " histograms to " << out_dir << "\n";
  return 0;
}

// -------------------------------------------------------------- train ----

int cmd_train(const std::string& data_csv, const std::string& specs_path,
              const std::string& mode, const std::string& out_dir,
              fed::RoundConfig cfg) {
  const auto specs = load_specs(specs_path);
  auto table = csvio::read_metrics_csv(data_csv);
  check_table_matches(table, specs);

  fs::create_directories(out_dir);
  critic::ScoringModel model;
  json weight_history = json::array();

  if (mode == "central") {
    model = critic::train_central(table.X, specs);
  } else {
    auto clients = clients_from_table(table);
    cfg.clients = clients.size();
    fed::Transcript log;
    fed::FederatedResult result;
    if (mode == "federated") {
      fed::Arbiter arbiter(cfg.key_bits, cfg.seed);
      result = fed::train_federated(clients, specs, cfg, arbiter, &log);
      // the arbiter-issued public key; the private half never leaves the arbiter
      write_json(fs::path(out_dir) / "public_key.json", arbiter.public_key().to_json());
    } else if (mode == "fedavg") {
      result = fed::train_fedavg_baseline(clients, specs, cfg, &log);
    } else {
      throw config_error("unknown mode: " + mode);
    }
    model = result.model;
    for (const auto& w : result.weight_history) weight_history.push_back(w);
    log.write_jsonl((fs::path(out_dir) / "transcript.jsonl").string());
  }

  write_json(fs::path(out_dir) / "model.json", critic::model_to_json(model));
  if (!weight_history.empty()) {
    write_json(fs::path(out_dir) / "weight_history.json", weight_history);
  }
  write_manifest(fs::path(out_dir) / "manifest.json", "train",
                 json{{"data", data_csv},
                      {"specs", specs_path},
                      {"mode", mode},
                      {"round_config", cfg.to_json()}});
  std::cout << "wrote " << out_dir << "/model.json (mode " << mode << ")\n";
  return 0;
}

// -------------------------------------------------------------- score ----

int cmd_score(const std::string& model_path, const std::string& data_csv,
              const std::string& out_csv, const std::string& scale) {
  critic::ScoringModel model = critic::model_from_json(read_json(model_path));
  auto table = csvio::read_metrics_csv(data_csv);
  check_table_matches(table, model.specs);
  auto clients = clients_from_table(table);

  const double factor = scale == "ten" ? 10.0 : 1.0;
  auto scores = fed::federated_infer(model, clients);

  std::ofstream out(out_csv);
  if (!out) throw data_error("cannot write " + out_csv);
  out << "id,score\n";
  for (const auto& [id, score] : scores) {
    out << id << ',' << csvio::format_double(score * factor) << '\n';
  }
  write_manifest(out_csv + ".manifest.json", "score",
                 json{{"model", model_path}, {"data", data_csv}, {"scale", scale}});
  std::cout << "wrote " << out_csv << " (" << scores.size() << " scores)\n";
  return 0;
}

// ------------------------------------------------------------ compare ----

int cmd_compare(const std::string& central_path, const std::string& model_path,
                const std::string& data_csv, const std::string& out_json,
                const std::string& history_path, int bins) {
  critic::ScoringModel central = critic::model_from_json(read_json(central_path));
  critic::ScoringModel other = critic::model_from_json(read_json(model_path));
  auto table = csvio::read_metrics_csv(data_csv);
  check_table_matches(table, central.specs);

  std::optional<std::vector<std::vector<double>>> history;
  if (!history_path.empty()) {
    history = read_json(history_path).get<std::vector<std::vector<double>>>();
  }
  eval::ConsistencyReport rep =
      eval::consistency_report(central, other, table.X, history ? &*history : nullptr);

  json out = rep.to_json();
  out["central_model"] = central_path;
  out["candidate_model"] = model_path;

  // score histograms with the training bin count, for side-by-side plots
  auto h_central = eval::score_histogram(central.score_all(table.X), bins);
  auto h_other = eval::score_histogram(other.score_all(table.X), bins);
  out["score_histogram"] = {{"edges", h_central.edges},
                            {"central", h_central.counts},
                            {"candidate", h_other.counts}};
  const std::string stem = out_json.size() > 5 && out_json.ends_with(".json")
                               ? out_json.substr(0, out_json.size() - 5)
                               : out_json;
  csvio::write_histogram_csv(stem + "_central_hist.csv", h_central.edges,
                             h_central.counts);
  csvio::write_histogram_csv(stem + "_candidate_hist.csv", h_other.edges,
                             h_other.counts);

  write_json(out_json, out);
  write_manifest(out_json + ".manifest.json", "compare",
                 json{{"central", central_path},
                      {"candidate", model_path},
                      {"data", data_csv}});
  std::cout << "r2=" << rep.r2 << " mae=" << rep.mae << " weight_gap=" << rep.weight_gap
            << " -> " << out_json << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated driving-behavior scoring toolkit"};
  app.require_subcommand(0, 1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic trip population");
  CommonOpts gen_common;
  std::string gen_preset = "ubi", gen_out = "out";
  std::uint64_t gen_seed = 1;
  gen->add_option("--config", gen_common.config_path, "JSON config file");
  auto* gen_preset_opt = gen->add_option("--preset", gen_preset, "fleet or ubi");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "master seed");
  auto* gen_out_opt = gen->add_option("--out", gen_out, "output directory");

  // extract
  auto* extract = app.add_subcommand("extract", "raw telematics CSV to trip metrics");
  std::string ex_in, ex_specs, ex_out = "metrics.csv";
  extract->add_option("--in", ex_in, "raw records CSV")->required();
  extract->add_option("--specs", ex_specs, "metric spec JSON")->required();
  extract->add_option("--out", ex_out, "output metrics CSV");

  // hist
  auto* hist = app.add_subcommand("hist", "secure global histograms per metric");
  std::string h_data, h_specs, h_out = "hist";
  int h_bins = 50;
  bool h_svg = false;
  std::uint64_t h_seed = 1;
  unsigned h_bits = 512;
  hist->add_option("--data", h_data, "metrics CSV")->required();
  hist->add_option("--specs", h_specs, "metric spec JSON")->required();
  hist->add_option("--out", h_out, "output directory");
  hist->add_option("--bins", h_bins, "bin count");
  hist->add_flag("--svg", h_svg, "also write SVG charts");
  hist->add_option("--seed", h_seed, "master seed");
  auto* h_bits_opt = hist->add_option("--key-bits", h_bits, "Paillier key length");

  // train
  auto* train = app.add_subcommand("train", "train a scoring model");
  CommonOpts tr_common;
  std::string tr_data, tr_specs, tr_mode = "central", tr_out = "model";
  fed::RoundConfig tr_cfg;
  tr_cfg.rounds = 300;
  tr_cfg.tau = 0.5;
  tr_cfg.seed = 1;
  train->add_option("--config", tr_common.config_path, "JSON config file");
  auto* tr_data_opt = train->add_option("--data", tr_data, "metrics CSV");
  auto* tr_specs_opt = train->add_option("--specs", tr_specs, "metric spec JSON");
  auto* tr_mode_opt =
      train->add_option("--mode", tr_mode, "central, federated, or fedavg");
  auto* tr_out_opt = train->add_option("--out", tr_out, "output directory");
  auto* tr_tau_opt = train->add_option("--tau", tr_cfg.tau, "client selection rate");
  auto* tr_rounds_opt = train->add_option("--rounds", tr_cfg.rounds, "training rounds T");
  auto* tr_seed_opt = train->add_option("--seed", tr_cfg.seed, "master seed");
  auto* tr_bins_opt = train->add_option("--bins", tr_cfg.histogram_bins, "histogram bins");
  auto* tr_bits_opt = train->add_option("--key-bits", tr_cfg.key_bits,
                                        "Paillier key length");

  // score
  auto* score = app.add_subcommand("score", "score trips with a trained model");
  std::string sc_model, sc_data, sc_out = "scores.csv", sc_scale = "unit";
  score->add_option("--model", sc_model, "model JSON")->required();
  score->add_option("--data", sc_data, "metrics CSV")->required();
  score->add_option("--out", sc_out, "output CSV");
  score->add_option("--scale", sc_scale, "unit (0-1) or ten (0-10)")
      ->check(CLI::IsMember({"unit", "ten"}));

  // compare
  auto* compare = app.add_subcommand("compare", "consistency report of two models");
  std::string cp_central, cp_model, cp_data, cp_out = "report.json", cp_hist;
  int cp_bins = 50;
  compare->add_option("--central", cp_central, "ground-truth model JSON")->required();
  compare->add_option("--model", cp_model, "candidate model JSON")->required();
  compare->add_option("--data", cp_data, "metrics CSV")->required();
  compare->add_option("--out", cp_out, "report JSON path");
  compare->add_option("--history", cp_hist, "weight_history.json for per-round error");
  compare->add_option("--bins", cp_bins, "score histogram bins");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return app.get_subcommands().empty() ? 64 : 1;
  }

  if (app.get_subcommands().empty()) {
    std::cerr << app.help() << std::flush;
    return 64;
  }

  try {
    if (gen->parsed()) {
      gen_common.load();
      gen_common.fill(gen_preset_opt, "preset", gen_preset);
      gen_common.fill(gen_seed_opt, "seed", gen_seed);
      gen_common.fill(gen_out_opt, "out", gen_out);
      return cmd_gen(gen_preset, gen_seed, gen_out);
    }
    if (extract->parsed()) return cmd_extract(ex_in, ex_specs, ex_out);
    if (hist->parsed()) {
      return cmd_hist(h_data, h_specs, h_out, h_bins, h_svg, h_seed,
                      resolve_key_bits(h_bits_opt, h_bits));
    }
    if (train->parsed()) {
      tr_common.load();
      tr_common.fill(tr_data_opt, "data", tr_data);
      tr_common.fill(tr_specs_opt, "specs", tr_specs);
      tr_common.fill(tr_mode_opt, "mode", tr_mode);
      tr_common.fill(tr_out_opt, "out", tr_out);
      tr_common.fill(tr_tau_opt, "tau", tr_cfg.tau);
      tr_common.fill(tr_rounds_opt, "T", tr_cfg.rounds);
      tr_common.fill(tr_seed_opt, "seed", tr_cfg.seed);
      tr_common.fill(tr_bins_opt, "bins", tr_cfg.histogram_bins);
      tr_common.fill(tr_bits_opt, "key_bits", tr_cfg.key_bits);
      tr_cfg.key_bits = resolve_key_bits(tr_bits_opt, tr_cfg.key_bits);
      if (tr_data.empty() || tr_specs.empty()) {
        throw config_error("train needs --data and --specs (or a config file)");
      }
      return cmd_train(tr_data, tr_specs, tr_mode, tr_out, tr_cfg);
    }
    if (score->parsed()) return cmd_score(sc_model, sc_data, sc_out, sc_scale);
    if (compare->parsed()) {
      return cmd_compare(cp_central, cp_model, cp_data, cp_out, cp_hist, cp_bins);
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const decrypt_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
