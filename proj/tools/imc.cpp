// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// imc: run inference under simulated intermittent power, sweep failure
// injection, calibrate the accelerator tile, search compressions and
// evaluate the messages-per-Joule model.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "imc/error.hpp"
#include "imc/experiment.hpp"
#include "imc/fixtures.hpp"
#include "imc/genesis.hpp"
#include "imc/impj.hpp"
#include "imc/tails.hpp"

namespace fs = std::filesystem;
using namespace imc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNonTermination = 3;
constexpr int kExitDivergence = 4;

std::optional<fs::path> config_dir() {
  if (const char* d = std::getenv("IMC_CONFIG_DIR"); d && *d) return fs::path(d);
  return std::nullopt;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(fmt::format("missing {} path", what));
  if (!fs::is_regular_file(path)) throw ValidationError(fmt::format("{} '{}' does not exist", what, path));
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path));
  out << text;
}

struct DeviceArgs {
  std::string device;
  std::string preset;
  double capacity_uj = 0.0;
  std::string schedule;

  void add(CLI::App* app) {
    app->add_option("--device", device, "device config JSON (default: $IMC_CONFIG_DIR/device.json)");
    app->add_option("--preset", preset, "capacitor preset name");
    app->add_option("--capacity", capacity_uj, "buffer capacity in microjoules (overrides the preset)");
    app->add_option("--schedule", schedule,
                    "continuous | fixed[:UJ] | random:SEED:MIN:MAX | trace:FILE (default: from the device config)");
  }

  DeviceConfig resolve() const {
    DeviceConfig c;
    if (!device.empty()) {
      require_file(device, "device config");
      c = DeviceConfig::load(device);
    } else if (auto dir = config_dir(); dir && fs::is_regular_file(*dir / "device.json")) {
      c = DeviceConfig::load(*dir / "device.json");
    }
    if (!preset.empty()) {
      c.preset = preset;
      c.capacity_uj.reset();
    }
    if (capacity_uj > 0.0) c.capacity_uj = capacity_uj;
    if (!schedule.empty()) c.schedule = parse_schedule(schedule);
    c.validate();
    return c;
  }
};

struct ModelArgs {
  std::string model;
  std::string dataset;
  int sample = 0;

  void add(CLI::App* app) {
    app->add_option("--model", model, "model archive")->required();
    app->add_option("--dataset", dataset, "dataset file")->required();
    app->add_option("--sample", sample, "sample index")->check(CLI::NonNegativeNumber);
  }

  // Every referenced file is read and validated before any simulation.
  std::pair<Network, Dataset> load() const {
    require_file(model, "model");
    require_file(dataset, "dataset");
    Network net = load_model(model);
    Dataset data = load_dataset(dataset);
    if (data.feature_shape != net.input_shape) {
      throw ValidationError(fmt::format("dataset features [{}] do not match the model input [{}]",
                                        fmt::join(data.feature_shape, ","), fmt::join(net.input_shape, ",")));
    }
    if (static_cast<std::size_t>(sample) >= data.samples.size()) {
      throw ValidationError(fmt::format("sample {} out of range ({} samples)", sample, data.samples.size()));
    }
    return {std::move(net), std::move(data)};
  }
};

int predicted_class(const Network& net, const FixedTensor& scores) {
  return argmax(std::span<const q15>(scores.data).first(static_cast<std::size_t>(net.class_count)));
}

int cmd_infer(const ModelArgs& m, const DeviceArgs& d, const std::string& runtime, const std::string& json_out,
              const std::string& csv_out, const std::string& trace_out) {
  const RuntimeSpec spec = RuntimeSpec::parse(runtime);
  auto [net, data] = m.load();
  const DeviceConfig cfg = d.resolve();
  const FixedTensor& x = data.samples[static_cast<std::size_t>(m.sample)].input;
  Device dev(cfg);
  dev.enable_trace(!trace_out.empty());
  const InferenceResult r = run_inference(dev, net, x, spec);
  const int cls = predicted_class(net, r.scores);
  const bool matches = r.scores == reference_infer(net, x);

  nlohmann::json j = {{"model", m.model},     {"dataset", m.dataset}, {"sample", m.sample},
                      {"runtime", spec.str()}, {"device", cfg},        {"predicted_class", cls},
                      {"label", data.samples[static_cast<std::size_t>(m.sample)].label},
                      {"matches_reference", matches},
                      {"scores", r.scores.data},
                      {"stats", r.stats}};
  write_text(json_out, j.dump(2) + "\n");
  write_text(csv_out, stats_csv_header() + "\n" + stats_csv_row(r.stats) + "\n");
  write_text(trace_out, trace_csv(dev.trace()));
  fmt::print("runtime={} class={} energy_uj={:.2f} reboots={} reexecuted={} matches_reference={}\n", spec.str(), cls,
             r.stats.total_energy_uj, r.stats.reboots, r.stats.reexecuted_steps, matches);
  return kExitOk;
}

int cmd_crashsweep(const ModelArgs& m, const DeviceArgs& d, const std::string& runtime,
                   const CrashSweepOptions& opt, const std::string& json_out) {
  const RuntimeSpec spec = RuntimeSpec::parse(runtime);
  auto [net, data] = m.load();
  const DeviceConfig cfg = d.resolve();
  const CrashSweepReport rep = crash_sweep(net, data.samples[static_cast<std::size_t>(m.sample)].input, spec, cfg, opt);
  nlohmann::json j = rep;
  j["device"] = cfg;
  j["seeds"] = opt.seeds;
  j["first_seed"] = opt.first_seed;
  j["exhaustive_stride"] = opt.exhaustive_stride;
  write_text(json_out, j.dump(2) + "\n");
  fmt::print("network={} runtime={} runs={} exhaustive={} reboots={} divergences={}\n", rep.network, rep.runtime,
             rep.runs, rep.exhaustive_points, rep.reboots, rep.divergences.size());
  for (const auto& dv : rep.divergences) fmt::print("DIVERGENCE seed={} schedule={} {}\n", dv.seed, dv.schedule, dv.reason);
  return rep.passed() ? kExitOk : kExitDivergence;
}

int cmd_compress(const std::string& base_path, const std::string& data_path, const std::string& grid_path,
                 const std::string& options_path, unsigned threads, const std::string& csv_out,
                 const std::string& model_out, const std::string& json_out) {
  require_file(base_path, "base network");
  require_file(data_path, "dataset");
  require_file(grid_path, "sweep grid");
  const FloatNetwork base = load_float_network(base_path);
  const Dataset data = load_dataset(data_path);
  const SweepGrid grid = SweepGrid::load(grid_path);
  GenesisOptions opt;
  if (!options_path.empty()) {
    require_file(options_path, "search options");
    std::ifstream in(options_path);
    try {
      opt = nlohmann::json::parse(in).get<GenesisOptions>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}: {}", options_path, e.what()));
    }
  }
  if (threads > 0) opt.threads = threads;
  const SearchResult res = search(base, grid, data, opt);
  write_text(csv_out, frontier_csv(res));
  nlohmann::json j = {{"base", base_path}, {"grid", grid}, {"options", opt}, {"configs", res.configs.size()}};
  if (res.chosen >= 0) {
    const auto& c = res.configs[static_cast<std::size_t>(res.chosen)];
    j["chosen"] = {{"id", c.id}, {"impj", c.impj}, {"bytes", c.parameter_bytes}, {"accuracy", c.accuracy}};
    if (!model_out.empty()) save_model(res.chosen_network, model_out);
  } else {
    j["chosen"] = nullptr;
  }
  write_text(json_out, j.dump(2) + "\n");
  if (res.chosen < 0) {
    fmt::print(stderr, "NoFeasibleConfiguration: no configuration fits {} bytes\n", opt.memory_bound_bytes);
    return kExitValidation;
  }
  const auto& c = res.configs[static_cast<std::size_t>(res.chosen)];
  fmt::print("configs={} chosen={} impj={:.6g} bytes={} accuracy={:.4f}\n", res.configs.size(), c.id, c.impj,
             c.parameter_bytes, c.accuracy);
  return kExitOk;
}

int cmd_impj(const std::string& preset_path, int steps, const std::string& csv_out, const std::string& json_out) {
  ImpjPreset preset = ImpjPreset::wildlife();
  if (!preset_path.empty()) {
    require_file(preset_path, "impj preset");
    preset = ImpjPreset::load(preset_path);
  } else if (auto dir = config_dir(); dir && fs::is_regular_file(*dir / "impj_wildlife.json")) {
    preset = ImpjPreset::load(*dir / "impj_wildlife.json");
  }
  const ImpjRatios q = impj_ratios(preset);
  const std::string table = impj_csv(impj_sweep(preset, steps));
  write_text(csv_out, table);
  write_text(json_out, nlohmann::json{{"preset", preset}, {"ratios", q}}.dump(2) + "\n");
  fmt::print("ideal/baseline={:.4f}\n", q.ideal_over_baseline);
  fmt::print("tails/naive (full image)={:.4f}\n", q.tails_full_over_naive_full);
  fmt::print("tails (result only)/baseline={:.2f}\n", q.tails_result_over_baseline);
  fmt::print("tails/naive (result only)={:.4f}\n", q.tails_over_naive);
  fmt::print("ideal/tails (result only)={:.4f}\n", q.ideal_result_over_tails);
  if (csv_out.empty()) std::cout << table;
  return kExitOk;
}

int cmd_calibrate(const DeviceArgs& d, double budget_uj, int elements, int initial_tile, const std::string& json_out) {
  DeviceConfig cfg = d.resolve();
  TailsOptions opt;
  opt.initial_tile = initial_tile;
  if (elements > 0) budget_uj = calibration_energy(cfg, elements, opt);
  if (budget_uj > 0.0) {
    cfg.schedule = PowerSchedule::fixed_budget(budget_uj);
    cfg.capacity_uj = budget_uj;
  }
  Device dev(cfg);
  Accelerator acc(dev);
  const CalibrationResult r = calibrate(dev, acc, opt);
  write_text(json_out, nlohmann::json{{"device", cfg},
                                      {"initial_tile", initial_tile},
                                      {"budget_uj", budget_uj},
                                      {"capacity_elements", acc.capacity()},
                                      {"tile", r.tile},
                                      {"reboots", r.reboots},
                                      {"energy_uj", r.energy_uj}}
                                .dump(2) +
                            "\n");
  fmt::print("tile={} reboots={} energy_uj={:.2f}\n", r.tile, r.reboots, r.energy_uj);
  return kExitOk;
}

int cmd_report(const ModelArgs& m, const DeviceArgs& d, const std::vector<std::string>& runtimes,
               const std::string& csv_out, const std::string& stages_out, const std::string& json_out) {
  std::vector<RuntimeSpec> specs;
  for (const auto& r : runtimes) specs.push_back(RuntimeSpec::parse(r));
  auto [net, data] = m.load();
  const DeviceConfig cfg = d.resolve();
  const FixedTensor& x = data.samples[static_cast<std::size_t>(m.sample)].input;
  std::string csv = stats_csv_header() + "\n";
  std::string stages = "runtime,stage,layer,kind,energy_uj,iterations,iteration_attempts,commits,logged_writes,"
                       "iteration_logged_writes,accel_elements,undo_backups\n";
  nlohmann::json runs = nlohmann::json::array();
  int worst = kExitOk;
  for (const auto& spec : specs) {
    Device dev(cfg);
    try {
      const InferenceResult r = run_inference(dev, net, x, spec);
      csv += stats_csv_row(r.stats) + "\n";
      for (std::size_t s = 0; s < r.stats.stages.size(); ++s) {
        const auto& st = r.stats.stages[s];
        stages += fmt::format("{},{},{},{},{:.2f},{},{},{},{},{},{},{}\n", spec.str(), s, st.layer, st.kind,
                              st.energy_uj, st.iterations, st.iteration_attempts, st.commits, st.logged_writes,
                              st.iteration_logged_writes, st.accel_elements, st.undo_backups);
      }
      runs.push_back({{"runtime", spec.str()},
                      {"stats", r.stats},
                      {"matches_reference", r.scores == reference_infer(net, x)}});
    } catch (const NonTermination& e) {
      runs.push_back({{"runtime", spec.str()}, {"non_termination", e.what()}});
      fmt::print("{}: NonTermination: {}\n", spec.str(), e.what());
      worst = kExitNonTermination;
    }
  }
  write_text(csv_out.empty() ? "-" : csv_out, csv);
  write_text(stages_out, stages);
  write_text(json_out, nlohmann::json{{"model", m.model}, {"sample", m.sample}, {"device", cfg}, {"runs", runs}}.dump(2) + "\n");
  return worst;
}

int cmd_fixtures(const std::string& out, const std::string& config_out) {
  write_fixtures(out);
  if (!config_out.empty()) {
    fs::create_directories(config_out);
    write_text((fs::path(config_out) / "device.json").string(), nlohmann::json(DeviceConfig{}).dump(2) + "\n");
    write_text((fs::path(config_out) / "impj_wildlife.json").string(),
               nlohmann::json(ImpjPreset::wildlife()).dump(2) + "\n");
  }
  fmt::print("fixtures written to {}\n", out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intermittent inference simulator"};
  app.require_subcommand(1);

  ModelArgs model;
  DeviceArgs device;
  std::string runtime = "sonic";
  std::string json_out, csv_out, trace_out, stages_out;

  auto* infer = app.add_subcommand("infer", "run one inference");
  model.add(infer);
  device.add(infer);
  infer->add_option("--runtime", runtime, "naive | tiled:K | sonic | tails[:T]");
  infer->add_option("--json", json_out, "JSON report path");
  infer->add_option("--csv", csv_out, "stats CSV path");
  infer->add_option("--trace", trace_out, "per-charge-cycle trace CSV path");

  CrashSweepOptions sweep;
  auto* crash = app.add_subcommand("crashsweep", "failure injection against the reference");
  model.add(crash);
  device.add(crash);
  crash->add_option("--runtime", runtime, "runtime under test");
  crash->add_option("--seeds", sweep.seeds, "random schedules");
  crash->add_option("--first-seed", sweep.first_seed, "first random seed");
  crash->add_option("--exhaustive-stride", sweep.exhaustive_stride, "boundary stride, 0 = skip the exhaustive pass");
  crash->add_option("--min-factor", sweep.min_factor, "smallest on-period, in max atomic energies");
  crash->add_option("--max-factor", sweep.max_factor, "largest on-period, in max atomic energies");
  crash->add_option("--json", json_out, "JSON report path");

  std::string base, data, grid, options;
  unsigned threads = 0;
  std::string model_out;
  auto* compress = app.add_subcommand("compress", "compression search");
  compress->add_option("--base", base, "real-valued base network JSON")->required();
  compress->add_option("--dataset", data, "dataset file")->required();
  compress->add_option("--grid", grid, "sweep grid JSON")->required();
  compress->add_option("--options", options, "search options JSON");
  compress->add_option("--threads", threads, "worker threads");
  compress->add_option("--csv", csv_out, "frontier CSV path (default: stdout)");
  compress->add_option("--model-out", model_out, "write the chosen network here");
  compress->add_option("--json", json_out, "JSON summary path");

  std::string preset;
  int steps = 20;
  auto* impj = app.add_subcommand("impj", "messages-per-Joule model");
  impj->add_option("--preset", preset, "preset JSON (default: built-in wildlife)");
  impj->add_option("--steps", steps, "accuracy steps")->check(CLI::PositiveNumber);
  impj->add_option("--csv", csv_out, "sweep CSV path");
  impj->add_option("--json", json_out, "JSON summary path");

  double budget = 0.0;
  int elements = 0, initial_tile = 256;
  auto* calib = app.add_subcommand("calibrate", "accelerator tile calibration");
  device.add(calib);
  calib->add_option("--budget", budget, "energy per charge cycle in microjoules");
  calib->add_option("--elements", elements, "budget that pays exactly for a round trip of this many elements");
  calib->add_option("--initial-tile", initial_tile, "first tile tried");
  calib->add_option("--json", json_out, "JSON report path");

  std::vector<std::string> runtimes{"naive", "tiled:8", "sonic", "tails"};
  auto* report = app.add_subcommand("report", "compare runtimes on one input");
  model.add(report);
  device.add(report);
  report->add_option("--runtimes", runtimes, "runtimes to compare")->delimiter(',');
  report->add_option("--csv", csv_out, "stats CSV path (default: stdout)");
  report->add_option("--stages", stages_out, "per-stage CSV path");
  report->add_option("--json", json_out, "JSON report path");

  std::string out = "fixtures", config_out;
  auto* fixtures = app.add_subcommand("fixtures", "regenerate the fixture files");
  fixtures->add_option("--out", out, "output directory");
  fixtures->add_option("--config-out", config_out, "also write default config files here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*infer) return cmd_infer(model, device, runtime, json_out, csv_out, trace_out);
    if (*crash) return cmd_crashsweep(model, device, runtime, sweep, json_out);
    if (*compress) return cmd_compress(base, data, grid, options, threads, csv_out.empty() ? "-" : csv_out, model_out, json_out);
    if (*impj) return cmd_impj(preset, steps, csv_out, json_out);
    if (*calib) return cmd_calibrate(device, budget, elements, initial_tile, json_out);
    if (*report) return cmd_report(model, device, runtimes, csv_out, stages_out, json_out);
    if (*fixtures) return cmd_fixtures(out, config_out);
  } catch (const NonTermination& e) {
    fmt::print(stderr, "NonTermination: {}\n", e.what());
    return kExitNonTermination;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "validation error: {}\n", e.what());
    return kExitValidation;
  } catch (const ContractViolation& e) {
    fmt::print(stderr, "invalid argument: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitOther;
  }
  return kExitOther;
}
