// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"
#include "imc/sonic.hpp"
#include "imc/tails.hpp"

namespace imc {

namespace {

int parse_count(std::string_view digits, const std::string& text) {
  int v = 0;
  const auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc{} || p != digits.data() + digits.size() || v < 1 || v > 0xFFFF) {
    throw ValidationError(fmt::format("bad runtime '{}': expected a count in [1, 65535]", text));
  }
  return v;
}

}  // namespace

RuntimeSpec RuntimeSpec::parse(const std::string& text) {
  RuntimeSpec s;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  if (head == "tiled") {
    if (!has_arg) throw ValidationError("tiled needs a tile size, e.g. tiled:8");
    s.kind = Kind::kTiled;
    s.tile = parse_count(std::string_view(text).substr(colon + 1), text);
  } else if (head == "tails") {
    s.kind = Kind::kTails;
    s.tile = has_arg ? parse_count(std::string_view(text).substr(colon + 1), text) : 256;
  } else if (!has_arg && head == "naive") {
    s.kind = Kind::kNaive;
  } else if (!has_arg && head == "sonic") {
    s.kind = Kind::kSonic;
  } else if (!has_arg && head == "sonic-nonatomic") {
    s.kind = Kind::kSonicNonatomic;
  } else {
    throw ValidationError(fmt::format("unknown runtime '{}' (naive, tiled:K, sonic, tails)", text));
  }
  return s;
}

std::string RuntimeSpec::str() const {
  switch (kind) {
    case Kind::kNaive:
      return "naive";
    case Kind::kTiled:
      return fmt::format("tiled:{}", tile);
    case Kind::kSonic:
      return "sonic";
    case Kind::kSonicNonatomic:
      return "sonic-nonatomic";
    case Kind::kTails:
      return tile == 256 ? "tails" : fmt::format("tails:{}", tile);
  }
  return "?";
}

InferenceResult run_inference(Device& dev, const Network& net, const FixedTensor& input, const RuntimeSpec& spec,
                              const EngineOptions& engine) {
  switch (spec.kind) {
    case RuntimeSpec::Kind::kNaive:
      return naive_infer(dev, net, input, RuntimeOptions{engine});
    case RuntimeSpec::Kind::kTiled:
      return tiled_infer(dev, net, input, spec.tile, RuntimeOptions{engine});
    case RuntimeSpec::Kind::kSonic:
      return sonic_infer(dev, net, input, SonicOptions{engine, false});
    case RuntimeSpec::Kind::kSonicNonatomic:
      return sonic_infer(dev, net, input, SonicOptions{engine, true});
    case RuntimeSpec::Kind::kTails: {
      TailsOptions t;
      t.engine = engine;
      t.initial_tile = spec.tile;
      return tails_infer(dev, net, input, t);
    }
  }
  throw ContractViolation("unhandled runtime kind");
}

PowerSchedule parse_schedule(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t at = 0;
  while (true) {
    const auto colon = text.find(':', at);
    parts.push_back(text.substr(at, colon - at));
    if (colon == std::string::npos) break;
    at = colon + 1;
  }
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("bad number '{}' in schedule '{}'", s, text));
    }
  };
  PowerSchedule p;
  if (parts[0] == "continuous" && parts.size() == 1) {
    p = PowerSchedule::continuous();
  } else if (parts[0] == "fixed" && parts.size() <= 2) {
    p = PowerSchedule::fixed_budget(parts.size() == 2 ? number(parts[1]) : 0.0);
  } else if (parts[0] == "random" && parts.size() == 4) {
    const double seed = number(parts[1]);
    if (seed < 0 || seed != std::floor(seed)) throw ValidationError(fmt::format("bad seed in schedule '{}'", text));
    p = PowerSchedule::seeded_random(static_cast<std::uint64_t>(seed), number(parts[2]), number(parts[3]));
  } else if (parts[0] == "trace" && parts.size() >= 2) {
    const std::string file = text.substr(text.find(':') + 1);
    std::ifstream in(file);
    if (!in) throw ValidationError(fmt::format("cannot open trace file {}", file));
    std::vector<double> points;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      points.push_back(number(line));
    }
    p = PowerSchedule::trace(std::move(points));
  } else {
    throw ValidationError(fmt::format("unknown schedule '{}'", text));
  }
  try {
    p.validate();
  } catch (const ContractViolation& e) {
    throw ValidationError(e.what());
  }
  return p;
}

DeviceConfig sweep_device(const DeviceConfig& base, PowerSchedule schedule) {
  DeviceConfig c = base;
  c.schedule = std::move(schedule);
  c.capacity_uj = 1e15;
  return c;
}

void to_json(nlohmann::json& j, const CrashSweepReport& r) {
  nlohmann::json div = nlohmann::json::array();
  for (const auto& d : r.divergences) div.push_back({{"schedule", d.schedule}, {"seed", d.seed}, {"reason", d.reason}});
  j = {{"network", r.network},
       {"runtime", r.runtime},
       {"runs", r.runs},
       {"exhaustive_points", r.exhaustive_points},
       {"step_boundaries", r.step_boundaries},
       {"reboots", r.reboots},
       {"max_atomic_energy_uj", r.max_atomic_energy_uj},
       {"random_min_uj", r.min_uj},
       {"random_max_uj", r.max_uj},
       {"passed", r.passed()},
       {"divergences", div}};
}

CrashSweepReport crash_sweep(const Network& net, const FixedTensor& input, const RuntimeSpec& spec,
                             const DeviceConfig& base, const CrashSweepOptions& opt) {
  if (!(opt.min_factor > 0.0 && opt.max_factor >= opt.min_factor)) {
    throw ValidationError("random schedule factors must satisfy 0 < min <= max");
  }
  const FixedTensor oracle = reference_infer(net, input);
  CrashSweepReport rep;
  rep.network = net.name;
  rep.runtime = spec.str();

  auto attempt = [&](const PowerSchedule& sched, std::uint64_t seed) {
    Device dev(sweep_device(base, sched));
    ++rep.runs;
    try {
      const InferenceResult r = run_inference(dev, net, input, spec, opt.engine);
      rep.reboots += r.stats.reboots;
      if (r.scores.data != oracle.data) {
        std::size_t k = 0;
        while (k < oracle.size() && r.scores.data[k] == oracle.data[k]) ++k;
        rep.divergences.push_back({sched.describe(), seed,
                                   fmt::format("score {} is {} instead of {}", k, r.scores.data.at(k), oracle.data[k])});
      }
    } catch (const NonTermination& e) {
      rep.divergences.push_back({sched.describe(), seed, fmt::format("non-termination: {}", e.what())});
    }
  };

  Device ref(sweep_device(base, PowerSchedule::continuous()));
  ref.record_steps(opt.exhaustive_stride > 0);
  const InferenceResult cont = run_inference(ref, net, input, spec, opt.engine);
  ++rep.runs;
  if (cont.scores.data != oracle.data) rep.divergences.push_back({"continuous", 0, "continuous run differs from the reference"});
  rep.max_atomic_energy_uj = cont.stats.max_atomic_energy_uj;
  rep.step_boundaries = ref.step_boundaries().size();

  if (opt.exhaustive_stride > 0) {
    const auto& b = ref.step_boundaries();
    // A failure right at the start (before any step) is included as point 0.
    for (std::size_t k = 0; k <= b.size(); k += opt.exhaustive_stride) {
      const double at = k == 0 ? 0.0 : b[k - 1];
      attempt(PowerSchedule::trace({at}), k);
      ++rep.exhaustive_points;
    }
  }
  rep.min_uj = opt.min_factor * rep.max_atomic_energy_uj;
  rep.max_uj = opt.max_factor * rep.max_atomic_energy_uj;
  for (std::uint64_t s = 0; s < opt.seeds; ++s) {
    attempt(PowerSchedule::seeded_random(opt.first_seed + s, rep.min_uj, rep.max_uj), opt.first_seed + s);
  }
  return rep;
}

}  // namespace imc
