// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Runtime selection by name and failure-injection sweeps shared by the
// command line tool and the acceptance suite.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "imc/runtime.hpp"

namespace imc {

struct RuntimeSpec {
  enum class Kind { kNaive, kTiled, kSonic, kSonicNonatomic, kTails };
  Kind kind = Kind::kSonic;
  /// Iterations per task for tiled; starting tile for tails.
  int tile = 0;

  /// "naive", "tiled:K", "sonic", "sonic-nonatomic", "tails" or "tails:T".
  /// Throws ValidationError.
  static RuntimeSpec parse(const std::string& text);
  std::string str() const;
};

InferenceResult run_inference(Device& device, const Network& net, const FixedTensor& input, const RuntimeSpec& spec,
                              const EngineOptions& engine = {});

/// "continuous", "fixed", "fixed:UJ", "random:SEED:MIN_UJ:MAX_UJ" or
/// "trace:FILE" (one cumulative failure point in microjoules per line).
PowerSchedule parse_schedule(const std::string& text);

/// Capacity large enough that trace and random schedules are never clipped.
DeviceConfig sweep_device(const DeviceConfig& base, PowerSchedule schedule);

struct CrashSweepOptions {
  std::uint64_t seeds = 1000;
  std::uint64_t first_seed = 1;
  /// Inject a single failure at every stride-th metered step boundary of the
  /// continuous run. 0 disables the exhaustive pass.
  std::size_t exhaustive_stride = 1;
  /// Random on-periods are drawn from [min_factor, max_factor] times the
  /// largest atomic energy of the continuous run.
  double min_factor = 2.0;
  double max_factor = 6.0;
  EngineOptions engine;
};

struct Divergence {
  std::string schedule;
  std::uint64_t seed = 0;
  std::string reason;
};

struct CrashSweepReport {
  std::string network;
  std::string runtime;
  std::uint64_t runs = 0;
  std::uint64_t exhaustive_points = 0;
  std::uint64_t step_boundaries = 0;
  std::uint64_t reboots = 0;
  double max_atomic_energy_uj = 0.0;
  double min_uj = 0.0;
  double max_uj = 0.0;
  std::vector<Divergence> divergences;

  bool passed() const { return divergences.empty(); }
};

void to_json(nlohmann::json& j, const CrashSweepReport& r);

/// Compares every run bit for bit against the continuous-power reference.
CrashSweepReport crash_sweep(const Network& net, const FixedTensor& input, const RuntimeSpec& spec,
                             const DeviceConfig& base, const CrashSweepOptions& options = {});

}  // namespace imc
