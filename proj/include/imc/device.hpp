// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Simulated energy-harvesting device: an energy buffer drained by metered
// operations, a power schedule deciding how much energy each on-period gets,
// and a memory split into a volatile region (cleared at reboot) and a
// non-volatile region (persists across reboots).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace imc {

using Word = std::uint16_t;
using Addr = std::uint32_t;

enum class Region : std::uint8_t { kVolatile, kNonVolatile };
enum class Actor : std::uint8_t { kCpu, kDma, kAccel };
enum class OpClass : std::uint8_t { kArith, kMultiply, kControl, kAccel };

std::string_view to_string(Region region);

/// Energy per operation class, in microjoules. The absolute values are
/// calibration knobs; only their ordering is meaningful.
struct CostModel {
  double volatile_access = 1.0;
  double nv_read = 2.0;
  double nv_write = 4.0;
  double arith = 1.0;
  double multiply = 9.0;
  double control = 1.0;
  double task_transition = 40.0;
  double dma_word = 1.0;
  double dma_setup = 8.0;
  double accel_op = 0.25;
  double accel_invoke = 16.0;

  /// Throws ContractViolation unless every cost is strictly positive and
  /// non-volatile writes cost at least as much as non-volatile reads.
  void validate() const;
};

void to_json(nlohmann::json& j, const CostModel& costs);
void from_json(const nlohmann::json& j, CostModel& costs);

struct Counters {
  std::uint64_t volatile_reads = 0;
  std::uint64_t volatile_writes = 0;
  std::uint64_t nv_reads = 0;
  std::uint64_t nv_writes = 0;
  std::uint64_t arith = 0;
  std::uint64_t multiply = 0;
  std::uint64_t control = 0;
  std::uint64_t transitions = 0;
  std::uint64_t dma_words = 0;
  std::uint64_t dma_setups = 0;
  std::uint64_t accel_ops = 0;
  std::uint64_t accel_invocations = 0;

  bool operator==(const Counters&) const = default;
};

void to_json(nlohmann::json& j, const Counters& c);

/// Capacitor-like store of microjoules.
class EnergyBuffer {
 public:
  enum class Outcome { kAlive, kPowerFailed };

  explicit EnergyBuffer(double capacity_uj, std::optional<std::string> preset_name = {});

  /// Debits `cost_uj` if the level covers it. On failure the level is left
  /// untouched; the stranded energy is lost at the next recharge.
  Outcome consume(double cost_uj);
  void recharge() { level_uj_ = capacity_uj_; }
  /// Starts an on-period with `level_uj`, clamped to [0, capacity].
  void set_level(double level_uj);
  /// Unlimited buffers model continuous power: consume never fails.
  void set_unlimited(bool unlimited) { unlimited_ = unlimited; }

  double capacity_uj() const { return capacity_uj_; }
  double level_uj() const { return level_uj_; }
  bool unlimited() const { return unlimited_; }
  const std::optional<std::string>& preset_name() const { return preset_name_; }

 private:
  double capacity_uj_;
  double level_uj_;
  bool unlimited_ = false;
  std::optional<std::string> preset_name_;
};

/// How much energy each on-period receives.
struct PowerSchedule {
  enum class Mode { kContinuous, kFixedBudget, kTrace, kSeededRandom };

  Mode mode = Mode::kContinuous;
  /// kFixedBudget: energy per on-period; 0 means "the buffer capacity".
  double budget_uj = 0.0;
  /// kTrace: power fails when cumulative debited energy would exceed the next
  /// point. After the last point the device runs on continuous power.
  std::vector<double> failure_points_uj;
  /// kSeededRandom: on-period energy drawn uniformly from [min_uj, max_uj].
  std::uint64_t seed = 0;
  double min_uj = 0.0;
  double max_uj = 0.0;

  static PowerSchedule continuous();
  static PowerSchedule fixed_budget(double budget_uj = 0.0);
  static PowerSchedule trace(std::vector<double> failure_points_uj);
  static PowerSchedule seeded_random(std::uint64_t seed, double min_uj, double max_uj);

  void validate() const;
  std::string describe() const;
};

void to_json(nlohmann::json& j, const PowerSchedule& s);
void from_json(const nlohmann::json& j, PowerSchedule& s);

/// Paired word-addressable regions of 16-bit words.
class MemorySpace {
 public:
  explicit MemorySpace(std::size_t volatile_bytes = 4096, std::size_t nonvolatile_bytes = 262144);

  std::size_t words(Region region) const;
  /// Unmetered host access, used for loading images and inspecting state.
  Word peek(Region region, Addr addr) const;
  void poke(Region region, Addr addr, Word value);
  std::span<const Word> view(Region region) const;

  /// Zeroes the volatile region; the non-volatile region is untouched.
  void reboot();
  std::uint64_t reboots() const { return reboots_; }

 private:
  std::vector<Word>& words_of(Region region);
  const std::vector<Word>& words_of(Region region) const;

  std::vector<Word> volatile_;
  std::vector<Word> nonvolatile_;
  std::uint64_t reboots_ = 0;
};

struct AccessEvent {
  enum class Kind : std::uint8_t { kRead, kWrite, kIterationBegin, kIterationEnd };
  Kind kind;
  Region region;
  Addr addr;
  Actor actor;
};

using AccessRecorder = std::function<void(const AccessEvent&)>;

/// One row per charge cycle: energy spent while powered, whether the cycle
/// ended in a power failure, and cumulative counters.
struct TraceRow {
  std::uint64_t cycle;
  double live_energy_uj;
  bool dead;
  Counters counters;
};

struct Allocation {
  std::string name;
  Region region;
  Addr base;
  std::size_t words;
};

struct DeviceConfig {
  CostModel costs;
  std::size_t volatile_bytes = 4096;
  std::size_t nonvolatile_bytes = 262144;
  /// Named capacitor presets mapped to buffer capacities in microjoules.
  /// These are calibration knobs, not physical conversions.
  std::map<std::string, double> presets = default_presets();
  std::string preset = "1mF";
  /// Overrides the preset when set.
  std::optional<double> capacity_uj;
  PowerSchedule schedule = PowerSchedule::fixed_budget();

  static std::map<std::string, double> default_presets();
  double resolved_capacity_uj() const;
  void validate() const;

  static DeviceConfig load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const DeviceConfig& c);
void from_json(const nlohmann::json& j, DeviceConfig& c);

class Device {
 public:
  explicit Device(const DeviceConfig& config);
  Device(CostModel costs, EnergyBuffer buffer, PowerSchedule schedule, MemorySpace memory = MemorySpace{});

  // Metered operations. Each debits the buffer before taking effect and
  // throws PowerFailure when it cannot be paid.
  Word read(Region region, Addr addr);
  void write(Region region, Addr addr, Word value);
  void compute(OpClass op, std::uint64_t count = 1);
  void transition();

  /// Debits `cost_uj` without touching memory; used by DMA and the
  /// accelerator, which account their own counters.
  void debit(double cost_uj);
  /// Unmetered memory access that is still reported to the recorder.
  Word load(Region region, Addr addr, Actor actor);
  void store(Region region, Addr addr, Word value, Actor actor);
  Counters& counters() { return counters_; }
  const Counters& counters() const { return counters_; }

  /// Power-cycles the device after a failure: clears volatile memory and
  /// starts the next on-period as dictated by the schedule.
  void reboot();
  /// Closes the current charge cycle in the trace at the end of a run.
  void finish();

  bool power_failed() const { return power_failed_; }
  bool continuous() const { return buffer_.unlimited(); }

  Addr allocate(Region region, std::size_t words, std::string_view name);
  const std::vector<Allocation>& allocations() const { return allocations_; }
  std::size_t allocated_words(Region region) const;

  MemorySpace& memory() { return memory_; }
  const MemorySpace& memory() const { return memory_; }
  const CostModel& costs() const { return costs_; }
  const EnergyBuffer& buffer() const { return buffer_; }
  const PowerSchedule& schedule() const { return schedule_; }

  double total_energy_uj() const { return total_energy_uj_; }
  double cycle_energy_uj() const { return cycle_energy_uj_; }
  double dead_energy_uj() const { return dead_energy_uj_; }
  std::uint64_t reboots() const { return memory_.reboots(); }
  std::uint64_t cycle() const { return cycle_; }
  std::uint64_t steps() const { return steps_; }

  void set_recorder(AccessRecorder recorder) { recorder_ = std::move(recorder); }
  void mark(AccessEvent::Kind kind);

  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  /// Records the cumulative energy after every successful debit, which gives
  /// the exact set of step boundaries for exhaustive failure injection.
  void record_steps(bool on) { recording_steps_ = on; }
  const std::vector<double>& step_boundaries() const { return step_boundaries_; }

 private:
  void start_on_period();
  void record(AccessEvent::Kind kind, Region region, Addr addr, Actor actor);

  CostModel costs_;
  EnergyBuffer buffer_;
  PowerSchedule schedule_;
  MemorySpace memory_;
  Counters counters_;

  std::mt19937_64 rng_;
  std::size_t trace_index_ = 0;

  double total_energy_uj_ = 0.0;
  double cycle_energy_uj_ = 0.0;
  double dead_energy_uj_ = 0.0;
  std::uint64_t cycle_ = 0;
  std::uint64_t steps_ = 0;
  bool power_failed_ = false;

  std::vector<Allocation> allocations_;
  std::size_t next_free_[2] = {0, 0};

  AccessRecorder recorder_;
  bool tracing_ = false;
  std::vector<TraceRow> trace_;
  bool recording_steps_ = false;
  std::vector<double> step_boundaries_;
};

/// Writes the trace as CSV: cycle,live_energy_uj,dead,<counters...>.
std::string trace_csv(const std::vector<TraceRow>& rows);

}  // namespace imc
