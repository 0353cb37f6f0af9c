// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"

namespace imc {

std::string_view to_string(Region region) {
  return region == Region::kVolatile ? "volatile" : "nonvolatile";
}

// --- CostModel -------------------------------------------------------------

void CostModel::validate() const {
  const std::pair<const char*, double> all[] = {
      {"volatile_access", volatile_access}, {"nv_read", nv_read},
      {"nv_write", nv_write},               {"arith", arith},
      {"multiply", multiply},               {"control", control},
      {"task_transition", task_transition}, {"dma_word", dma_word},
      {"dma_setup", dma_setup},             {"accel_op", accel_op},
      {"accel_invoke", accel_invoke},
  };
  for (const auto& [name, value] : all) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ContractViolation(fmt::format("cost '{}' must be strictly positive, got {}", name, value));
    }
  }
  if (nv_write < nv_read) {
    throw ContractViolation("non-volatile write cost must not be below non-volatile read cost");
  }
}

void to_json(nlohmann::json& j, const CostModel& c) {
  j = nlohmann::json{{"volatile_access", c.volatile_access},
                     {"nv_read", c.nv_read},
                     {"nv_write", c.nv_write},
                     {"arith", c.arith},
                     {"multiply", c.multiply},
                     {"control", c.control},
                     {"task_transition", c.task_transition},
                     {"dma_word", c.dma_word},
                     {"dma_setup", c.dma_setup},
                     {"accel_op", c.accel_op},
                     {"accel_invoke", c.accel_invoke}};
}

void from_json(const nlohmann::json& j, CostModel& c) {
  static const char* kKeys[] = {"volatile_access", "nv_read",   "nv_write",   "arith",
                                "multiply",        "control",   "task_transition",
                                "dma_word",        "dma_setup", "accel_op",   "accel_invoke"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw ValidationError(fmt::format("unknown cost key '{}'", key));
    }
  }
  c.volatile_access = j.value("volatile_access", c.volatile_access);
  c.nv_read = j.value("nv_read", c.nv_read);
  c.nv_write = j.value("nv_write", c.nv_write);
  c.arith = j.value("arith", c.arith);
  c.multiply = j.value("multiply", c.multiply);
  c.control = j.value("control", c.control);
  c.task_transition = j.value("task_transition", c.task_transition);
  c.dma_word = j.value("dma_word", c.dma_word);
  c.dma_setup = j.value("dma_setup", c.dma_setup);
  c.accel_op = j.value("accel_op", c.accel_op);
  c.accel_invoke = j.value("accel_invoke", c.accel_invoke);
}

void to_json(nlohmann::json& j, const Counters& c) {
  j = nlohmann::json{{"volatile_reads", c.volatile_reads},
                     {"volatile_writes", c.volatile_writes},
                     {"nv_reads", c.nv_reads},
                     {"nv_writes", c.nv_writes},
                     {"arith", c.arith},
                     {"multiply", c.multiply},
                     {"control", c.control},
                     {"transitions", c.transitions},
                     {"dma_words", c.dma_words},
                     {"dma_setups", c.dma_setups},
                     {"accel_ops", c.accel_ops},
                     {"accel_invocations", c.accel_invocations}};
}

// --- EnergyBuffer ----------------------------------------------------------

EnergyBuffer::EnergyBuffer(double capacity_uj, std::optional<std::string> preset_name)
    : capacity_uj_(capacity_uj), level_uj_(capacity_uj), preset_name_(std::move(preset_name)) {
  if (!(capacity_uj >= 0.0) || !std::isfinite(capacity_uj)) {
    throw ContractViolation(fmt::format("buffer capacity must be finite and non-negative, got {}", capacity_uj));
  }
}

EnergyBuffer::Outcome EnergyBuffer::consume(double cost_uj) {
  if (!(cost_uj >= 0.0)) {
    throw ContractViolation(fmt::format("energy cost must be non-negative, got {}", cost_uj));
  }
  if (unlimited_) return Outcome::kAlive;
  if (level_uj_ < cost_uj) return Outcome::kPowerFailed;
  level_uj_ -= cost_uj;
  return Outcome::kAlive;
}

void EnergyBuffer::set_level(double level_uj) {
  level_uj_ = std::clamp(level_uj, 0.0, capacity_uj_);
}

// --- PowerSchedule ---------------------------------------------------------

PowerSchedule PowerSchedule::continuous() { return PowerSchedule{}; }

PowerSchedule PowerSchedule::fixed_budget(double budget_uj) {
  PowerSchedule s;
  s.mode = Mode::kFixedBudget;
  s.budget_uj = budget_uj;
  return s;
}

PowerSchedule PowerSchedule::trace(std::vector<double> failure_points_uj) {
  PowerSchedule s;
  s.mode = Mode::kTrace;
  s.failure_points_uj = std::move(failure_points_uj);
  return s;
}

PowerSchedule PowerSchedule::seeded_random(std::uint64_t seed, double min_uj, double max_uj) {
  PowerSchedule s;
  s.mode = Mode::kSeededRandom;
  s.seed = seed;
  s.min_uj = min_uj;
  s.max_uj = max_uj;
  return s;
}

void PowerSchedule::validate() const {
  switch (mode) {
    case Mode::kContinuous:
      break;
    case Mode::kFixedBudget:
      if (budget_uj < 0.0) throw ContractViolation("fixed budget must be non-negative");
      break;
    case Mode::kTrace:
      if (!std::is_sorted(failure_points_uj.begin(), failure_points_uj.end())) {
        throw ContractViolation("trace failure points must be non-decreasing");
      }
      break;
    case Mode::kSeededRandom:
      if (!(min_uj >= 0.0) || !(max_uj >= min_uj)) {
        throw ContractViolation("seeded-random schedule needs 0 <= min_uj <= max_uj");
      }
      break;
  }
}

std::string PowerSchedule::describe() const {
  switch (mode) {
    case Mode::kContinuous:
      return "continuous";
    case Mode::kFixedBudget:
      return budget_uj > 0.0 ? fmt::format("fixed-budget:{}", budget_uj) : "fixed-budget";
    case Mode::kTrace:
      return fmt::format("trace:{}pts", failure_points_uj.size());
    case Mode::kSeededRandom:
      return fmt::format("seeded-random:{}:[{},{}]", seed, min_uj, max_uj);
  }
  return "?";
}

namespace {

const char* mode_name(PowerSchedule::Mode m) {
  switch (m) {
    case PowerSchedule::Mode::kContinuous:
      return "continuous";
    case PowerSchedule::Mode::kFixedBudget:
      return "fixed-budget";
    case PowerSchedule::Mode::kTrace:
      return "trace";
    case PowerSchedule::Mode::kSeededRandom:
      return "seeded-random";
  }
  return "?";
}

}  // namespace

void to_json(nlohmann::json& j, const PowerSchedule& s) {
  j = nlohmann::json{{"mode", mode_name(s.mode)}};
  switch (s.mode) {
    case PowerSchedule::Mode::kContinuous:
      break;
    case PowerSchedule::Mode::kFixedBudget:
      j["budget_uj"] = s.budget_uj;
      break;
    case PowerSchedule::Mode::kTrace:
      j["points_uj"] = s.failure_points_uj;
      break;
    case PowerSchedule::Mode::kSeededRandom:
      j["seed"] = s.seed;
      j["min_uj"] = s.min_uj;
      j["max_uj"] = s.max_uj;
      break;
  }
}

void from_json(const nlohmann::json& j, PowerSchedule& s) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "continuous") {
    s = PowerSchedule::continuous();
  } else if (mode == "fixed-budget") {
    s = PowerSchedule::fixed_budget(j.value("budget_uj", 0.0));
  } else if (mode == "trace") {
    s = PowerSchedule::trace(j.at("points_uj").get<std::vector<double>>());
  } else if (mode == "seeded-random") {
    s = PowerSchedule::seeded_random(j.value("seed", std::uint64_t{0}), j.at("min_uj").get<double>(),
                                     j.at("max_uj").get<double>());
  } else {
    throw ValidationError(fmt::format("unknown schedule mode '{}'", mode));
  }
  s.validate();
}

// --- MemorySpace -----------------------------------------------------------

MemorySpace::MemorySpace(std::size_t volatile_bytes, std::size_t nonvolatile_bytes)
    : volatile_(volatile_bytes / sizeof(Word), 0), nonvolatile_(nonvolatile_bytes / sizeof(Word), 0) {}

std::vector<Word>& MemorySpace::words_of(Region region) {
  return region == Region::kVolatile ? volatile_ : nonvolatile_;
}

const std::vector<Word>& MemorySpace::words_of(Region region) const {
  return region == Region::kVolatile ? volatile_ : nonvolatile_;
}

std::size_t MemorySpace::words(Region region) const { return words_of(region).size(); }

Word MemorySpace::peek(Region region, Addr addr) const {
  const auto& w = words_of(region);
  if (addr >= w.size()) {
    throw AddressError(fmt::format("{} address {} out of bounds ({} words)", to_string(region), addr, w.size()));
  }
  return w[addr];
}

void MemorySpace::poke(Region region, Addr addr, Word value) {
  auto& w = words_of(region);
  if (addr >= w.size()) {
    throw AddressError(fmt::format("{} address {} out of bounds ({} words)", to_string(region), addr, w.size()));
  }
  w[addr] = value;
}

std::span<const Word> MemorySpace::view(Region region) const { return words_of(region); }

void MemorySpace::reboot() {
  std::fill(volatile_.begin(), volatile_.end(), Word{0});
  ++reboots_;
}

// --- DeviceConfig ----------------------------------------------------------

std::map<std::string, double> DeviceConfig::default_presets() {
  // Named after the capacitors used on the real board; the energy values are
  // chosen relative to the default cost model, not derived from voltages.
  return {{"100uF", 1200.0}, {"1mF", 12000.0}, {"50mF", 600000.0}};
}

double DeviceConfig::resolved_capacity_uj() const {
  if (capacity_uj) return *capacity_uj;
  auto it = presets.find(preset);
  if (it == presets.end()) throw ValidationError(fmt::format("unknown capacitor preset '{}'", preset));
  return it->second;
}

void DeviceConfig::validate() const {
  costs.validate();
  schedule.validate();
  if (volatile_bytes == 0 || nonvolatile_bytes == 0 || volatile_bytes % 2 || nonvolatile_bytes % 2) {
    throw ValidationError("memory sizes must be positive multiples of the 2-byte word");
  }
  const double cap = resolved_capacity_uj();
  if (!(cap >= 0.0)) throw ValidationError("buffer capacity must be non-negative");
}

void to_json(nlohmann::json& j, const DeviceConfig& c) {
  j = nlohmann::json{{"costs", c.costs},
                     {"memory", {{"volatile_bytes", c.volatile_bytes}, {"nonvolatile_bytes", c.nonvolatile_bytes}}},
                     {"presets", c.presets},
                     {"preset", c.preset},
                     {"schedule", c.schedule}};
  if (c.capacity_uj) j["capacity_uj"] = *c.capacity_uj;
}

void from_json(const nlohmann::json& j, DeviceConfig& c) {
  c = DeviceConfig{};
  if (j.contains("costs")) c.costs = j.at("costs").get<CostModel>();
  if (j.contains("memory")) {
    const auto& m = j.at("memory");
    c.volatile_bytes = m.value("volatile_bytes", c.volatile_bytes);
    c.nonvolatile_bytes = m.value("nonvolatile_bytes", c.nonvolatile_bytes);
  }
  if (j.contains("presets")) {
    for (const auto& [name, value] : j.at("presets").items()) c.presets[name] = value.get<double>();
  }
  c.preset = j.value("preset", c.preset);
  if (j.contains("capacity_uj")) c.capacity_uj = j.at("capacity_uj").get<double>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<PowerSchedule>();
  c.validate();
}

DeviceConfig DeviceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open device config '{}'", path.string()));
  try {
    return nlohmann::json::parse(in).get<DeviceConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("device config '{}': {}", path.string(), e.what()));
  }
}

// --- Device ----------------------------------------------------------------

Device::Device(const DeviceConfig& config)
    : Device(config.costs, EnergyBuffer(config.resolved_capacity_uj(), config.capacity_uj ? std::nullopt : std::optional(config.preset)),
             config.schedule, MemorySpace(config.volatile_bytes, config.nonvolatile_bytes)) {}

Device::Device(CostModel costs, EnergyBuffer buffer, PowerSchedule schedule, MemorySpace memory)
    : costs_(costs), buffer_(std::move(buffer)), schedule_(std::move(schedule)), memory_(std::move(memory)),
      rng_(schedule_.seed) {
  costs_.validate();
  schedule_.validate();
  start_on_period();
}

void Device::start_on_period() {
  switch (schedule_.mode) {
    case PowerSchedule::Mode::kContinuous:
      buffer_.set_unlimited(true);
      break;
    case PowerSchedule::Mode::kFixedBudget:
      buffer_.set_level(schedule_.budget_uj > 0.0 ? schedule_.budget_uj : buffer_.capacity_uj());
      break;
    case PowerSchedule::Mode::kTrace:
      if (trace_index_ < schedule_.failure_points_uj.size()) {
        buffer_.set_unlimited(false);
        buffer_.set_level(schedule_.failure_points_uj[trace_index_++] - total_energy_uj_);
      } else {
        buffer_.set_unlimited(true);
      }
      break;
    case PowerSchedule::Mode::kSeededRandom: {
      // Uniform draw built directly on the engine output so replays are
      // identical across standard library implementations.
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      buffer_.set_level(schedule_.min_uj + u * (schedule_.max_uj - schedule_.min_uj));
      break;
    }
  }
}

void Device::debit(double cost_uj) {
  if (buffer_.consume(cost_uj) == EnergyBuffer::Outcome::kPowerFailed) {
    power_failed_ = true;
    throw PowerFailure{};
  }
  total_energy_uj_ += cost_uj;
  cycle_energy_uj_ += cost_uj;
  ++steps_;
  if (recording_steps_) step_boundaries_.push_back(total_energy_uj_);
}

void Device::record(AccessEvent::Kind kind, Region region, Addr addr, Actor actor) {
  if (recorder_) recorder_(AccessEvent{kind, region, addr, actor});
}

Word Device::load(Region region, Addr addr, Actor actor) {
  const Word v = memory_.peek(region, addr);
  record(AccessEvent::Kind::kRead, region, addr, actor);
  return v;
}

void Device::store(Region region, Addr addr, Word value, Actor actor) {
  memory_.poke(region, addr, value);
  record(AccessEvent::Kind::kWrite, region, addr, actor);
}

Word Device::read(Region region, Addr addr) {
  if (addr >= memory_.words(region)) {
    throw AddressError(fmt::format("{} read at {} out of bounds", to_string(region), addr));
  }
  if (region == Region::kVolatile) {
    debit(costs_.volatile_access);
    ++counters_.volatile_reads;
  } else {
    debit(costs_.nv_read);
    ++counters_.nv_reads;
  }
  return load(region, addr, Actor::kCpu);
}

void Device::write(Region region, Addr addr, Word value) {
  if (addr >= memory_.words(region)) {
    throw AddressError(fmt::format("{} write at {} out of bounds", to_string(region), addr));
  }
  if (region == Region::kVolatile) {
    debit(costs_.volatile_access);
    ++counters_.volatile_writes;
  } else {
    debit(costs_.nv_write);
    ++counters_.nv_writes;
  }
  store(region, addr, value, Actor::kCpu);
}

void Device::compute(OpClass op, std::uint64_t count) {
  for (std::uint64_t k = 0; k < count; ++k) {
    switch (op) {
      case OpClass::kArith:
        debit(costs_.arith);
        ++counters_.arith;
        break;
      case OpClass::kMultiply:
        debit(costs_.multiply);
        ++counters_.multiply;
        break;
      case OpClass::kControl:
        debit(costs_.control);
        ++counters_.control;
        break;
      case OpClass::kAccel:
        debit(costs_.accel_op);
        ++counters_.accel_ops;
        break;
    }
  }
}

void Device::transition() {
  debit(costs_.task_transition);
  ++counters_.transitions;
}

void Device::reboot() {
  const double leftover = buffer_.unlimited() ? 0.0 : buffer_.level_uj();
  if (tracing_) trace_.push_back(TraceRow{cycle_, cycle_energy_uj_, true, counters_});
  memory_.reboot();
  ++cycle_;
  cycle_energy_uj_ = 0.0;
  power_failed_ = false;
  start_on_period();
  if (!buffer_.unlimited()) dead_energy_uj_ += std::max(0.0, buffer_.level_uj() - leftover);
}

void Device::finish() {
  if (tracing_) trace_.push_back(TraceRow{cycle_, cycle_energy_uj_, false, counters_});
}

void Device::mark(AccessEvent::Kind kind) { record(kind, Region::kNonVolatile, 0, Actor::kCpu); }

Addr Device::allocate(Region region, std::size_t words, std::string_view name) {
  const std::size_t r = region == Region::kVolatile ? 0 : 1;
  const std::size_t base = next_free_[r];
  if (base + words > memory_.words(region)) {
    throw ValidationError(fmt::format("{} memory exhausted allocating '{}' ({} words, {} of {} in use)",
                                      to_string(region), name, words, base, memory_.words(region)));
  }
  next_free_[r] += words;
  allocations_.push_back(Allocation{std::string(name), region, static_cast<Addr>(base), words});
  return static_cast<Addr>(base);
}

std::size_t Device::allocated_words(Region region) const {
  return next_free_[region == Region::kVolatile ? 0 : 1];
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out << "cycle,live_energy_uj,dead,volatile_reads,volatile_writes,nv_reads,nv_writes,arith,multiply,"
         "control,transitions,dma_words,accel_ops,accel_invocations\n";
  for (const auto& r : rows) {
    const auto& c = r.counters;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.cycle, r.live_energy_uj, r.dead ? 1 : 0,
                       c.volatile_reads, c.volatile_writes, c.nv_reads, c.nv_writes, c.arith, c.multiply,
                       c.control, c.transitions, c.dma_words, c.accel_ops, c.accel_invocations);
  }
  return out.str();
}

}  // namespace imc
