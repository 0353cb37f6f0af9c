// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Task-based intermittent execution: atomic tasks whose shared-state writes
// go through a non-volatile redo log and become visible at the transition to
// the next task. Also hosts the in-memory network image and the two baseline
// runtimes built on the engine: naive (whole inference in one task) and
// tiled (k loop iterations per task).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "imc/device.hpp"
#include "imc/model.hpp"

namespace imc {

using TaskId = std::uint16_t;
inline constexpr TaskId kDone = 0xFFFF;

struct EngineOptions {
  /// Redo log bound, in entries of three words each.
  std::size_t log_capacity = 1024;
  /// Charge cycles in a row without progress before NonTermination.
  int stall_cycles = 3;
  std::uint64_t max_cycles = 5'000'000;
};

/// Per-stage counters; energy includes work lost to power failures.
struct StageStats {
  std::string layer;
  std::string kind;
  double energy_uj = 0.0;
  std::uint64_t iterations = 0;
  std::uint64_t iteration_attempts = 0;
  std::uint64_t commits = 0;
  std::uint64_t committed_entries = 0;
  std::uint64_t logged_writes = 0;
  std::uint64_t iteration_logged_writes = 0;
  std::uint64_t accel_elements = 0;
  std::uint64_t undo_backups = 0;
};

struct RunStats {
  std::string runtime;
  std::uint64_t transitions = 0;
  std::uint64_t commits = 0;
  /// Logged data entries applied at commit (the task-id entry excluded).
  std::uint64_t redo_entries = 0;
  std::uint64_t logged_writes = 0;
  std::uint64_t iteration_logged_writes = 0;
  /// Loop iterations started more than once.
  std::uint64_t reexecuted_steps = 0;
  std::uint64_t iterations = 0;
  std::uint64_t reboots = 0;
  double total_energy_uj = 0.0;
  /// Energy harvested while powered off to refill the buffer.
  double dead_energy_uj = 0.0;
  /// Largest energy spent between two consecutive progress events.
  double max_atomic_energy_uj = 0.0;
  std::uint64_t accel_invocations = 0;
  std::uint64_t accel_elements = 0;
  std::uint64_t dma_words = 0;
  std::uint64_t undo_backups = 0;
  int tile = 0;
  Counters counters;
  std::vector<StageStats> stages;
};

void to_json(nlohmann::json& j, const RunStats& s);
std::string stats_csv_header();
std::string stats_csv_row(const RunStats& s);

class Engine;

/// Handle a task body uses to touch the device.
class TaskContext {
 public:
  /// Task-shared read; observes this task's own logged writes.
  Word read(Addr addr);
  /// Task-shared write through the redo log.
  void write(Addr addr, Word value);
  /// Direct non-volatile access, bypassing the log.
  Word nv_read(Addr addr);
  void nv_write(Addr addr, Word value);
  Word vread(Addr addr);
  void vwrite(Addr addr, Word value);
  void compute(OpClass op, std::uint64_t count = 1);

  void next(TaskId task);
  /// Attributes subsequent energy and counters to stage `bucket`.
  void set_bucket(std::size_t bucket);
  void begin_iteration(std::uint64_t key);
  void end_iteration();
  /// Marks a durable progress point (used for atomic-energy accounting).
  void progress();

  Device& device();
  Engine& engine() { return engine_; }

 private:
  friend class Engine;
  explicit TaskContext(Engine& e) : engine_(e) {}
  Engine& engine_;
};

class Engine {
 public:
  using Body = std::function<void(TaskContext&)>;

  explicit Engine(Device& device, EngineOptions options = {});

  TaskId add_task(std::string name, Body body);
  /// Non-volatile words whose change counts as forward progress.
  void watch(Addr addr, std::size_t words);
  /// Host-side setup of the entry task; unmetered.
  void install(TaskId entry);
  /// Runs until a task selects kDone. Throws NonTermination.
  void run();

  Device& device() { return device_; }
  std::vector<StageStats>& buckets() { return buckets_; }
  std::uint64_t commits() const { return commits_; }
  std::uint64_t redo_entries() const { return redo_entries_; }
  std::uint64_t logged_writes() const { return logged_writes_; }
  std::uint64_t iteration_logged_writes() const { return iteration_logged_writes_; }
  std::uint64_t iteration_attempts() const { return attempts_; }
  std::uint64_t distinct_iterations() const { return keys_.size(); }
  double max_atomic_energy_uj() const { return max_atomic_; }
  /// Copies engine counters into `stats`; device totals are filled too.
  void fill(RunStats& stats);

  Addr task_addr() const { return task_addr_; }
  Addr flag_addr() const { return flag_addr_; }
  Addr log_addr() const { return log_addr_; }

 private:
  friend class TaskContext;

  struct Pending {
    Addr addr;
    Word value;
    bool in_iteration;
  };

  void boot();
  void run_task(TaskId id);
  void commit(TaskId next);
  void apply(Word count);
  void on_failure();
  std::vector<Word> snapshot() const;
  void account();
  StageStats& bucket();
  void progress_point();

  Device& device_;
  EngineOptions options_;
  std::vector<std::pair<std::string, Body>> tasks_;
  std::vector<std::pair<Addr, std::size_t>> watched_;
  Addr task_addr_;
  Addr flag_addr_;
  Addr log_addr_;
  Addr stack_addr_;
  static constexpr Addr kStackWords = 4;

  // Volatile task state, lost at power failure.
  TaskId current_ = 0;
  TaskId next_ = kDone;
  bool next_set_ = false;
  std::vector<Pending> pending_;
  std::unordered_map<Addr, std::size_t> own_writes_;
  bool in_iteration_ = false;
  std::size_t bucket_ = 0;
  std::uint64_t task_writes_ = 0;

  // Host-side measurement.
  std::vector<StageStats> buckets_;
  double accounted_energy_ = 0.0;
  double last_progress_energy_ = 0.0;
  double max_atomic_ = 0.0;
  std::uint64_t commits_ = 0;
  std::uint64_t redo_entries_ = 0;
  std::uint64_t logged_writes_ = 0;
  std::uint64_t iteration_logged_writes_ = 0;
  std::uint64_t attempts_ = 0;
  std::unordered_set<std::uint64_t> keys_;
  std::vector<Word> last_snapshot_;
  int stalled_ = 0;
};

inline std::uint64_t iteration_key(std::size_t stage, std::uint64_t flat) {
  return (static_cast<std::uint64_t>(stage) << 48) | flat;
}

// --- network image -----------------------------------------------------------

struct StageImage {
  std::size_t index = 0;
  const Stage* stage = nullptr;
  std::string layer;
  StagePlan plan;
  Addr weights = 0;  // conv/dense weights, sparse values
  Addr offsets = 0;  // sparse
  Addr columns = 0;  // sparse
  Addr bias = 0;
  Addr input = 0;
  Addr output = 0;
  std::vector<std::uint64_t> group_base;  // flat index of each group's first iteration
};

/// Weights, input and activation buffers placed in non-volatile memory.
struct NetImage {
  std::vector<StageImage> stages;
  Addr input = 0;
  Addr act[2] = {0, 0};
  Addr output = 0;
  std::size_t output_words = 0;
  std::vector<int> output_shape;
  int output_scale = 0;
  /// Largest per-group output count over all stages.
  std::size_t max_outputs = 0;

  /// Allocates and fills the image with unmetered host writes.
  static NetImage load(Device& device, const Network& net, const FixedTensor& input);
  FixedTensor read_output(const Device& device) const;
};

inline Addr bias_addr(const StageImage& s, int c) { return s.bias + static_cast<Addr>(c); }

struct RuntimeOptions {
  EngineOptions engine;
};

struct InferenceResult {
  FixedTensor scores;
  RunStats stats;
};

/// One task runs the whole inference; every reboot restarts it from scratch.
InferenceResult naive_infer(Device& device, const Network& net, const FixedTensor& input,
                            const RuntimeOptions& options = {});

/// Each task executes `tile` loop iterations with every shared write logged.
InferenceResult tiled_infer(Device& device, const Network& net, const FixedTensor& input, int tile,
                            const RuntimeOptions& options = {});

// Shared helpers for runtimes that keep 32-bit partial sums as two words.
inline Word lo_word(acc32 v) { return static_cast<Word>(static_cast<std::uint32_t>(v) & 0xFFFF); }
inline Word hi_word(acc32 v) { return static_cast<Word>(static_cast<std::uint32_t>(v) >> 16); }
inline acc32 join_words(Word lo, Word hi) {
  return static_cast<acc32>(static_cast<std::uint32_t>(lo) | (static_cast<std::uint32_t>(hi) << 16));
}

}  // namespace imc
