// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0


#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"
#include "imc/runtime.hpp"

namespace imc {

// --- stats -------------------------------------------------------------------

void to_json(nlohmann::json& j, const RunStats& s) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& st : s.stages) {
    stages.push_back({{"layer", st.layer},
                      {"kind", st.kind},
                      {"energy_uj", st.energy_uj},
                      {"iterations", st.iterations},
                      {"iteration_attempts", st.iteration_attempts},
                      {"commits", st.commits},
                      {"committed_entries", st.committed_entries},
                      {"logged_writes", st.logged_writes},
                      {"iteration_logged_writes", st.iteration_logged_writes},
                      {"accel_elements", st.accel_elements},
                      {"undo_backups", st.undo_backups}});
  }
  j = nlohmann::json{{"runtime", s.runtime},
                     {"transitions", s.transitions},
                     {"commits", s.commits},
                     {"redo_entries", s.redo_entries},
                     {"logged_writes", s.logged_writes},
                     {"iteration_logged_writes", s.iteration_logged_writes},
                     {"reexecuted_steps", s.reexecuted_steps},
                     {"iterations", s.iterations},
                     {"reboots", s.reboots},
                     {"total_energy_uj", s.total_energy_uj},
                     {"dead_energy_uj", s.dead_energy_uj},
                     {"max_atomic_energy_uj", s.max_atomic_energy_uj},
                     {"accel_invocations", s.accel_invocations},
                     {"accel_elements", s.accel_elements},
                     {"dma_words", s.dma_words},
                     {"undo_backups", s.undo_backups},
                     {"tile", s.tile},
                     {"counters", s.counters},
                     {"stages", std::move(stages)}};
}

std::string stats_csv_header() {
  return "runtime,transitions,commits,redo_entries,logged_writes,iteration_logged_writes,reexecuted_steps,"
         "iterations,reboots,total_energy_uj,dead_energy_uj,accel_invocations,accel_elements,dma_words,"
         "undo_backups,tile";
}

std::string stats_csv_row(const RunStats& s) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{:.3f},{:.3f},{},{},{},{},{}", s.runtime, s.transitions, s.commits,
                     s.redo_entries, s.logged_writes, s.iteration_logged_writes, s.reexecuted_steps, s.iterations,
                     s.reboots, s.total_energy_uj, s.dead_energy_uj, s.accel_invocations, s.accel_elements,
                     s.dma_words, s.undo_backups, s.tile);
}

// --- TaskContext -------------------------------------------------------------

Device& TaskContext::device() { return engine_.device_; }

Word TaskContext::read(Addr addr) {
  Engine& e = engine_;
  e.device_.compute(OpClass::kControl);
  auto it = e.own_writes_.find(addr);
  if (it != e.own_writes_.end()) {
    return e.device_.read(Region::kNonVolatile, e.log_addr_ + 3 * static_cast<Addr>(it->second) + 2);
  }
  return e.device_.read(Region::kNonVolatile, addr);
}

void TaskContext::write(Addr addr, Word value) {
  Engine& e = engine_;
  // One slot stays reserved for the task-id entry written at commit.
  if (e.pending_.size() + 1 >= e.options_.log_capacity) {
    throw ValidationError(fmt::format("redo log overflow in task '{}' ({} entries)", e.tasks_[e.current_].first,
                                      e.options_.log_capacity));
  }
  const std::size_t slot = e.pending_.size();
  const Addr base = e.log_addr_ + 3 * static_cast<Addr>(slot);
  e.device_.compute(OpClass::kControl);
  e.device_.write(Region::kNonVolatile, base, static_cast<Word>(addr & 0xFFFF));
  e.device_.write(Region::kNonVolatile, base + 1, static_cast<Word>(addr >> 16));
  e.device_.write(Region::kNonVolatile, base + 2, value);
  e.pending_.push_back({addr, value, e.in_iteration_});
  e.own_writes_[addr] = slot;
  ++e.task_writes_;
}

Word TaskContext::nv_read(Addr addr) { return engine_.device_.read(Region::kNonVolatile, addr); }

void TaskContext::nv_write(Addr addr, Word value) { engine_.device_.write(Region::kNonVolatile, addr, value); }

Word TaskContext::vread(Addr addr) { return engine_.device_.read(Region::kVolatile, addr); }

void TaskContext::vwrite(Addr addr, Word value) { engine_.device_.write(Region::kVolatile, addr, value); }

void TaskContext::compute(OpClass op, std::uint64_t count) { engine_.device_.compute(op, count); }

void TaskContext::next(TaskId task) {
  if (task != kDone && task >= engine_.tasks_.size()) throw ContractViolation(fmt::format("unknown task {}", task));
  engine_.next_ = task;
  engine_.next_set_ = true;
}

void TaskContext::set_bucket(std::size_t bucket) {
  if (bucket == engine_.bucket_) return;
  engine_.account();
  engine_.bucket_ = bucket;
}

void TaskContext::begin_iteration(std::uint64_t key) {
  Engine& e = engine_;
  ++e.attempts_;
  auto& b = e.bucket();
  ++b.iteration_attempts;
  if (e.keys_.insert(key).second) ++b.iterations;
  e.in_iteration_ = true;
  e.device_.mark(AccessEvent::Kind::kIterationBegin);
}

void TaskContext::end_iteration() {
  engine_.in_iteration_ = false;
  engine_.device_.mark(AccessEvent::Kind::kIterationEnd);
}

void TaskContext::progress() { engine_.progress_point(); }

// --- Engine ------------------------------------------------------------------

Engine::Engine(Device& device, EngineOptions options) : device_(device), options_(options) {
  if (options_.log_capacity < 1) throw ContractViolation("redo log needs at least one entry");
  if (options_.stall_cycles < 1) throw ContractViolation("stall_cycles must be at least 1");
  task_addr_ = device_.allocate(Region::kNonVolatile, 1, "engine.task");
  flag_addr_ = device_.allocate(Region::kNonVolatile, 1, "engine.commit_flag");
  log_addr_ = device_.allocate(Region::kNonVolatile, 3 * options_.log_capacity, "engine.redo_log");
  stack_addr_ = device_.allocate(Region::kVolatile, kStackWords, "engine.stack");
}

TaskId Engine::add_task(std::string name, Body body) {
  if (tasks_.size() >= kDone) throw ContractViolation("too many tasks");
  tasks_.emplace_back(std::move(name), std::move(body));
  return static_cast<TaskId>(tasks_.size() - 1);
}

void Engine::watch(Addr addr, std::size_t words) { watched_.emplace_back(addr, words); }

void Engine::install(TaskId entry) {
  if (entry != kDone && entry >= tasks_.size()) throw ContractViolation("entry task does not exist");
  device_.memory().poke(Region::kNonVolatile, task_addr_, entry);
  device_.memory().poke(Region::kNonVolatile, flag_addr_, 0);
}

std::vector<Word> Engine::snapshot() const {
  std::vector<Word> s;
  s.push_back(device_.memory().peek(Region::kNonVolatile, task_addr_));
  s.push_back(device_.memory().peek(Region::kNonVolatile, flag_addr_));
  for (const auto& [addr, words] : watched_) {
    for (std::size_t k = 0; k < words; ++k) s.push_back(device_.memory().peek(Region::kNonVolatile, addr + static_cast<Addr>(k)));
  }
  return s;
}

StageStats& Engine::bucket() {
  if (buckets_.size() <= bucket_) buckets_.resize(bucket_ + 1);
  return buckets_[bucket_];
}

void Engine::account() {
  const double now = device_.total_energy_uj();
  bucket().energy_uj += now - accounted_energy_;
  accounted_energy_ = now;
}

void Engine::progress_point() {
  const double now = device_.total_energy_uj();
  max_atomic_ = std::max(max_atomic_, now - last_progress_energy_);
  last_progress_energy_ = now;
}

void Engine::run() {
  accounted_energy_ = device_.total_energy_uj();
  last_progress_energy_ = accounted_energy_;
  last_snapshot_ = snapshot();
  stalled_ = 0;
  for (;;) {
    try {
      boot();
      while (current_ != kDone) {
        run_task(current_);
        current_ = next_;
      }
      break;
    } catch (const PowerFailure&) {
      on_failure();
    }
  }
  account();
  device_.finish();
}

void Engine::boot() {
  pending_.clear();
  own_writes_.clear();
  in_iteration_ = false;
  const Word flag = device_.read(Region::kNonVolatile, flag_addr_);
  if (flag != 0) apply(flag);
  current_ = device_.read(Region::kNonVolatile, task_addr_);
  if (current_ != kDone && current_ >= tasks_.size()) {
    throw ContractViolation(fmt::format("non-volatile task id {} is not a task", current_));
  }
  // Task prologue: the volatile stack frame is rebuilt on every entry.
  for (Addr k = 0; k < kStackWords; ++k) device_.write(Region::kVolatile, stack_addr_ + k, 0);
}

void Engine::run_task(TaskId id) {
  task_writes_ = 0;
  pending_.clear();
  own_writes_.clear();
  next_set_ = false;
  in_iteration_ = false;
  TaskContext ctx(*this);
  tasks_[id].second(ctx);
  if (!next_set_) throw ContractViolation(fmt::format("task '{}' did not select a successor", tasks_[id].first));
  commit(next_);
}

void Engine::commit(TaskId next) {
  const std::size_t n = pending_.size();
  const Addr base = log_addr_ + 3 * static_cast<Addr>(n);
  device_.write(Region::kNonVolatile, base, static_cast<Word>(task_addr_ & 0xFFFF));
  device_.write(Region::kNonVolatile, base + 1, static_cast<Word>(task_addr_ >> 16));
  device_.write(Region::kNonVolatile, base + 2, next);
  // The single-word flag write is the commit point.
  const auto count = static_cast<Word>(n + 1);
  device_.write(Region::kNonVolatile, flag_addr_, count);

  std::uint64_t in_iter = 0;
  for (const auto& p : pending_) in_iter += p.in_iteration ? 1 : 0;
  ++commits_;
  redo_entries_ += count - 1u;
  logged_writes_ += task_writes_;
  iteration_logged_writes_ += in_iter;
  auto& b = bucket();
  ++b.commits;
  b.committed_entries += count - 1u;
  b.logged_writes += task_writes_;
  b.iteration_logged_writes += in_iter;
  progress_point();

  apply(static_cast<Word>(n + 1));
  device_.transition();
}

void Engine::apply(Word count) {
  for (Word k = 0; k < count; ++k) {
    const Addr base = log_addr_ + 3 * static_cast<Addr>(k);
    const Word lo = device_.read(Region::kNonVolatile, base);
    const Word hi = device_.read(Region::kNonVolatile, base + 1);
    const Word value = device_.read(Region::kNonVolatile, base + 2);
    device_.write(Region::kNonVolatile, static_cast<Addr>(lo) | (static_cast<Addr>(hi) << 16), value);
  }
  device_.write(Region::kNonVolatile, flag_addr_, 0);
}

void Engine::on_failure() {
  account();
  const double cycle_energy = device_.cycle_energy_uj();
  const std::string task = current_ < tasks_.size() ? tasks_[current_].first : "boot";
  auto snap = snapshot();
  stalled_ = snap == last_snapshot_ ? stalled_ + 1 : 0;
  last_snapshot_ = std::move(snap);
  device_.reboot();
  accounted_energy_ = device_.total_energy_uj();
  last_progress_energy_ = accounted_energy_;
  pending_.clear();
  own_writes_.clear();
  in_iteration_ = false;
  if (stalled_ >= options_.stall_cycles) {
    throw NonTermination(fmt::format("task '{}' made no progress in {} consecutive charge cycles "
                                     "(spent {:.2f} uJ per cycle)",
                                     task, stalled_, cycle_energy),
                         task, cycle_energy);
  }
  if (device_.cycle() > options_.max_cycles) {
    throw NonTermination(fmt::format("run exceeded {} charge cycles", options_.max_cycles), task, cycle_energy);
  }
}

void Engine::fill(RunStats& s) {
  account();
  const Counters& c = device_.counters();
  s.transitions = c.transitions;
  s.commits = commits_;
  s.redo_entries = redo_entries_;
  s.logged_writes = logged_writes_;
  s.iteration_logged_writes = iteration_logged_writes_;
  s.iterations = keys_.size();
  s.reexecuted_steps = attempts_ - keys_.size();
  s.reboots = device_.reboots();
  s.total_energy_uj = device_.total_energy_uj();
  s.dead_energy_uj = device_.dead_energy_uj();
  s.max_atomic_energy_uj = std::max(s.max_atomic_energy_uj, max_atomic_);
  s.accel_invocations = c.accel_invocations;
  s.accel_elements = c.accel_ops;
  s.dma_words = c.dma_words;
  s.counters = c;
  s.stages = buckets_;
}

}  // namespace imc
