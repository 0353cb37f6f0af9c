// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "imc/error.hpp"
#include "imc/experiment.hpp"
#include "imc/fixtures.hpp"
#include "imc/runtime.hpp"

using namespace imc;

namespace {

Device trace_device(std::vector<double> points) {
  return Device(CostModel{}, EnergyBuffer(1e12), PowerSchedule::trace(std::move(points)), MemorySpace(256, 8192));
}

Device continuous_device() { return Device(CostModel{}, EnergyBuffer(1e12), PowerSchedule::continuous(), MemorySpace(256, 8192)); }

// Two-task graph: "put" logs a=1 and b=2, "look" records what it sees.
struct Graph {
  Addr a = 0, b = 0;
  std::vector<std::pair<Word, Word>> put_saw;
  std::vector<std::pair<Word, Word>> look_saw;

  void run(Device& d) {
    a = d.allocate(Region::kNonVolatile, 1, "a");
    b = d.allocate(Region::kNonVolatile, 1, "b");
    Engine e(d);
    e.watch(a, 1);
    TaskId look = 0;
    const TaskId put = e.add_task("put", [&](TaskContext& ctx) {
      put_saw.emplace_back(d.memory().peek(Region::kNonVolatile, a), d.memory().peek(Region::kNonVolatile, b));
      ctx.write(a, 1);
      ctx.write(b, 2);
      ctx.next(look);
    });
    look = e.add_task("look", [&](TaskContext& ctx) {
      look_saw.emplace_back(ctx.nv_read(a), ctx.nv_read(b));
      ctx.next(kDone);
    });
    e.install(put);
    e.run();
  }
};

// Cumulative energy right after the redo-log apply wrote `addr`.
double energy_after_apply_of(Addr target) {
  Device d = continuous_device();
  std::optional<double> at;
  int seen = 0;
  d.set_recorder([&](const AccessEvent& ev) {
    if (ev.kind == AccessEvent::Kind::kWrite && ev.region == Region::kNonVolatile && ev.addr == target &&
        ev.actor == Actor::kCpu && ++seen == 1) {
      at = d.total_energy_uj();
    }
  });
  Graph g;
  g.run(d);
  REQUIRE(at.has_value());
  return *at;
}

}  // namespace

TEST_CASE("failure after the commit flag replays the whole log") {
  // Addresses are deterministic: a and b come first in a fresh device.
  Device probe = continuous_device();
  const Addr b = probe.allocate(Region::kNonVolatile, 2, "ab") + 1;
  const Addr a = b - 1;
  const double after_a = energy_after_apply_of(a);
  const double after_b = energy_after_apply_of(b);
  REQUIRE(after_b > after_a);

  // Fail on the first metered step after a was applied, before b.
  Device d = trace_device({after_a + 1.0});
  Graph g;
  g.run(d);
  CHECK(d.reboots() == 1);
  REQUIRE(g.put_saw.size() == 1);
  REQUIRE(g.look_saw.size() == 1);
  CHECK(g.look_saw[0] == std::make_pair(Word{1}, Word{2}));
}

TEST_CASE("failure before the commit flag applies nothing") {
  Device d = trace_device({30.0});
  Graph g;
  g.run(d);
  CHECK(d.reboots() == 1);
  REQUIRE(g.put_saw.size() == 2);
  CHECK(g.put_saw[1] == std::make_pair(Word{0}, Word{0}));
  CHECK(g.look_saw.back() == std::make_pair(Word{1}, Word{2}));
}

TEST_CASE("reads inside a task see the task's own logged writes") {
  Device d = continuous_device();
  const Addr x = d.allocate(Region::kNonVolatile, 1, "x");
  Engine e(d);
  Word seen = 0, raw = 0;
  const TaskId t = e.add_task("t", [&](TaskContext& ctx) {
    ctx.write(x, 9);
    seen = ctx.read(x);
    raw = d.memory().peek(Region::kNonVolatile, x);
    ctx.next(kDone);
  });
  e.install(t);
  e.run();
  CHECK(seen == 9);
  CHECK(raw == 0);
  CHECK(d.memory().peek(Region::kNonVolatile, x) == 9);
}

TEST_CASE("an empty log commits as a no-op") {
  Device d = continuous_device();
  const auto before = std::vector<Word>(d.memory().view(Region::kNonVolatile).begin(),
                                        d.memory().view(Region::kNonVolatile).end());
  Engine e(d);
  const TaskId t = e.add_task("noop", [](TaskContext& ctx) { ctx.next(kDone); });
  e.install(t);
  e.run();
  CHECK(e.commits() == 1);
  CHECK(e.redo_entries() == 0);
  CHECK(d.memory().peek(Region::kNonVolatile, e.flag_addr()) == 0);
  CHECK(before.size() == d.memory().view(Region::kNonVolatile).size());
}

TEST_CASE("log overflow is a configuration error") {
  Device d = continuous_device();
  const Addr x = d.allocate(Region::kNonVolatile, 8, "x");
  EngineOptions o;
  o.log_capacity = 4;
  Engine e(d, o);
  const TaskId t = e.add_task("big", [&](TaskContext& ctx) {
    for (Addr k = 0; k < 8; ++k) ctx.write(x + k, 1);
    ctx.next(kDone);
  });
  e.install(t);
  CHECK_THROWS_AS(e.run(), ValidationError);
}

TEST_CASE("a task without a successor is a contract violation") {
  Device d = continuous_device();
  Engine e(d);
  const TaskId t = e.add_task("lost", [](TaskContext&) {});
  e.install(t);
  CHECK_THROWS_AS(e.run(), ContractViolation);
}

namespace {

// Energy from power-on to the first commit point of tiled:k.
double first_commit_energy(const Fixture& fx, int k) {
  DeviceConfig cont;
  cont.schedule = PowerSchedule::continuous();
  Device d(cont);
  double at = 0.0;
  d.set_recorder([&](const AccessEvent& ev) {
    if (at > 0.0 || ev.kind != AccessEvent::Kind::kWrite || ev.region != Region::kNonVolatile) return;
    for (const auto& a : d.allocations()) {
      if (a.name == "engine.commit_flag" && a.base == ev.addr && d.memory().peek(Region::kNonVolatile, ev.addr) != 0) {
        at = d.total_energy_uj();
      }
    }
  });
  tiled_infer(d, fx.net, fx.input(), k);
  return at;
}

}  // namespace

TEST_CASE("tiled dot product: small tiles waste work, large tiles stall") {
  const Fixture fx = make_fixture("dot20");
  const FixedTensor want = reference_infer(fx.net, fx.input());
  // One charge cycle pays for booting and committing exactly ten iterations.
  const double budget = first_commit_energy(fx, 10);

  DeviceConfig c;
  c.capacity_uj = budget;
  c.schedule = PowerSchedule::fixed_budget();

  Device d5(c);
  const InferenceResult r5 = tiled_infer(d5, fx.net, fx.input(), 5);
  CHECK(r5.scores == want);
  CHECK(r5.stats.reboots > 0);
  CHECK(r5.stats.reexecuted_steps > 0);

  Device d12(c);
  CHECK_THROWS_AS(tiled_infer(d12, fx.net, fx.input(), 12), NonTermination);
}

TEST_CASE("transitions equal ceil(iterations / k) on continuous power") {
  const Fixture fx = make_fixture("dot20");
  for (int k : {1, 3, 5, 7, 20, 64}) {
    DeviceConfig c;
    c.schedule = PowerSchedule::continuous();
    Device d(c);
    const InferenceResult r = tiled_infer(d, fx.net, fx.input(), k);
    CHECK(r.stats.iterations == 20);
    CHECK(r.stats.transitions == static_cast<std::uint64_t>((20 + k - 1) / k));
    CHECK(r.stats.reboots == 0);
  }
  DeviceConfig c;
  c.schedule = PowerSchedule::continuous();
  Device d(c);
  CHECK_THROWS_AS(tiled_infer(d, fx.net, fx.input(), 0), ContractViolation);
}

TEST_CASE("naive runtime: reference on continuous power, stalls on a small buffer") {
  const Fixture fx = make_fixture("mnist_mini");
  DeviceConfig c;
  c.schedule = PowerSchedule::continuous();
  Device d(c);
  const InferenceResult r = naive_infer(d, fx.net, fx.input());
  CHECK(r.scores == reference_infer(fx.net, fx.input()));
  CHECK(r.stats.reboots == 0);

  DeviceConfig small;
  small.preset = "100uF";
  Device s(small);
  try {
    naive_infer(s, fx.net, fx.input());
    FAIL("expected NonTermination");
  } catch (const NonTermination& e) {
    CHECK(e.task() == "infer");
    CHECK(e.cycle_energy_uj() <= small.resolved_capacity_uj());
  }
}

TEST_CASE("an empty network passes its input through") {
  Network net;
  net.name = "empty";
  net.input_shape = {4};
  net.class_count = 4;
  net.validate();
  const FixedTensor x({4}, {1, -2, 3, -4}, 0);
  for (const char* spec : {"naive", "tiled:3", "sonic", "tails"}) {
    DeviceConfig c;
    c.preset = "100uF";
    Device d(c);
    CHECK(run_inference(d, net, x, RuntimeSpec::parse(spec)).scores == x);
  }
}

TEST_CASE("tiled runs survive random failures") {
  for (const char* name : {"tiny_conv1d", "mnist_mini", "okg_mini"}) {
    const Fixture fx = make_fixture(name);
    CrashSweepOptions o;
    o.seeds = 25;
    // The whole tiny inference is shorter than one random on-period.
    o.exhaustive_stride = std::string(name) == "tiny_conv1d" ? 1 : 0;
    const auto rep = crash_sweep(fx.net, fx.input(), RuntimeSpec::parse("tiled:4"), DeviceConfig{}, o);
    CHECK_MESSAGE(rep.passed(), name);
    CHECK(rep.reboots > 0);
  }
}

TEST_CASE("tiled commits log every shared write") {
  const Fixture fx = make_fixture("dense_conv");
  DeviceConfig c;
  c.schedule = PowerSchedule::continuous();
  Device d(c);
  const RunStats s = tiled_infer(d, fx.net, fx.input(), 8).stats;
  CHECK(s.redo_entries == s.logged_writes);
  CHECK(s.iteration_logged_writes > 0);
  CHECK(s.commits == s.transitions);
}

TEST_CASE("stats serialize to CSV and JSON") {
  const Fixture fx = make_fixture("tiny_conv1d");
  DeviceConfig c;
  c.schedule = PowerSchedule::continuous();
  Device d(c);
  const RunStats s = tiled_infer(d, fx.net, fx.input(), 2).stats;
  const std::string header = stats_csv_header();
  const std::string row = stats_csv_row(s);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(row.rfind("tiled:2,", 0) == 0);
  const nlohmann::json j = s;
  for (const char* k : {"transitions", "commits", "redo_entries", "reexecuted_steps", "reboots", "total_energy_uj",
                        "dead_energy_uj"}) {
    CHECK_MESSAGE(j.contains(k), k);
  }
  CHECK(j["stages"].size() == 1);
}
