// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/sonic.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "imc/error.hpp"

namespace imc {

namespace {

constexpr Word kPhaseZero = 0;
constexpr Word kPhaseAccumulate = 1;
constexpr Word kPhaseFinalize = 2;

std::uint64_t loop_key(std::size_t stage, std::uint64_t group, std::uint64_t pos, std::uint64_t i) {
  return iteration_key(stage, (group << 32) | (pos << 16) | i);
}

acc32 read_partial(TaskContext& ctx, Addr at) {
  const Word lo = ctx.nv_read(at);
  const Word hi = ctx.nv_read(at + 1);
  return join_words(lo, hi);
}

void write_partial(TaskContext& ctx, Addr at, acc32 v) {
  ctx.nv_write(at, lo_word(v));
  ctx.nv_write(at + 1, hi_word(v));
}

}  // namespace

LoopControl LoopControl::allocate(Device& dev) {
  const Addr base = dev.allocate(Region::kNonVolatile, kWords, "sonic.control");
  LoopControl c;
  c.stage = base;
  c.group = base + 1;
  c.pos = base + 2;
  c.index = base + 3;
  c.role = base + 4;
  c.phase = base + 5;
  c.read_index = base + 6;
  c.write_index = base + 7;
  c.backup = base + 8;
  return c;
}

void SoftwareKernel::iterate(TaskContext& ctx, int g, int pass, int i, Addr src, Addr dst, bool last) {
  const Stage& st = *s_.stage;
  const StagePlan& p = s_.plan;
  Addr in_idx;
  Addr w_addr;
  if (st.kind == StageKind::kConv) {
    const ConvTap& t = p.taps[static_cast<std::size_t>(g)][static_cast<std::size_t>(pass)];
    in_idx = p.input_base(i) + t.in_offset;
    w_addr = s_.weights + t.weight_index;
  } else {
    in_idx = static_cast<Addr>(pass);
    w_addr = s_.weights + static_cast<Addr>(i * p.cols + pass);
  }
  const auto x = static_cast<q15>(ctx.nv_read(s_.input + in_idx));
  const auto w = static_cast<q15>(ctx.nv_read(w_addr));
  ctx.compute(OpClass::kMultiply);
  acc32 acc = qmul(x, w);
  // The first pass writes the product alone; later passes add the partial
  // sum from the source buffer.
  if (pass > 0) {
    acc += read_partial(ctx, src + 2 * static_cast<Addr>(i));
    ctx.compute(OpClass::kArith);
  }
  if (last) {
    const int c = st.kind == StageKind::kConv ? g : i;
    const auto b = static_cast<q15>(ctx.nv_read(bias_addr(s_, c)));
    ctx.compute(OpClass::kArith, 2);
    const int out = st.kind == StageKind::kConv ? g * p.outputs + i : i;
    ctx.nv_write(s_.output + static_cast<Addr>(out), static_cast<Word>(finalize(acc, b, st.shift, st.relu)));
  } else {
    write_partial(ctx, dst + 2 * static_cast<Addr>(i), acc);
  }
}

std::size_t partial_buffer_words(const NetImage& img) { return 2 * std::max<std::size_t>(img.max_outputs, 1); }

InferenceResult loop_continuation_infer(Device& dev, const Network& net, const FixedTensor& input,
                                        const KernelFactory& factory, const SonicOptions& opt,
                                        const std::string& runtime_name) {
  const NetImage img = NetImage::load(dev, net, input);
  Engine eng(dev, opt.engine);
  const LoopControl ctl = LoopControl::allocate(dev);
  const std::size_t pwords = partial_buffer_words(img);
  const Addr partial[2] = {dev.allocate(Region::kNonVolatile, pwords, "sonic.partial0"),
                           dev.allocate(Region::kNonVolatile, pwords, "sonic.partial1")};
  eng.watch(ctl.stage, LoopControl::kWords);

  const std::size_t stages = img.stages.size();
  std::vector<std::unique_ptr<StageKernel>> kernels(stages);
  for (std::size_t s = 0; s < stages; ++s) {
    const StageImage& si = img.stages[s];
    if (si.plan.outputs > 0xFFFF || si.plan.groups > 0xFFFF) {
      throw ValidationError(fmt::format("layer '{}': loop bounds exceed 16-bit loop indices", si.layer));
    }
    if (si.plan.kind != StageKind::kSparse) kernels[s] = factory(si);
  }
  std::vector<std::uint64_t> undo(stages, 0);

  TaskId loop = 0;
  TaskId advance = 0;

  auto sparse_body = [&](TaskContext& ctx, std::size_t s) {
    const StageImage& si = img.stages[s];
    const Stage& st = *si.stage;
    const int m = si.plan.outputs;
    const Addr acc = partial[0];
    const Word phase = ctx.read(ctl.phase);
    if (phase == kPhaseZero) {
      for (Word r = ctx.nv_read(ctl.index); r < m; ++r) {
        ctx.begin_iteration(loop_key(s, kPhaseZero, 0, r));
        write_partial(ctx, acc + 2 * static_cast<Addr>(r), 0);
        ctx.nv_write(ctl.index, static_cast<Word>(r + 1));
        ctx.progress();
        ctx.end_iteration();
      }
    } else if (phase == kPhaseAccumulate) {
      const auto nnz = static_cast<Word>(st.sparse.nnz());
      Word ridx = ctx.nv_read(ctl.read_index);
      for (Word j = ctx.nv_read(ctl.write_index); j < nnz; ++j) {
        ctx.begin_iteration(loop_key(s, kPhaseAccumulate, 0, j));
        const auto& offs = st.sparse.offsets;
        const int r = static_cast<int>(std::upper_bound(offs.begin(), offs.end(), j) - offs.begin()) - 1;
        ctx.compute(OpClass::kControl);
        const Addr target = acc + 2 * static_cast<Addr>(r);
        // Undo phase: save the original value once, then advance the read
        // index. A resumed iteration with ridx == j + 1 reuses the backup.
        if (ridx == j) {
          write_partial(ctx, ctl.backup, read_partial(ctx, target));
          ctx.nv_write(ctl.read_index, static_cast<Word>(j + 1));
          ridx = static_cast<Word>(j + 1);
          ++undo[s];
        }
        const acc32 original = read_partial(ctx, ctl.backup);
        const Word col = ctx.nv_read(si.columns + j);
        const auto x = static_cast<q15>(ctx.nv_read(si.input + col));
        const auto v = static_cast<q15>(ctx.nv_read(si.weights + j));
        ctx.compute(OpClass::kMultiply);
        ctx.compute(OpClass::kArith);
        write_partial(ctx, target, original + qmul(x, v));
        ctx.nv_write(ctl.write_index, static_cast<Word>(j + 1));
        ctx.progress();
        ctx.end_iteration();
      }
    } else {
      for (Word r = ctx.nv_read(ctl.index); r < m; ++r) {
        ctx.begin_iteration(loop_key(s, kPhaseFinalize, 0, r));
        const acc32 a = read_partial(ctx, acc + 2 * static_cast<Addr>(r));
        const auto b = static_cast<q15>(ctx.nv_read(bias_addr(si, r)));
        ctx.compute(OpClass::kArith, 2);
        ctx.nv_write(si.output + r, static_cast<Word>(finalize(a, b, st.shift, st.relu)));
        ctx.nv_write(ctl.index, static_cast<Word>(r + 1));
        ctx.progress();
        ctx.end_iteration();
      }
    }
    ctx.next(advance);
  };

  loop = eng.add_task("loop", [&](TaskContext& ctx) {
    const Word s = ctx.read(ctl.stage);
    ctx.set_bucket(s);
    if (img.stages[s].plan.kind == StageKind::kSparse) {
      sparse_body(ctx, s);
      return;
    }
    StageKernel& k = *kernels[s];
    const Word g = ctx.read(ctl.group);
    const Word pos = ctx.read(ctl.pos);
    const Word role = ctx.read(ctl.role);
    const int n = k.iterations(g, pos);
    const bool last = pos + 1 == k.passes(g);
    const Addr src = partial[role & 1];
    const Addr dst = partial[(role & 1) ^ 1];
    // The index is never reset on re-entry: a reboot resumes here.
    for (Word i = ctx.nv_read(ctl.index); i < n; ++i) {
      ctx.begin_iteration(loop_key(s, g, pos, i));
      k.iterate(ctx, g, pos, i, src, dst, last);
      ctx.compute(OpClass::kControl);
      ctx.nv_write(ctl.index, static_cast<Word>(i + 1));
      ctx.progress();
      ctx.end_iteration();
    }
    ctx.next(advance);
  });

  advance = eng.add_task("advance", [&](TaskContext& ctx) {
    const Word s = ctx.read(ctl.stage);
    ctx.set_bucket(s);
    const StageImage& si = img.stages[s];
    ctx.compute(OpClass::kControl);
    auto next_stage = [&] {
      ctx.write(ctl.stage, static_cast<Word>(s + 1));
      ctx.write(ctl.group, 0);
      ctx.write(ctl.pos, 0);
      ctx.write(ctl.index, 0);
      ctx.write(ctl.phase, 0);
      ctx.write(ctl.read_index, 0);
      ctx.write(ctl.write_index, 0);
      ctx.next(s + 1u == stages ? kDone : loop);
    };
    if (si.plan.kind == StageKind::kSparse) {
      const Word phase = ctx.read(ctl.phase);
      if (phase == kPhaseFinalize) {
        next_stage();
      } else {
        ctx.write(ctl.phase, static_cast<Word>(phase + 1));
        ctx.write(ctl.index, 0);
        ctx.next(loop);
      }
      return;
    }
    const StageKernel& k = *kernels[s];
    const Word g = ctx.read(ctl.group);
    const Word pos = ctx.read(ctl.pos);
    if (pos + 1 < k.passes(g)) {
      const Word role = ctx.read(ctl.role);
      if (opt.nonatomic_swap) {
        ctx.nv_write(ctl.role, static_cast<Word>(role ^ 1));
        ctx.nv_write(ctl.index, 0);
        ctx.nv_write(ctl.pos, static_cast<Word>(pos + 1));
      } else {
        // Swap + index reset + pos increment commit together.
        ctx.write(ctl.role, static_cast<Word>(role ^ 1));
        ctx.write(ctl.index, 0);
        ctx.write(ctl.pos, static_cast<Word>(pos + 1));
      }
      ctx.next(loop);
    } else if (g + 1 < k.groups()) {
      ctx.write(ctl.group, static_cast<Word>(g + 1));
      ctx.write(ctl.pos, 0);
      ctx.write(ctl.index, 0);
      ctx.next(loop);
    } else {
      next_stage();
    }
  });

  eng.install(stages == 0 ? kDone : loop);
  eng.run();

  InferenceResult r;
  r.scores = img.read_output(dev);
  r.stats.runtime = runtime_name;
  eng.fill(r.stats);
  r.stats.stages.resize(std::max(r.stats.stages.size(), stages));
  for (std::size_t s = 0; s < stages; ++s) {
    r.stats.stages[s].layer = img.stages[s].layer;
    r.stats.stages[s].kind = std::string(to_string(img.stages[s].stage->kind));
    r.stats.stages[s].undo_backups = undo[s];
    r.stats.undo_backups += undo[s];
  }
  return r;
}

InferenceResult sonic_infer(Device& dev, const Network& net, const FixedTensor& input, const SonicOptions& opt) {
  return loop_continuation_infer(
      dev, net, input, [](const StageImage& si) { return std::make_unique<SoftwareKernel>(si); }, opt,
      opt.nonatomic_swap ? "sonic-nonatomic" : "sonic");
}

SonicLayout sonic_layout(const Device& dev) {
  SonicLayout l;
  for (const auto& a : dev.allocations()) {
    if (a.name == "sonic.control") {
      l.control.stage = a.base;
      l.control.group = a.base + 1;
      l.control.pos = a.base + 2;
      l.control.index = a.base + 3;
      l.control.role = a.base + 4;
      l.control.phase = a.base + 5;
      l.control.read_index = a.base + 6;
      l.control.write_index = a.base + 7;
      l.control.backup = a.base + 8;
    } else if (a.name == "sonic.partial0") {
      l.partial[0] = a.base;
      l.partial_words = a.words;
    } else if (a.name == "sonic.partial1") {
      l.partial[1] = a.base;
    }
  }
  return l;
}

}  // namespace imc
