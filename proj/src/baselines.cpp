// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include <fmt/format.h>

#include "imc/error.hpp"
#include "imc/runtime.hpp"

namespace imc {

namespace {

void label_stages(RunStats& stats, const NetImage& img) {
  stats.stages.resize(std::max(stats.stages.size(), img.stages.size()));
  for (std::size_t s = 0; s < img.stages.size(); ++s) {
    stats.stages[s].layer = img.stages[s].layer;
    stats.stages[s].kind = std::string(to_string(img.stages[s].stage->kind));
  }
}

std::uint64_t stage_iterations(const StageImage& si) {
  if (si.plan.kind == StageKind::kSparse) {
    return 2 * static_cast<std::uint64_t>(si.plan.outputs) + si.stage->sparse.nnz();
  }
  return si.plan.iterations();
}

// Whole stage in registers: one pass over outputs, each output's terms
// accumulated before its single write.
void naive_stage(TaskContext& ctx, const StageImage& si) {
  const Stage& st = *si.stage;
  const StagePlan& p = si.plan;
  switch (st.kind) {
    case StageKind::kConv:
      for (int g = 0; g < p.groups; ++g) {
        const auto& taps = p.taps[static_cast<std::size_t>(g)];
        for (int i = 0; i < p.outputs; ++i) {
          acc32 acc = 0;
          for (const ConvTap& t : taps) {
            const auto x = static_cast<q15>(ctx.nv_read(si.input + p.input_base(i) + t.in_offset));
            const auto w = static_cast<q15>(ctx.nv_read(si.weights + t.weight_index));
            ctx.compute(OpClass::kMultiply);
            ctx.compute(OpClass::kArith);
            ctx.compute(OpClass::kControl);
            acc += qmul(x, w);
          }
          const auto b = static_cast<q15>(ctx.nv_read(bias_addr(si, g)));
          ctx.compute(OpClass::kArith, 2);
          ctx.nv_write(si.output + static_cast<Addr>(g * p.outputs + i),
                       static_cast<Word>(finalize(acc, b, st.shift, st.relu)));
        }
      }
      break;
    case StageKind::kDense:
      for (int r = 0; r < p.outputs; ++r) {
        acc32 acc = 0;
        for (int c = 0; c < p.cols; ++c) {
          const auto x = static_cast<q15>(ctx.nv_read(si.input + static_cast<Addr>(c)));
          const auto w = static_cast<q15>(ctx.nv_read(si.weights + static_cast<Addr>(r * p.cols + c)));
          ctx.compute(OpClass::kMultiply);
          ctx.compute(OpClass::kArith);
          ctx.compute(OpClass::kControl);
          acc += qmul(x, w);
        }
        const auto b = static_cast<q15>(ctx.nv_read(bias_addr(si, r)));
        ctx.compute(OpClass::kArith, 2);
        ctx.nv_write(si.output + static_cast<Addr>(r), static_cast<Word>(finalize(acc, b, st.shift, st.relu)));
      }
      break;
    case StageKind::kSparse:
      for (int r = 0; r < p.outputs; ++r) {
        const Word begin = ctx.nv_read(si.offsets + static_cast<Addr>(r));
        const Word end = ctx.nv_read(si.offsets + static_cast<Addr>(r + 1));
        acc32 acc = 0;
        for (Word j = begin; j < end; ++j) {
          const Word col = ctx.nv_read(si.columns + j);
          const auto x = static_cast<q15>(ctx.nv_read(si.input + col));
          const auto v = static_cast<q15>(ctx.nv_read(si.weights + j));
          ctx.compute(OpClass::kMultiply);
          ctx.compute(OpClass::kArith);
          ctx.compute(OpClass::kControl);
          acc += qmul(x, v);
        }
        const auto b = static_cast<q15>(ctx.nv_read(bias_addr(si, r)));
        ctx.compute(OpClass::kArith, 2);
        ctx.nv_write(si.output + static_cast<Addr>(r), static_cast<Word>(finalize(acc, b, st.shift, st.relu)));
      }
      break;
  }
}

// One flat iteration of a tiled stage; every shared write goes to the log.
void tiled_iteration(TaskContext& ctx, std::size_t s, const StageImage& si, Addr acc_base, std::uint64_t f) {
  const Stage& st = *si.stage;
  const StagePlan& p = si.plan;
  ctx.compute(OpClass::kControl, 2);
  ctx.begin_iteration(iteration_key(s, f));
  auto read_acc = [&](int i) {
    const Word lo = ctx.read(acc_base + 2 * static_cast<Addr>(i));
    const Word hi = ctx.read(acc_base + 2 * static_cast<Addr>(i) + 1);
    return join_words(lo, hi);
  };
  auto write_acc = [&](int i, acc32 v) {
    ctx.write(acc_base + 2 * static_cast<Addr>(i), lo_word(v));
    ctx.write(acc_base + 2 * static_cast<Addr>(i) + 1, hi_word(v));
  };

  if (st.kind == StageKind::kSparse) {
    const auto m = static_cast<std::uint64_t>(p.outputs);
    const std::uint64_t nnz = st.sparse.nnz();
    if (f < m) {
      write_acc(static_cast<int>(f), 0);
    } else if (f < m + nnz) {
      const auto j = static_cast<Word>(f - m);
      const auto& offs = st.sparse.offsets;
      const int r = static_cast<int>(std::upper_bound(offs.begin(), offs.end(), j) - offs.begin()) - 1;
      ctx.compute(OpClass::kControl);
      const Word col = ctx.nv_read(si.columns + j);
      const auto x = static_cast<q15>(ctx.nv_read(si.input + col));
      const auto v = static_cast<q15>(ctx.nv_read(si.weights + j));
      ctx.compute(OpClass::kMultiply);
      const acc32 acc = read_acc(r) + qmul(x, v);
      ctx.compute(OpClass::kArith);
      write_acc(r, acc);
    } else {
      const int r = static_cast<int>(f - m - nnz);
      const acc32 acc = read_acc(r);
      const auto b = static_cast<q15>(ctx.nv_read(bias_addr(si, r)));
      ctx.compute(OpClass::kArith, 2);
      ctx.write(si.output + static_cast<Addr>(r), static_cast<Word>(finalize(acc, b, st.shift, st.relu)));
    }
    ctx.end_iteration();
    return;
  }

  const int g = static_cast<int>(std::upper_bound(si.group_base.begin(), si.group_base.end(), f) -
                                 si.group_base.begin()) - 1;
  const std::uint64_t rem = f - si.group_base[static_cast<std::size_t>(g)];
  const int pass = static_cast<int>(rem / static_cast<std::uint64_t>(p.outputs));
  const int i = static_cast<int>(rem % static_cast<std::uint64_t>(p.outputs));
  Addr in_idx;
  Addr w_addr;
  if (st.kind == StageKind::kConv) {
    const ConvTap& t = p.taps[static_cast<std::size_t>(g)][static_cast<std::size_t>(pass)];
    in_idx = p.input_base(i) + t.in_offset;
    w_addr = si.weights + t.weight_index;
  } else {
    in_idx = static_cast<Addr>(pass);
    w_addr = si.weights + static_cast<Addr>(i * p.cols + pass);
  }
  const auto x = static_cast<q15>(ctx.nv_read(si.input + in_idx));
  const auto w = static_cast<q15>(ctx.nv_read(w_addr));
  ctx.compute(OpClass::kMultiply);
  acc32 acc = qmul(x, w);
  if (pass > 0) {
    acc += read_acc(i);
    ctx.compute(OpClass::kArith);
  }
  if (pass == p.passes(g) - 1) {
    const int c = st.kind == StageKind::kConv ? g : i;
    const auto b = static_cast<q15>(ctx.nv_read(bias_addr(si, c)));
    ctx.compute(OpClass::kArith, 2);
    const int out = st.kind == StageKind::kConv ? g * p.outputs + i : i;
    ctx.write(si.output + static_cast<Addr>(out), static_cast<Word>(finalize(acc, b, st.shift, st.relu)));
  } else {
    write_acc(i, acc);
  }
  ctx.end_iteration();
}

}  // namespace

InferenceResult naive_infer(Device& dev, const Network& net, const FixedTensor& input, const RuntimeOptions& opt) {
  const NetImage img = NetImage::load(dev, net, input);
  Engine eng(dev, opt.engine);
  const TaskId infer = eng.add_task("infer", [&](TaskContext& ctx) {
    for (std::size_t s = 0; s < img.stages.size(); ++s) {
      ctx.set_bucket(s);
      naive_stage(ctx, img.stages[s]);
    }
    ctx.next(kDone);
  });
  eng.install(infer);
  eng.run();
  InferenceResult r;
  r.scores = img.read_output(dev);
  r.stats.runtime = "naive";
  eng.fill(r.stats);
  label_stages(r.stats, img);
  return r;
}

InferenceResult tiled_infer(Device& dev, const Network& net, const FixedTensor& input, int tile,
                            const RuntimeOptions& opt) {
  if (tile < 1) throw ContractViolation(fmt::format("tile size must be at least 1, got {}", tile));
  const NetImage img = NetImage::load(dev, net, input);
  Engine eng(dev, opt.engine);
  const Addr cursor = dev.allocate(Region::kNonVolatile, 3, "tiled.cursor");  // stage, flat lo, flat hi
  const Addr acc = dev.allocate(Region::kNonVolatile, 2 * std::max<std::size_t>(img.max_outputs, 1), "tiled.acc");
  eng.watch(cursor, 3);
  const std::size_t stages = img.stages.size();

  TaskId self = 0;
  self = eng.add_task("tile", [&](TaskContext& ctx) {
    const Word s = ctx.read(cursor);
    ctx.set_bucket(s);
    const std::uint64_t flat = static_cast<std::uint32_t>(join_words(ctx.read(cursor + 1), ctx.read(cursor + 2)));
    const StageImage& si = img.stages[s];
    const std::uint64_t total = stage_iterations(si);
    const std::uint64_t end = std::min<std::uint64_t>(flat + static_cast<std::uint64_t>(tile), total);
    for (std::uint64_t f = flat; f < end; ++f) tiled_iteration(ctx, s, si, acc, f);
    ctx.compute(OpClass::kControl);
    if (end == total) {
      ctx.write(cursor, static_cast<Word>(s + 1));
      ctx.write(cursor + 1, 0);
      ctx.write(cursor + 2, 0);
      ctx.next(s + 1u == stages ? kDone : self);
    } else {
      const auto e = static_cast<acc32>(end);
      ctx.write(cursor + 1, lo_word(e));
      ctx.write(cursor + 2, hi_word(e));
      ctx.next(self);
    }
  });
  eng.install(stages == 0 ? kDone : self);
  eng.run();
  InferenceResult r;
  r.scores = img.read_output(dev);
  r.stats.runtime = fmt::format("tiled:{}", tile);
  r.stats.tile = tile;
  eng.fill(r.stats);
  label_stages(r.stats, img);
  return r;
}

}  // namespace imc
