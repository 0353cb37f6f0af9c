// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Loop continuation: loop control variables live in non-volatile memory and
// are updated at the end of every iteration, so a reboot resumes the
// interrupted iteration instead of restarting a task. Iterations are made
// idempotent by loop-ordered buffering (conv and dense stages: each pass
// reads partial sums from one buffer and writes the other; the buffers swap
// atomically between passes) and by sparse undo-logging (sparse stages
// update in place behind a one-slot backup and two progress indices).

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "imc/runtime.hpp"

namespace imc {

/// Non-volatile loop control words. Layout is fixed; see LoopControl::words.
struct LoopControl {
  Addr stage = 0;
  Addr group = 0;
  Addr pos = 0;
  Addr index = 0;
  Addr role = 0;
  Addr phase = 0;
  Addr read_index = 0;
  Addr write_index = 0;
  Addr backup = 0;  // two words: one 32-bit partial sum

  static constexpr std::size_t kWords = 10;
  static LoopControl allocate(Device& device);
};

/// Body of one conv or dense stage under loop continuation. A stage is a
/// sequence of groups; each group a sequence of passes; each pass a sequence
/// of iterations. Iteration bodies must be idempotent given that `src` is
/// only read and `dst` (or the stage output on the last pass) only written.
class StageKernel {
 public:
  virtual ~StageKernel() = default;
  virtual int groups() const = 0;
  virtual int passes(int group) const = 0;
  virtual int iterations(int group, int pass) const = 0;
  virtual void iterate(TaskContext& ctx, int group, int pass, int i, Addr src, Addr dst, bool last) = 0;
};

/// Scalar software kernel: one rounded product per output per pass.
class SoftwareKernel : public StageKernel {
 public:
  explicit SoftwareKernel(const StageImage& stage) : s_(stage) {}
  int groups() const override { return s_.plan.groups; }
  int passes(int group) const override { return s_.plan.passes(group); }
  int iterations(int, int) const override { return s_.plan.outputs; }
  void iterate(TaskContext& ctx, int group, int pass, int i, Addr src, Addr dst, bool last) override;

 private:
  const StageImage& s_;
};

using KernelFactory = std::function<std::unique_ptr<StageKernel>(const StageImage& stage)>;

struct SonicOptions {
  EngineOptions engine;
  /// Test-only mutation: the buffer swap between passes is done with plain
  /// non-volatile writes instead of an atomic commit. Breaks crash
  /// consistency on purpose.
  bool nonatomic_swap = false;
};

/// Words of partial-sum storage each double buffer holds (2 per output).
std::size_t partial_buffer_words(const NetImage& image);

/// Runs a network under loop continuation. `kernels` builds the conv/dense
/// stage bodies; sparse stages always use sparse undo-logging in software.
InferenceResult loop_continuation_infer(Device& device, const Network& net, const FixedTensor& input,
                                        const KernelFactory& kernels, const SonicOptions& options,
                                        const std::string& runtime_name);

InferenceResult sonic_infer(Device& device, const Network& net, const FixedTensor& input,
                            const SonicOptions& options = {});

/// Addresses a sonic run used, exposed for overhead measurements.
struct SonicLayout {
  LoopControl control;
  Addr partial[2] = {0, 0};
  std::size_t partial_words = 0;
};

/// Layout of the most recent loop_continuation_infer on `device`, recovered
/// from its named allocations.
SonicLayout sonic_layout(const Device& device);

}  // namespace imc
