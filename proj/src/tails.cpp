// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/tails.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "imc/error.hpp"

namespace imc {

// --- Accelerator -------------------------------------------------------------

Accelerator::Accelerator(Device& dev, std::size_t reserve) : dev_(dev) {
  const std::size_t words = dev.memory().words(Region::kVolatile);
  const std::size_t used = dev.allocated_words(Region::kVolatile);
  if (used + reserve + 6 > words) throw ContractViolation("no volatile memory left for the operating buffer");
  capacity_ = (words - used - reserve) / 6;
  base_ = dev.allocate(Region::kVolatile, 6 * capacity_, "tails.operating_buffer");
}

void Accelerator::check(Addr addr, std::size_t words) const {
  if (addr < base_ || addr + words > base_ + 6 * capacity_) {
    throw ContractViolation(fmt::format("accelerator operand [{}, +{}) outside the operating buffer", addr, words));
  }
}

void Accelerator::invoke(std::size_t elements) {
  const CostModel& c = dev_.costs();
  dev_.debit(c.accel_invoke + c.accel_op * static_cast<double>(elements));
  ++dev_.counters().accel_invocations;
  dev_.counters().accel_ops += elements;
}

q15 Accelerator::load16(Addr addr) { return static_cast<q15>(dev_.load(Region::kVolatile, addr, Actor::kAccel)); }

acc32 Accelerator::load32(Addr addr) {
  const Word lo = dev_.load(Region::kVolatile, addr, Actor::kAccel);
  const Word hi = dev_.load(Region::kVolatile, addr + 1, Actor::kAccel);
  return join_words(lo, hi);
}

void Accelerator::store32(Addr addr, acc32 v) {
  dev_.store(Region::kVolatile, addr, lo_word(v), Actor::kAccel);
  dev_.store(Region::kVolatile, addr + 1, hi_word(v), Actor::kAccel);
}

void Accelerator::dma(Region src_region, Addr src, Region dst_region, Addr dst, std::size_t words) {
  const CostModel& c = dev_.costs();
  dev_.debit(c.dma_setup);
  ++dev_.counters().dma_setups;
  for (std::size_t k = 0; k < words; ++k) {
    dev_.debit(c.dma_word);
    ++dev_.counters().dma_words;
    const Word v = dev_.load(src_region, src + static_cast<Addr>(k), Actor::kDma);
    dev_.store(dst_region, dst + static_cast<Addr>(k), v, Actor::kDma);
  }
}

void Accelerator::fir(Addr signal, std::size_t len, Addr filter, std::size_t taps, Addr out) {
  if (taps == 0 || taps > len) throw ContractViolation("FIR needs 1 <= taps <= signal length");
  const std::size_t n = len - taps + 1;
  check(signal, len);
  check(filter, taps);
  check(out, 2 * n);
  invoke(n * taps);
  std::vector<q15> sig(len), filt(taps);
  for (std::size_t k = 0; k < len; ++k) sig[k] = load16(signal + static_cast<Addr>(k));
  for (std::size_t k = 0; k < taps; ++k) filt[k] = load16(filter + static_cast<Addr>(k));
  for (std::size_t j = 0; j < n; ++j) {
    acc32 acc = 0;
    for (std::size_t k = 0; k < taps; ++k) acc += qmul(sig[j + k], filt[k]);
    store32(out + 2 * static_cast<Addr>(j), acc);
  }
}

void Accelerator::add32(Addr a, Addr b, Addr out, std::size_t n) {
  check(a, 2 * n);
  check(b, 2 * n);
  check(out, 2 * n);
  invoke(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto off = 2 * static_cast<Addr>(j);
    store32(out + off, load32(a + off) + load32(b + off));
  }
}

void Accelerator::shift_right32(Addr in, Addr out, std::size_t n, int bits) {
  if (bits <= 0) throw ContractViolation("the accelerator only shifts right");
  check(in, 2 * n);
  check(out, 2 * n);
  invoke(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto off = 2 * static_cast<Addr>(j);
    store32(out + off, static_cast<acc32>(shift_round(load32(in + off), -bits)));
  }
}

void Accelerator::dot(Addr a, Addr b, std::size_t n, Addr out) {
  check(a, n);
  check(b, n);
  check(out, 2);
  invoke(n);
  acc32 acc = 0;
  for (std::size_t k = 0; k < n; ++k) acc += qmul(load16(a + static_cast<Addr>(k)), load16(b + static_cast<Addr>(k)));
  store32(out, acc);
}

std::vector<acc32> Accelerator::run_fir(std::span<const q15> signal, std::span<const q15> filter) {
  if (signal.size() > capacity_ || filter.size() > capacity_) throw ContractViolation("FIR tile overflow");
  for (std::size_t k = 0; k < signal.size(); ++k) {
    dev_.memory().poke(Region::kVolatile, a() + static_cast<Addr>(k), static_cast<Word>(signal[k]));
  }
  for (std::size_t k = 0; k < filter.size(); ++k) {
    dev_.memory().poke(Region::kVolatile, b() + static_cast<Addr>(k), static_cast<Word>(filter[k]));
  }
  fir(a(), signal.size(), b(), filter.size(), q());
  std::vector<acc32> out(signal.size() - filter.size() + 1);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const Word lo = dev_.memory().peek(Region::kVolatile, q() + 2 * static_cast<Addr>(j));
    const Word hi = dev_.memory().peek(Region::kVolatile, q() + 2 * static_cast<Addr>(j) + 1);
    out[j] = join_words(lo, hi);
  }
  return out;
}

// --- calibration -------------------------------------------------------------

CalibrationState CalibrationState::allocate(Device& dev, std::size_t capacity, int taps) {
  CalibrationState s;
  s.next_tile = dev.allocate(Region::kNonVolatile, 3, "tails.calibration");
  s.result = s.next_tile + 1;
  s.valid = s.next_tile + 2;
  // Signal, filter, partials in, outputs out.
  s.scratch = dev.allocate(Region::kNonVolatile, 5 * capacity + static_cast<std::size_t>(taps), "tails.calib_scratch");
  return s;
}

void CalibrationState::invalidate(Device& dev, int initial_tile) const {
  dev.memory().poke(Region::kNonVolatile, valid, 0);
  dev.memory().poke(Region::kNonVolatile, result, 0);
  dev.memory().poke(Region::kNonVolatile, next_tile, static_cast<Word>(initial_tile));
}

namespace {

// Worst-case round trip for a tile of t signal elements: every transfer and
// operation an inference iteration of that size can need.
void calibration_attempt(TaskContext& ctx, Accelerator& acc, const CalibrationState& st, std::size_t t,
                         std::size_t calib_taps) {
  const std::size_t cap = acc.capacity();
  const std::size_t taps = std::min(calib_taps, t);
  const std::size_t n = t - taps + 1;
  const Addr sig = st.scratch;
  const Addr filt = sig + static_cast<Addr>(cap);
  const Addr part = filt + static_cast<Addr>(calib_taps);
  const Addr out = part + static_cast<Addr>(2 * cap);
  acc.dma(Region::kNonVolatile, filt, Region::kVolatile, acc.b(), taps);
  acc.dma(Region::kNonVolatile, sig, Region::kVolatile, acc.a(), t);
  acc.dma(Region::kNonVolatile, part, Region::kVolatile, acc.p(), 2 * n);
  acc.fir(acc.a(), t, acc.b(), taps, acc.q());
  acc.add32(acc.q(), acc.p(), acc.q(), n);
  acc.shift_right32(acc.q(), acc.q(), n, 1);
  for (std::size_t j = 0; j < n; ++j) {
    const acc32 v = join_words(ctx.vread(acc.q() + 2 * static_cast<Addr>(j)),
                               ctx.vread(acc.q() + 2 * static_cast<Addr>(j) + 1));
    ctx.compute(OpClass::kArith, 2);
    ctx.vwrite(acc.a() + static_cast<Addr>(j), static_cast<Word>(finalize(v, 0, 0, true)));
  }
  acc.dma(Region::kVolatile, acc.q(), Region::kNonVolatile, out, 2 * n);
}

}  // namespace

CalibrationResult calibrate(Device& dev, Accelerator& acc, const TailsOptions& opt) {
  if (opt.initial_tile < 1 || opt.initial_tile > 0xFFFF) {
    throw ContractViolation(fmt::format("initial tile must be in [1, 65535], got {}", opt.initial_tile));
  }
  if (opt.calib_taps < 1) throw ContractViolation("calibration taps must be positive");
  const double energy0 = dev.total_energy_uj();
  const std::uint64_t reboots0 = dev.reboots();
  Engine eng(dev, opt.engine);
  const CalibrationState st = CalibrationState::allocate(dev, acc.capacity(), opt.calib_taps);
  st.invalidate(dev, opt.initial_tile);
  eng.watch(st.next_tile, 1);
  const auto cap = static_cast<Word>(std::min<std::size_t>(acc.capacity(), 0xFFFF));
  const auto taps = static_cast<std::size_t>(opt.calib_taps);

  const TaskId task = eng.add_task("calibrate", [&](TaskContext& ctx) {
    if (ctx.read(st.valid) != 0) {
      ctx.next(kDone);
      return;
    }
    Word t = ctx.nv_read(st.next_tile);
    if (t == 0) {
      throw UnusableAccelerator("calibration halved the tile to zero: the energy buffer cannot fund one "
                                "accelerator round trip");
    }
    t = std::min(t, cap);
    ctx.compute(OpClass::kControl);
    // The halved tile is persisted before the attempt, so a failed attempt
    // resumes with the next smaller tile.
    ctx.nv_write(st.next_tile, static_cast<Word>(t / 2));
    ctx.progress();
    calibration_attempt(ctx, acc, st, t, taps);
    ctx.write(st.result, t);
    ctx.write(st.valid, 1);
    ctx.next(kDone);
  });
  eng.install(task);
  eng.run();

  CalibrationResult r;
  r.tile = dev.memory().peek(Region::kNonVolatile, st.result);
  r.reboots = dev.reboots() - reboots0;
  r.energy_uj = dev.total_energy_uj() - energy0;
  r.commits = eng.commits();
  return r;
}

double calibration_energy(const DeviceConfig& config, int tile, const TailsOptions& options) {
  DeviceConfig c = config;
  c.schedule = PowerSchedule::continuous();
  Device dev(c);
  Accelerator acc(dev);
  TailsOptions o = options;
  o.initial_tile = tile;
  // Power may fail after the commit point: reboot replays the log.
  double at = -1.0;
  dev.set_recorder([&](const AccessEvent& ev) {
    if (at >= 0.0 || ev.kind != AccessEvent::Kind::kWrite || ev.region != Region::kNonVolatile) return;
    if (dev.memory().peek(Region::kNonVolatile, ev.addr) == 0) return;
    for (const auto& a : dev.allocations()) {
      if (a.name == "engine.commit_flag" && a.base == ev.addr) at = dev.total_energy_uj();
    }
  });
  const double energy0 = dev.total_energy_uj();
  calibrate(dev, acc, o);
  return at - energy0;
}

// --- inference kernels -------------------------------------------------------

namespace {

class AccelKernel : public StageKernel {
 public:
  AccelKernel(const StageImage& s, Accelerator& acc, std::uint64_t& elements)
      : s_(s), acc_(acc), elements_(elements) {}

 protected:
  // Finalizes `len` 32-bit partials held in Q and stores them at `out`.
  // Right shifts run on the accelerator; left shifts, bias, saturation and
  // ReLU run in software.
  void finish(TaskContext& ctx, int channel, Addr out, std::size_t len) {
    const Stage& st = *s_.stage;
    if (st.shift < 0) acc_.shift_right32(acc_.q(), acc_.q(), len, -st.shift);
    const auto b = static_cast<q15>(ctx.nv_read(bias_addr(s_, channel)));
    for (std::size_t j = 0; j < len; ++j) {
      const acc32 v = join_words(ctx.vread(acc_.q() + 2 * static_cast<Addr>(j)),
                                 ctx.vread(acc_.q() + 2 * static_cast<Addr>(j) + 1));
      if (st.shift > 0) ctx.compute(OpClass::kArith);
      ctx.compute(OpClass::kArith, 2);
      const q15 r = finalize(v, b, st.shift > 0 ? st.shift : 0, st.relu);
      ctx.vwrite(acc_.a() + static_cast<Addr>(j), static_cast<Word>(r));
    }
    acc_.dma(Region::kVolatile, acc_.a(), Region::kNonVolatile, out, len);
  }

  // Scalar result of a dot product in Q, combined with the partial from
  // `src` and stored to `dst` or finalized to the output.
  void scalar_tail(TaskContext& ctx, int pass, int channel, int i, Addr src, Addr dst, bool last, Addr out) {
    const Stage& st = *s_.stage;
    acc32 v = join_words(ctx.vread(acc_.q()), ctx.vread(acc_.q() + 1));
    if (pass > 0) {
      v += join_words(ctx.nv_read(src + 2 * static_cast<Addr>(i)), ctx.nv_read(src + 2 * static_cast<Addr>(i) + 1));
      ctx.compute(OpClass::kArith);
    }
    if (last) {
      const auto b = static_cast<q15>(ctx.nv_read(bias_addr(s_, channel)));
      ctx.compute(OpClass::kArith, 2);
      ctx.nv_write(out, static_cast<Word>(finalize(v, b, st.shift, st.relu)));
    } else {
      ctx.nv_write(dst + 2 * static_cast<Addr>(i), lo_word(v));
      ctx.nv_write(dst + 2 * static_cast<Addr>(i) + 1, hi_word(v));
    }
  }

  void count(std::uint64_t before) { elements_ += acc_.device().counters().accel_ops - before; }

  const StageImage& s_;
  Accelerator& acc_;
  std::uint64_t& elements_;
};

// Conv with KW >= 2: one FIR per nonzero filter row over output-row chunks.
class FirKernel final : public AccelKernel {
 public:
  FirKernel(const StageImage& s, Accelerator& acc, std::uint64_t& elements, std::size_t tile)
      : AccelKernel(s, acc, elements) {
    const auto& w = s.stage->weights.shape;
    ci_ = w[1];
    kh_ = w[2];
    kw_ = w[3];
    h_ = s.stage->in_shape[1];
    wi_ = s.stage->in_shape[2];
    ho_ = s.stage->out_shape[1];
    wo_ = s.stage->out_shape[2];
    chunk_ = static_cast<int>(tile) - kw_ + 1;
    per_row_ = (wo_ + chunk_ - 1) / chunk_;
    rows_.resize(static_cast<std::size_t>(w[0]));
    for (int o = 0; o < w[0]; ++o) {
      for (int r = 0; r < ci_ * kh_; ++r) {
        const std::size_t at = (static_cast<std::size_t>(o) * ci_ * kh_ + r) * kw_;
        const auto& d = s.stage->weights.data;
        // Rows that are entirely zero contribute nothing; zeros inside a
        // row are kept (the filter is dense for the FIR).
        if (std::any_of(d.begin() + static_cast<std::ptrdiff_t>(at), d.begin() + static_cast<std::ptrdiff_t>(at + kw_),
                        [](q15 v) { return v != 0; })) {
          rows_[static_cast<std::size_t>(o)].push_back(r);
        }
      }
      if (rows_[static_cast<std::size_t>(o)].empty()) rows_[static_cast<std::size_t>(o)].push_back(0);
    }
  }

  int groups() const override { return static_cast<int>(rows_.size()); }
  int passes(int g) const override { return static_cast<int>(rows_[static_cast<std::size_t>(g)].size()); }
  int iterations(int, int) const override { return ho_ * per_row_; }

  void iterate(TaskContext& ctx, int g, int pass, int i, Addr src, Addr dst, bool last) override {
    const std::uint64_t before = acc_.device().counters().accel_ops;
    const int row = rows_[static_cast<std::size_t>(g)][static_cast<std::size_t>(pass)];
    const int ci = row / kh_;
    const int ky = row % kh_;
    const int y = i / per_row_;
    const int x0 = (i % per_row_) * chunk_;
    const auto len = static_cast<std::size_t>(std::min(chunk_, wo_ - x0));
    const std::size_t slen = len + static_cast<std::size_t>(kw_) - 1;
    ctx.compute(OpClass::kControl, 2);
    const Addr filt = s_.weights + static_cast<Addr>(((g * ci_ + ci) * kh_ + ky) * kw_);
    acc_.dma(Region::kNonVolatile, filt, Region::kVolatile, acc_.b(), static_cast<std::size_t>(kw_));
    acc_.dma(Region::kNonVolatile, s_.input + static_cast<Addr>((ci * h_ + y + ky) * wi_ + x0), Region::kVolatile,
             acc_.a(), slen);
    acc_.fir(acc_.a(), slen, acc_.b(), static_cast<std::size_t>(kw_), acc_.q());
    const auto out_i = static_cast<Addr>(y * wo_ + x0);
    if (pass > 0) {
      acc_.dma(Region::kNonVolatile, src + 2 * out_i, Region::kVolatile, acc_.p(), 2 * len);
      acc_.add32(acc_.q(), acc_.p(), acc_.q(), len);
    }
    if (last) {
      finish(ctx, g, s_.output + static_cast<Addr>(g * ho_ * wo_) + out_i, len);
    } else {
      acc_.dma(Region::kVolatile, acc_.q(), Region::kNonVolatile, dst + 2 * out_i, 2 * len);
    }
    count(before);
  }

 private:
  int ci_, kh_, kw_, h_, wi_, ho_, wo_;
  int chunk_, per_row_;
  std::vector<std::vector<int>> rows_;
};

// Conv with KW == 1: the taps of one output are strided in memory, so they
// are gathered in software and reduced with the dot product.
class DotConvKernel final : public AccelKernel {
 public:
  DotConvKernel(const StageImage& s, Accelerator& acc, std::uint64_t& elements, std::size_t tile)
      : AccelKernel(s, acc, elements), tile_(static_cast<int>(tile)) {
    const auto& w = s.stage->weights.shape;
    kh_ = w[2];
    taps_ = w[1] * w[2];
    h_ = s.stage->in_shape[1];
    wi_ = s.stage->in_shape[2];
  }

  int groups() const override { return s_.plan.groups; }
  int passes(int) const override { return (taps_ + tile_ - 1) / tile_; }
  int iterations(int, int) const override { return s_.plan.outputs; }

  void iterate(TaskContext& ctx, int g, int pass, int i, Addr src, Addr dst, bool last) override {
    const std::uint64_t before = acc_.device().counters().accel_ops;
    const int k0 = pass * tile_;
    const int len = std::min(tile_, taps_ - k0);
    const Addr base = s_.input + s_.plan.input_base(i);
    for (int k = 0; k < len; ++k) {
      const int ci = (k0 + k) / kh_;
      const int ky = (k0 + k) % kh_;
      ctx.compute(OpClass::kControl);
      ctx.vwrite(acc_.a() + static_cast<Addr>(k), ctx.nv_read(base + static_cast<Addr>((ci * h_ + ky) * wi_)));
    }
    acc_.dma(Region::kNonVolatile, s_.weights + static_cast<Addr>(g * taps_ + k0), Region::kVolatile, acc_.b(),
             static_cast<std::size_t>(len));
    acc_.dot(acc_.a(), acc_.b(), static_cast<std::size_t>(len), acc_.q());
    scalar_tail(ctx, pass, g, i, src, dst, last, s_.output + static_cast<Addr>(g * s_.plan.outputs + i));
    count(before);
  }

 private:
  int tile_, kh_, taps_, h_, wi_;
};

// Dense FC: per row, DMA a chunk of the weight row and of the input and
// reduce with the dot product; passes walk the column chunks.
class DenseKernel final : public AccelKernel {
 public:
  DenseKernel(const StageImage& s, Accelerator& acc, std::uint64_t& elements, std::size_t tile)
      : AccelKernel(s, acc, elements), tile_(static_cast<int>(tile)) {}

  int groups() const override { return 1; }
  int passes(int) const override { return (s_.plan.cols + tile_ - 1) / tile_; }
  int iterations(int, int) const override { return s_.plan.outputs; }

  void iterate(TaskContext& ctx, int, int pass, int i, Addr src, Addr dst, bool last) override {
    const std::uint64_t before = acc_.device().counters().accel_ops;
    const int k0 = pass * tile_;
    const auto len = static_cast<std::size_t>(std::min(tile_, s_.plan.cols - k0));
    ctx.compute(OpClass::kControl);
    acc_.dma(Region::kNonVolatile, s_.input + static_cast<Addr>(k0), Region::kVolatile, acc_.a(), len);
    acc_.dma(Region::kNonVolatile, s_.weights + static_cast<Addr>(i * s_.plan.cols + k0), Region::kVolatile,
             acc_.b(), len);
    acc_.dot(acc_.a(), acc_.b(), len, acc_.q());
    scalar_tail(ctx, pass, i, i, src, dst, last, s_.output + static_cast<Addr>(i));
    count(before);
  }

 private:
  int tile_;
};

}  // namespace

InferenceResult tails_infer(Device& dev, const Network& net, const FixedTensor& input, const TailsOptions& opt) {
  Accelerator acc(dev);
  const CalibrationResult cal = calibrate(dev, acc, opt);
  const auto tile = static_cast<std::size_t>(cal.tile);

  std::vector<std::uint64_t> elements(net.stage_count(), 0);
  const KernelFactory factory = [&](const StageImage& si) -> std::unique_ptr<StageKernel> {
    std::uint64_t& slot = elements[si.index];
    if (si.stage->kind == StageKind::kDense) return std::make_unique<DenseKernel>(si, acc, slot, tile);
    const int kw = si.stage->weights.shape[3];
    if (kw == 1) return std::make_unique<DotConvKernel>(si, acc, slot, tile);
    if (tile >= static_cast<std::size_t>(kw)) return std::make_unique<FirKernel>(si, acc, slot, tile);
    // The tile cannot hold one filter row: this stage runs in software.
    return std::make_unique<SoftwareKernel>(si);
  };
  SonicOptions sopt;
  sopt.engine = opt.engine;
  InferenceResult r = loop_continuation_infer(dev, net, input, factory, sopt, "tails");
  r.stats.tile = cal.tile;
  r.stats.commits += cal.commits;
  for (std::size_t s = 0; s < elements.size() && s < r.stats.stages.size(); ++s) {
    r.stats.stages[s].accel_elements = elements[s];
  }
  return r;
}

}  // namespace imc
