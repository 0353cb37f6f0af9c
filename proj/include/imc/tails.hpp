// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Simulated vector accelerator with a DMA engine, in the style of a
// low-energy DSP coprocessor: it only sees the small volatile operating
// buffer, supports FIR convolution, 32-bit vector add, rounded right shift
// and dot product, and has no left shift. Inference on it runs under loop
// continuation with tiles sized by a one-time calibration that halves the
// tile until one DMA-in, FIR, DMA-out round trip fits in a charge cycle.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "imc/sonic.hpp"

namespace imc {

struct TailsOptions {
  EngineOptions engine;
  int initial_tile = 256;
  /// Filter length used by the calibration round trip.
  int calib_taps = 8;
};

class Accelerator {
 public:
  /// Claims the free volatile words beyond `reserve_words` as the operating
  /// buffer, split into A and B (capacity words each) and P and Q (twice
  /// capacity each, for 32-bit elements).
  explicit Accelerator(Device& device, std::size_t reserve_words = 64);

  /// Elements per invocation the operating buffer can hold.
  std::size_t capacity() const { return capacity_; }
  Addr a() const { return base_; }
  Addr b() const { return base_ + static_cast<Addr>(capacity_); }
  Addr p() const { return base_ + static_cast<Addr>(2 * capacity_); }
  Addr q() const { return base_ + static_cast<Addr>(4 * capacity_); }

  /// Copies `words` words; the transfer is metered per word plus setup and
  /// may be cut short by a power failure.
  void dma(Region src_region, Addr src, Region dst_region, Addr dst, std::size_t words);
  /// out[j] = sum_k qmul(signal[j + k], filter[k]) as 32-bit elements.
  void fir(Addr signal, std::size_t signal_len, Addr filter, std::size_t taps, Addr out);
  void add32(Addr a, Addr b, Addr out, std::size_t n);
  /// Rounded arithmetic right shift of 32-bit elements by `bits` > 0.
  void shift_right32(Addr in, Addr out, std::size_t n, int bits);
  void dot(Addr a, Addr b, std::size_t n, Addr out);

  /// Host convenience for tests: loads the operands unmetered, runs one FIR
  /// invocation and returns the outputs.
  std::vector<acc32> run_fir(std::span<const q15> signal, std::span<const q15> filter);

  Device& device() { return dev_; }

 private:
  void invoke(std::size_t elements);
  void check(Addr addr, std::size_t words) const;
  q15 load16(Addr addr);
  acc32 load32(Addr addr);
  void store32(Addr addr, acc32 v);

  Device& dev_;
  Addr base_ = 0;
  std::size_t capacity_ = 0;
};

/// Non-volatile calibration state.
struct CalibrationState {
  Addr next_tile = 0;
  Addr result = 0;
  Addr valid = 0;
  Addr scratch = 0;

  static CalibrationState allocate(Device& device, std::size_t capacity, int calib_taps);
  /// Manual invalidation: the next calibrate() starts over from `initial`.
  void invalidate(Device& device, int initial_tile) const;
};

struct CalibrationResult {
  int tile = 0;
  std::uint64_t reboots = 0;
  double energy_uj = 0.0;
  std::uint64_t commits = 0;
};

/// Halves the tile from min(initial, capacity) until one worst-case round
/// trip completes within a charge cycle. Throws UnusableAccelerator when the
/// tile reaches zero.
CalibrationResult calibrate(Device& device, Accelerator& accel, const TailsOptions& options = {});

/// Smallest per-cycle budget under which a first attempt at `tile` is
/// accepted: energy from power-on to the calibration commit point, measured
/// on a continuously powered device built from `config`.
double calibration_energy(const DeviceConfig& config, int tile, const TailsOptions& options = {});

InferenceResult tails_infer(Device& device, const Network& net, const FixedTensor& input,
                            const TailsOptions& options = {});

}  // namespace imc
