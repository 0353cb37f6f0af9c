// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Q1.15 fixed-point primitives shared by the reference path, the software
// runtimes and the simulated accelerator. Every kernel in the project goes
// through these functions so that all execution paths round identically.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>

namespace imc {

using q15 = std::int16_t;
/// Wide accumulator for sums of rounded Q1.15 products.
using acc32 = std::int32_t;

inline constexpr q15 kQ15Max = std::numeric_limits<q15>::max();
inline constexpr q15 kQ15Min = std::numeric_limits<q15>::min();

constexpr q15 sat16(std::int64_t v) {
  return static_cast<q15>(std::clamp<std::int64_t>(v, kQ15Min, kQ15Max));
}

/// Arithmetic shift by `shift` bits: left when positive, right when negative.
/// Right shifts round half away from zero.
constexpr std::int64_t shift_round(std::int64_t v, int shift) {
  if (shift >= 0) return v * (std::int64_t{1} << shift);
  const int s = -shift;
  const std::int64_t half = std::int64_t{1} << (s - 1);
  return v >= 0 ? (v + half) >> s : -((-v + half) >> s);
}

/// Saturating Q1.15 product, rounded half away from zero.
constexpr q15 qmul(q15 a, q15 b) {
  return sat16(shift_round(std::int64_t{a} * std::int64_t{b}, -15));
}

/// Turns a layer's wide accumulator into an output activation:
/// scale by the layer shift, add the bias, saturate, then apply ReLU.
constexpr q15 finalize(acc32 acc, q15 bias, int shift, bool relu) {
  q15 v = sat16(shift_round(acc, shift) + bias);
  if (relu && v < 0) v = 0;
  return v;
}

/// Raw Q1.15 value for a real number at a given tensor scale exponent
/// (logical = raw * 2^(scale - 15)), saturating.
q15 quantize(double value, int scale);
double dequantize(q15 raw, int scale);

/// Smallest scale exponent that represents `max_abs` without saturation.
int scale_for(double max_abs);

}  // namespace imc
