// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/fixed.hpp"

#include <cmath>

namespace imc {

q15 quantize(double value, int scale) {
  const double raw = std::round(std::ldexp(value, 15 - scale));
  if (raw >= kQ15Max) return kQ15Max;
  if (raw <= kQ15Min) return kQ15Min;
  return static_cast<q15>(raw);
}

double dequantize(q15 raw, int scale) { return std::ldexp(static_cast<double>(raw), scale - 15); }

int scale_for(double max_abs) {
  if (!(max_abs > 0.0) || !std::isfinite(max_abs)) return 0;
  // Largest logical value at scale s is (2^15 - 1) * 2^(s - 15).
  int s = static_cast<int>(std::ceil(std::log2(max_abs)));
  while (max_abs > dequantize(kQ15Max, s)) ++s;
  while (max_abs <= dequantize(kQ15Max, s - 1)) --s;
  return s;
}

}  // namespace imc
