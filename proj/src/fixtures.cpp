// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"

namespace imc {

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

namespace {

struct Rng {
  std::mt19937_64 g;
  explicit Rng(std::uint64_t seed) : g(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_uniform(g()); }
  int below(int n) { return static_cast<int>(g() % static_cast<std::uint64_t>(n)); }
  int between(int lo, int hi) { return lo + below(hi - lo + 1); }
};

std::vector<double> random_values(Rng& r, std::size_t n, double amp) {
  std::vector<double> v(n);
  for (auto& x : v) x = r.uniform(-amp, amp);
  return v;
}

FloatStage conv_stage(Rng& r, int co, int ci, int kh, int kw, bool relu, double zero_fraction = 0.0) {
  FloatStage st{StageKind::kConv, {co, ci, kh, kw}, {}, {}, relu};
  const double amp = 1.5 / std::sqrt(static_cast<double>(ci * kh * kw));
  st.weights = random_values(r, static_cast<std::size_t>(co) * ci * kh * kw, amp);
  for (auto& w : st.weights) {
    if (r.uniform(0.0, 1.0) < zero_fraction) w = 0.0;
  }
  st.bias = random_values(r, static_cast<std::size_t>(co), 0.1);
  return st;
}

FloatStage dense_stage(Rng& r, int m, int n, bool relu, double zero_fraction = 0.0) {
  FloatStage st{StageKind::kDense, {m, n}, {}, {}, relu};
  st.weights = random_values(r, static_cast<std::size_t>(m) * n, 1.5 / std::sqrt(static_cast<double>(n)));
  for (auto& w : st.weights) {
    if (r.uniform(0.0, 1.0) < zero_fraction) w = 0.0;
  }
  st.bias = random_values(r, static_cast<std::size_t>(m), 0.1);
  return st;
}

FloatLayer single(std::string name, LayerKind kind, FloatStage st) { return FloatLayer{std::move(name), kind, {std::move(st)}}; }

FixedTensor random_input(Rng& r, const std::vector<int>& shape, int scale) {
  FixedTensor x(shape, scale);
  const double amp = std::ldexp(1.0, scale) * 0.999;
  for (auto& v : x.data) v = quantize(r.uniform(-amp, amp), scale);
  return x;
}

std::vector<double> as_real(const FixedTensor& x) {
  std::vector<double> v(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) v[k] = dequantize(x.data[k], x.scale);
  return v;
}

Dataset self_labeled(const Network& net, std::vector<FixedTensor> inputs) {
  Dataset d;
  d.feature_shape = net.input_shape;
  d.scale = net.input_scale;
  d.class_count = net.class_count;
  for (auto& x : inputs) {
    const FixedTensor y = reference_infer(net, x);
    const int label = argmax(std::span<const q15>(y.data).first(static_cast<std::size_t>(net.class_count)));
    d.samples.push_back(Sample{std::move(x), label});
  }
  return d;
}

Fixture from_float(FloatNetwork f, std::uint64_t seed, int samples) {
  Rng r(seed ^ 0x5eedULL);
  std::vector<FixedTensor> inputs;
  std::vector<std::vector<double>> calib;
  for (int s = 0; s < samples; ++s) {
    inputs.push_back(random_input(r, f.input_shape, 0));
    calib.push_back(as_real(inputs.back()));
  }
  Fixture fx;
  fx.name = f.name;
  fx.net = quantize_network(f, 0, calib);
  fx.data = self_labeled(fx.net, std::move(inputs));
  fx.float_net = std::move(f);
  return fx;
}

Fixture tiny_conv1d() {
  Network net;
  net.name = "tiny_conv1d";
  net.input_shape = {1, 1, 3};
  net.input_scale = 3;
  net.class_count = 2;
  Stage st;
  st.kind = StageKind::kConv;
  st.weights = FixedTensor({1, 1, 1, 2}, {32767, 32767}, 0);
  st.out_scale = 3;
  net.layers.push_back(Layer{"conv", LayerKind::kConv2d, {st}});
  net.validate();
  Fixture fx;
  fx.name = net.name;
  fx.data = self_labeled(net, {FixedTensor({1, 1, 3}, {4096, 8192, 12288}, 3)});
  fx.net = std::move(net);
  return fx;
}

Fixture dot20() {
  Rng r(20);
  FloatNetwork f{"dot20", {20}, 1, {}};
  f.layers.push_back(single("fc", LayerKind::kFcDense, dense_stage(r, 1, 20, false)));
  return from_float(std::move(f), 20, 4);
}

Fixture mnist_mini() {
  Rng r(1998);
  FloatNetwork f{"mnist_mini", {1, 12, 12}, 10, {}};
  f.layers.push_back(separate_conv(single("conv1", LayerKind::kConv2d, conv_stage(r, 4, 1, 5, 5, true)), 2));
  FloatStage c2 = conv_stage(r, 6, 4, 3, 3, true, 0.5);
  f.layers.push_back(single("conv2", LayerKind::kConv2d, std::move(c2)));
  f.layers.push_back(separate_fc(single("fc1", LayerKind::kFcDense, dense_stage(r, 24, 216, true)), 6));
  FloatStage s = dense_stage(r, 16, 24, true, 0.6);
  s.kind = StageKind::kSparse;
  f.layers.push_back(single("fc2", LayerKind::kFcSparse, std::move(s)));
  f.layers.push_back(single("fc3", LayerKind::kFcDense, dense_stage(r, 10, 16, false)));
  return from_float(std::move(f), 1998, 4);
}

Fixture har_mini() {
  Rng r(2012);
  FloatNetwork f{"har_mini", {3, 1, 24}, 6, {}};
  f.layers.push_back(single("conv1", LayerKind::kConv2d, conv_stage(r, 6, 3, 1, 5, true)));
  f.layers.push_back(single("fc1", LayerKind::kFcDense, dense_stage(r, 16, 120, true)));
  f.layers.push_back(single("fc2", LayerKind::kFcDense, dense_stage(r, 6, 16, false)));
  return from_float(std::move(f), 2012, 4);
}

Fixture okg_mini() {
  Rng r(2017);
  FloatNetwork f{"okg_mini", {1, 10, 10}, 12, {}};
  f.layers.push_back(single("conv1", LayerKind::kConv2d, conv_stage(r, 4, 1, 3, 3, true)));
  FloatStage s = dense_stage(r, 24, 256, true, 0.75);
  s.kind = StageKind::kSparse;
  f.layers.push_back(single("fc1", LayerKind::kFcSparse, std::move(s)));
  f.layers.push_back(single("fc2", LayerKind::kFcDense, dense_stage(r, 12, 24, false)));
  return from_float(std::move(f), 2017, 4);
}

Fixture dense_conv() {
  Rng r(77);
  FloatNetwork f{"dense_conv", {2, 10, 10}, 4, {}};
  f.layers.push_back(single("conv", LayerKind::kConv2d, conv_stage(r, 4, 2, 3, 3, true)));
  return from_float(std::move(f), 77, 4);
}

}  // namespace

std::vector<std::string> fixture_names() {
  return {"tiny_conv1d", "dot20", "mnist_mini", "har_mini", "okg_mini", "dense_conv"};
}

Fixture make_fixture(const std::string& name) {
  if (name == "tiny_conv1d") return tiny_conv1d();
  if (name == "dot20") return dot20();
  if (name == "mnist_mini") return mnist_mini();
  if (name == "har_mini") return har_mini();
  if (name == "okg_mini") return okg_mini();
  if (name == "dense_conv") return dense_conv();
  throw ValidationError(fmt::format("unknown fixture '{}'", name));
}

Fixture sparse_fc_fixture(int n, double density, std::uint64_t seed) {
  if (n < 1 || n > 255) throw ContractViolation("sparse fixture size must be in [1, 255]");
  Rng r(seed);
  FloatNetwork f{fmt::format("sparse_fc{}", n), {n}, std::min(n, 10), {}};
  FloatStage s = dense_stage(r, n, n, false, 1.0 - density);
  s.kind = StageKind::kSparse;
  f.layers.push_back(single("fc", LayerKind::kFcSparse, std::move(s)));
  return from_float(std::move(f), seed, 2);
}

Fixture random_stage_fixture(std::uint64_t seed) {
  Rng r(seed);
  Network net;
  net.name = fmt::format("random{}", seed);
  net.input_scale = r.between(0, 3);
  Stage st;
  const int kind = r.below(3);
  const int wscale = r.between(0, 2);
  auto raw = [&] {
    // Mostly moderate values with occasional extremes to exercise saturation.
    const int pick = r.below(16);
    if (pick == 0) return q15{32767};
    if (pick == 1) return q15{-32768};
    if (pick == 2) return q15{0};
    return static_cast<q15>(r.between(-32768, 32767));
  };
  if (kind == 0) {
    const int ci = r.between(1, 2), h = r.between(1, 6), w = r.between(1, 7);
    const int kh = r.between(1, h), kw = r.between(1, w), co = r.between(1, 3);
    net.input_shape = {ci, h, w};
    st.kind = StageKind::kConv;
    st.weights = FixedTensor({co, ci, kh, kw}, wscale);
    for (auto& v : st.weights.data) v = raw();
  } else {
    const int m = r.between(1, 6), n = r.between(1, 12);
    net.input_shape = {n};
    FixedTensor w({m, n}, wscale);
    for (auto& v : w.data) v = raw();
    if (kind == 1) {
      st.kind = StageKind::kDense;
      st.weights = std::move(w);
    } else {
      for (auto& v : w.data) {
        if (r.below(3) == 0) v = 0;
      }
      st.kind = StageKind::kSparse;
      st.sparse = SparseMatrix::from_dense(w);
    }
  }
  st.out_scale = r.between(0, 6);
  st.relu = r.below(2) == 0;
  if (r.below(2) == 0) {
    const int channels = st.kind == StageKind::kConv ? st.weights.shape[0] : (kind == 1 ? st.weights.shape[0] : st.sparse.rows);
    for (int c = 0; c < channels; ++c) st.bias.push_back(raw());
  }
  net.layers.push_back(Layer{"stage", st.kind == StageKind::kConv ? LayerKind::kConv2d
                                       : st.kind == StageKind::kDense ? LayerKind::kFcDense
                                                                      : LayerKind::kFcSparse,
                             {st}});
  net.class_count = 1;
  net.validate();
  FixedTensor x(net.input_shape, net.input_scale);
  for (auto& v : x.data) v = raw();
  Fixture fx;
  fx.name = net.name;
  fx.data = self_labeled(net, {std::move(x)});
  fx.net = std::move(net);
  return fx;
}

GenesisFixture genesis_fixture() {
  Rng r(4242);
  GenesisFixture gx;
  FloatNetwork& f = gx.base;
  f = FloatNetwork{"genesis_base", {1, 8, 8}, 2, {}};
  f.layers.push_back(single("conv", LayerKind::kConv2d, conv_stage(r, 4, 1, 3, 3, true)));
  f.layers.push_back(single("fc1", LayerKind::kFcDense, dense_stage(r, 16, 144, true)));
  f.layers.push_back(single("fc2", LayerKind::kFcDense, dense_stage(r, 2, 16, false)));

  // Inputs, then shift the class-1 bias so about a quarter of them are
  // labeled interesting.
  std::vector<std::vector<double>> xs;
  std::vector<FixedTensor> inputs;
  for (int s = 0; s < 240; ++s) {
    inputs.push_back(random_input(r, f.input_shape, 0));
    xs.push_back(as_real(inputs.back()));
  }
  std::vector<double> margin;
  for (const auto& x : xs) {
    const auto y = float_infer(f, x);
    margin.push_back(y[1] - y[0]);
  }
  std::vector<double> sorted = margin;
  std::sort(sorted.begin(), sorted.end());
  f.layers[2].stages[0].bias[1] -= sorted[sorted.size() * 3 / 4];

  Dataset& d = gx.data;
  d.feature_shape = f.input_shape;
  d.scale = 0;
  d.class_count = 2;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const auto y = float_infer(f, xs[s]);
    int label = y[1] > y[0] ? 1 : 0;
    if (r.uniform(0.0, 1.0) < 0.05) label = 1 - label;
    d.samples.push_back(Sample{inputs[s], label});
  }

  auto quantile = [](std::vector<double> w, double q) {
    for (auto& v : w) v = std::abs(v);
    std::sort(w.begin(), w.end());
    return w[static_cast<std::size_t>(q * static_cast<double>(w.size() - 1))];
  };
  const auto& conv_w = f.layers[0].stages[0].weights;
  const auto& fc1_w = f.layers[1].stages[0].weights;
  const auto& fc2_w = f.layers[2].stages[0].weights;
  gx.grid.layers["conv"] = {LayerOption{}, LayerOption{quantile(conv_w, 0.5), 0}, LayerOption{0.0, 1}};
  gx.grid.layers["fc1"] = {LayerOption{}, LayerOption{quantile(fc1_w, 0.75), 0}, LayerOption{0.0, 4}};
  gx.grid.layers["fc2"] = {LayerOption{}, LayerOption{quantile(fc2_w, 0.5), 0}, LayerOption{0.0, 1}};

  gx.options.impj = ImpjParams{0.05, 1.0, 1.0, 0.010, 23.0 / 98.0, 0.0};
  gx.options.energy_per_op_j = 1e-5;
  gx.options.memory_bound_bytes = 3000;
  gx.options.interesting_class = 1;
  gx.options.threads = 1;
  return gx;
}

void write_fixtures(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& name : fixture_names()) {
    const Fixture fx = make_fixture(name);
    save_model(fx.net, dir / (name + ".imcm"));
    save_dataset(fx.data, dir / (name + ".imcd"));
  }
  for (int n : {8, 32, 128}) {
    const Fixture fx = sparse_fc_fixture(n);
    save_model(fx.net, dir / (fx.name + ".imcm"));
    save_dataset(fx.data, dir / (fx.name + ".imcd"));
  }
  const GenesisFixture gx = genesis_fixture();
  save_float_network(gx.base, dir / "genesis_base.json");
  save_dataset(gx.data, dir / "genesis_data.imcd");
  auto dump = [&](const nlohmann::json& j, const char* file) {
    std::ofstream out(dir / file);
    if (!out) throw ValidationError(fmt::format("cannot write {}", (dir / file).string()));
    out << j.dump(2) << '\n';
  };
  dump(nlohmann::json(gx.grid), "genesis_grid.json");
  dump(nlohmann::json(gx.options), "genesis_options.json");
}

}  // namespace imc
