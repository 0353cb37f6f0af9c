// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "imc/error.hpp"
#include "imc/fixtures.hpp"
#include "imc/model.hpp"

using namespace imc;

namespace {

// Division-based rounding, independent of the shift used by qmul.
q15 qmul_oracle(q15 a, q15 b) {
  const double r = std::round(static_cast<double>(std::int64_t{a} * b) / 32768.0);
  return static_cast<q15>(std::clamp(r, -32768.0, 32767.0));
}

Network dense_net(std::vector<FixedTensor> ws, std::vector<std::vector<q15>> biases, std::vector<bool> relu) {
  Network net;
  net.name = "toy";
  net.input_shape = {ws.front().shape[1]};
  for (std::size_t k = 0; k < ws.size(); ++k) {
    Stage st;
    st.kind = StageKind::kDense;
    st.weights = ws[k];
    st.bias = biases[k];
    st.relu = relu[k];
    net.layers.push_back(Layer{"fc" + std::to_string(k + 1), LayerKind::kFcDense, {st}});
  }
  net.class_count = ws.back().shape[0];
  net.validate();
  return net;
}

std::string replace_manifest(const std::string& archive, const nlohmann::json& manifest) {
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(archive[at + i])) << (8 * i);
    return v;
  };
  const std::uint32_t len = u32(12);
  const std::string text = manifest.dump();
  std::string out = archive.substr(0, 12);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
  out += text;
  out += archive.substr(16 + len);
  return out;
}

}  // namespace

TEST_CASE("qmul examples") {
  CHECK(qmul(16384, 16384) == 8192);
  CHECK(qmul(32767, -32768) == -32767);
  CHECK(qmul(-32768, -32768) == 32767);
  CHECK(qmul(0, -32768) == 0);
  // Round half away from zero: 1 * 16384 / 32768 = 0.5.
  CHECK(qmul(1, 16384) == 1);
  CHECK(qmul(-1, 16384) == -1);
}

TEST_CASE("qmul matches a wide-integer oracle") {
  std::mt19937_64 g(15);
  for (int k = 0; k < 100000; ++k) {
    const auto a = static_cast<q15>(g());
    const auto b = static_cast<q15>(g());
    REQUIRE(qmul(a, b) == qmul_oracle(a, b));
  }
}

TEST_CASE("finalize shifts, biases, saturates and rectifies") {
  CHECK(finalize(100, 0, 0, false) == 100);
  CHECK(finalize(100, 0, -2, false) == 25);
  CHECK(finalize(-6, 0, -2, false) == -2);  // -1.5 rounds away from zero
  CHECK(finalize(3, 1, 2, false) == 13);
  CHECK(finalize(1 << 20, 0, 0, false) == 32767);
  CHECK(finalize(-(1 << 20), 0, 0, false) == -32768);
  CHECK(finalize(-5, 0, 0, true) == 0);
  std::mt19937_64 g(3);
  for (int k = 0; k < 100000; ++k) {
    const auto acc = static_cast<acc32>(static_cast<std::int32_t>(g() % 4000000) - 2000000);
    const auto bias = static_cast<q15>(g());
    const int shift = static_cast<int>(g() % 13) - 8;
    const double scaled = std::round(std::ldexp(static_cast<double>(acc), shift)) + bias;
    double want = std::clamp(scaled, -32768.0, 32767.0);
    REQUIRE(finalize(acc, bias, shift, false) == static_cast<q15>(want));
    REQUIRE(finalize(acc, bias, shift, true) == static_cast<q15>(std::max(want, 0.0)));
  }
}

TEST_CASE("quantize and scale selection") {
  CHECK(quantize(0.5, 0) == 16384);
  CHECK(quantize(1.0, 0) == 32767);
  CHECK(quantize(-1.0, 0) == -32768);
  CHECK(quantize(3.0, 2) == 24576);
  CHECK(dequantize(16384, 1) == doctest::Approx(1.0));
  CHECK(scale_for(3.0) == 2);
  CHECK(scale_for(1.0) == 1);
  CHECK(scale_for(0.9) == 0);
  CHECK(scale_for(0.2) == -2);
  CHECK(scale_for(0.0) == 0);
}

TEST_CASE("sparse matrix structure is validated") {
  SparseMatrix s;
  s.rows = 2;
  s.cols = 3;
  s.offsets = {0, 1, 3};
  s.columns = {2, 0, 1};
  s.values = {5, 6, 7};
  CHECK_NOTHROW(s.validate());
  SparseMatrix dec = s;
  dec.offsets = {0, 2, 1};
  CHECK_THROWS_AS(dec.validate(), ValidationError);
  SparseMatrix order = s;
  order.columns = {2, 1, 0};
  CHECK_THROWS_AS(order.validate(), ValidationError);
  SparseMatrix nnz = s;
  nnz.offsets = {0, 1, 2};
  CHECK_THROWS_AS(nnz.validate(), ValidationError);
  SparseMatrix range = s;
  range.columns = {3, 0, 1};
  CHECK_THROWS_AS(range.validate(), ValidationError);

  const FixedTensor d = s.densify();
  CHECK(d.data == std::vector<q15>{0, 0, 5, 6, 7, 0});
  CHECK(SparseMatrix::from_dense(d) == s);
}

TEST_CASE("sparse matvec equals dense matvec of the densified matrix") {
  std::mt19937_64 g(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(g() % 9), n = 1 + static_cast<int>(g() % 17);
    FixedTensor w({m, n}, 0);
    for (auto& v : w.data) v = g() % 3 == 0 ? static_cast<q15>(g()) : q15{0};
    Stage sp;
    sp.kind = StageKind::kSparse;
    sp.sparse = SparseMatrix::from_dense(w);
    Stage dn;
    dn.kind = StageKind::kDense;
    dn.weights = sp.sparse.densify();
    Network a, b;
    a.input_shape = b.input_shape = {n};
    a.class_count = b.class_count = m;
    a.layers.push_back(Layer{"s", LayerKind::kFcSparse, {sp}});
    b.layers.push_back(Layer{"d", LayerKind::kFcDense, {dn}});
    a.validate();
    b.validate();
    FixedTensor x({n}, 0);
    for (auto& v : x.data) v = static_cast<q15>(g());
    REQUIRE(reference_infer(a, x) == reference_infer(b, x));
  }
}

TEST_CASE("reference inference on hand-set networks") {
  SUBCASE("identity 1x1 convolution") {
    Network net;
    net.name = "id";
    net.input_shape = {1, 2, 3};
    net.class_count = 6;
    Stage st;
    st.kind = StageKind::kConv;
    st.weights = FixedTensor({1, 1, 1, 1}, {32767}, 0);
    net.layers.push_back(Layer{"conv", LayerKind::kConv2d, {st}});
    net.validate();
    const FixedTensor x({1, 2, 3}, {100, -200, 3000, -32768, 32767, 0}, 0);
    const FixedTensor y = reference_infer(net, x);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(y.data[k] - x.data[k]) <= 1);
  }
  SUBCASE("two-layer toy") {
    const Network net = dense_net({FixedTensor({2, 3}, {16384, 16384, 0, 0, 16384, 16384}, 0),
                                   FixedTensor({2, 2}, {32767, 0, -16384, 16384}, 0)},
                                  {{}, {0, 100}}, {true, false});
    const FixedTensor y = reference_infer(net, FixedTensor({3}, {16384, 8192, -16384}, 0));
    // Layer 1: [8192 + 4096, relu(4096 - 8192)] = [12288, 0].
    // Layer 2: [round(12288 * 32767 / 32768), -6144 + 100].
    CHECK(y.data == std::vector<q15>{12288, -6044});
  }
  SUBCASE("pruning at zero changes nothing") {
    const Fixture fx = make_fixture("har_mini");
    Network sparse = fx.net;
    Layer& fc = sparse.layers[1];
    REQUIRE(fc.kind == LayerKind::kFcDense);
    Stage& st = fc.stages[0];
    st.sparse = SparseMatrix::from_dense(st.weights);
    st.weights = FixedTensor{};
    st.kind = StageKind::kSparse;
    fc.kind = LayerKind::kFcSparse;
    sparse.validate();
    for (const auto& s : fx.data.samples) CHECK(reference_infer(sparse, s.input) == reference_infer(fx.net, s.input));
  }
  SUBCASE("input shape mismatch") {
    const Fixture fx = make_fixture("dot20");
    CHECK_THROWS_AS(reference_infer(fx.net, FixedTensor({19}, 0)), ValidationError);
  }
}

TEST_CASE("reference inference is pure") {
  const Fixture fx = make_fixture("mnist_mini");
  const FixedTensor x = fx.input();
  const FixedTensor a = reference_infer(fx.net, x);
  const FixedTensor b = reference_infer(fx.net, x);
  CHECK(a == b);
  CHECK(x == fx.input());
}

TEST_CASE("validation errors name the layer") {
  Fixture fx = make_fixture("har_mini");
  Network net = fx.net;
  net.layers[1].stages[0].weights.shape = {120, 16};
  try {
    net.validate();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("fc1") != std::string::npos);
  }
  Network bias = fx.net;
  bias.layers[2].stages[0].bias.push_back(1);
  CHECK_THROWS_WITH_AS(bias.validate(), doctest::Contains("fc2"), ValidationError);
  Network classes = fx.net;
  classes.class_count = 7;
  CHECK_THROWS_AS(classes.validate(), ValidationError);
}

TEST_CASE("evaluation rates") {
  // Output = input, so the larger feature wins.
  const Network id = dense_net({FixedTensor({2, 2}, {32767, 0, 0, 32767}, 0)}, {{}}, {false});
  Dataset d;
  d.feature_shape = {2};
  d.class_count = 2;
  d.samples = {{FixedTensor({2}, {100, 5}, 0), 0},
               {FixedTensor({2}, {5, 100}, 0), 1},
               {FixedTensor({2}, {300, 5}, 0), 0},
               {FixedTensor({2}, {-5, 100}, 0), 1}};
  const Evaluation perfect = evaluate(id, d, 1);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.t_p == 1.0);
  CHECK(perfect.t_n == 1.0);

  const Network always = dense_net({FixedTensor({2, 2}, {0, 0, 0, 0}, 0)}, {{0, 1000}}, {false});
  const Evaluation c = evaluate(always, d, 1);
  CHECK(c.t_p == 1.0);
  CHECK(c.t_n == 0.0);
  CHECK(c.accuracy == 0.5);

  Dataset empty = d;
  empty.samples.clear();
  CHECK_THROWS_AS(evaluate(id, empty, 1), ValidationError);
  Dataset bad = d;
  bad.samples[0].label = 2;
  CHECK_THROWS_AS(evaluate(id, bad, 1), ValidationError);
}

TEST_CASE("evaluation agrees with a brute-force confusion count") {
  const GenesisFixture gx = genesis_fixture();
  std::vector<std::vector<double>> calib;
  for (std::size_t k = 0; k < 64; ++k) {
    std::vector<double> v;
    for (q15 r : gx.data.samples[k].input.data) v.push_back(dequantize(r, gx.data.scale));
    calib.push_back(v);
  }
  const Network net = quantize_network(gx.base, gx.data.scale, calib);
  std::size_t tp = 0, pos = 0, tn = 0, neg = 0, hit = 0;
  for (const auto& s : gx.data.samples) {
    const FixedTensor y = reference_infer(net, s.input);
    const int pred = y.data[1] > y.data[0] ? 1 : 0;
    hit += pred == s.label;
    if (s.label == 1) {
      ++pos;
      tp += pred == 1;
    } else {
      ++neg;
      tn += pred == 0;
    }
  }
  const Evaluation ev = evaluate(net, gx.data, 1);
  CHECK(ev.t_p == static_cast<double>(tp) / static_cast<double>(pos));
  CHECK(ev.t_n == static_cast<double>(tn) / static_cast<double>(neg));
  CHECK(ev.accuracy == static_cast<double>(hit) / static_cast<double>(gx.data.samples.size()));
}

TEST_CASE("model archives round trip bit for bit") {
  for (const auto& name : fixture_names()) {
    const Fixture fx = make_fixture(name);
    const std::string bytes = serialize_model(fx.net);
    const Network back = parse_model(bytes);
    CHECK_MESSAGE(back == fx.net, name);
    CHECK(serialize_model(back) == bytes);
    CHECK(parse_dataset(serialize_dataset(fx.data)) == fx.data);
  }
}

TEST_CASE("truncated or corrupt archives are rejected") {
  const Fixture fx = make_fixture("okg_mini");
  const std::string bytes = serialize_model(fx.net);
  for (std::size_t cut = 0; cut < bytes.size(); cut += 1 + cut / 7) {
    CHECK_THROWS_AS(parse_model(std::string_view(bytes).substr(0, cut)), ValidationError);
  }
  CHECK_THROWS_AS(parse_model(bytes + "x"), ValidationError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(parse_model(magic), ValidationError);

  const std::string data = serialize_dataset(fx.data);
  for (std::size_t cut = 0; cut < data.size(); cut += 1 + cut / 5) {
    CHECK_THROWS_AS(parse_dataset(std::string_view(data).substr(0, cut)), ValidationError);
  }
}

TEST_CASE("archive with inconsistent layer shapes names the layer") {
  const Fixture fx = make_fixture("har_mini");
  const std::string bytes = serialize_model(fx.net);
  const std::uint32_t len = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[12])) |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[13])) << 8 |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[14])) << 16;
  nlohmann::json manifest = nlohmann::json::parse(bytes.substr(16, len));
  manifest["layers"][1]["stages"][0]["shape"] = {120, 16};
  CHECK_THROWS_WITH_AS(parse_model(replace_manifest(bytes, manifest)), doctest::Contains("fc1"), ValidationError);
  CHECK_NOTHROW(parse_model(replace_manifest(bytes, nlohmann::json::parse(bytes.substr(16, len)))));
}

TEST_CASE("quantized fixtures track their real-valued networks") {
  for (const char* name : {"mnist_mini", "har_mini", "okg_mini", "dense_conv"}) {
    const Fixture fx = make_fixture(name);
    REQUIRE(fx.float_net.has_value());
    for (const auto& s : fx.data.samples) {
      std::vector<double> x;
      for (q15 r : s.input.data) x.push_back(dequantize(r, fx.data.scale));
      const std::vector<double> want = float_infer(*fx.float_net, x);
      const FixedTensor got = reference_infer(fx.net, s.input);
      double peak = 0.0;
      for (double v : want) peak = std::max(peak, std::abs(v));
      for (std::size_t k = 0; k < want.size(); ++k) {
        CHECK(std::abs(dequantize(got.data[k], got.scale) - want[k]) <= 0.05 * peak + 1e-3);
      }
    }
  }
}
