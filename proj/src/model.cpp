// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "imc/error.hpp"

namespace imc {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(std::max(d, 0));
  return n;
}

FixedTensor::FixedTensor(std::vector<int> s, int sc)
    : shape(std::move(s)), data(element_count(shape), 0), scale(sc) {}

FixedTensor::FixedTensor(std::vector<int> s, std::vector<q15> d, int sc)
    : shape(std::move(s)), data(std::move(d)), scale(sc) {
  if (data.size() != element_count(shape)) {
    throw ValidationError(fmt::format("tensor data has {} values, shape [{}] needs {}", data.size(),
                                      fmt::join(shape, ","), element_count(shape)));
  }
}

// --- SparseMatrix ------------------------------------------------------------

void SparseMatrix::validate() const {
  if (rows < 0 || cols < 0) throw ValidationError("sparse matrix has negative dimensions");
  if (offsets.size() != static_cast<std::size_t>(rows) + 1) {
    throw ValidationError(fmt::format("sparse matrix needs {} row offsets, has {}", rows + 1, offsets.size()));
  }
  if (offsets.front() != 0) throw ValidationError("sparse matrix offsets must start at 0");
  for (int r = 0; r < rows; ++r) {
    if (offsets[r + 1] < offsets[r]) throw ValidationError("sparse matrix offsets must be non-decreasing");
  }
  if (offsets.back() != values.size() || columns.size() != values.size()) {
    throw ValidationError("sparse matrix nnz disagrees with its offsets");
  }
  for (int r = 0; r < rows; ++r) {
    for (std::size_t j = offsets[r]; j < offsets[r + 1]; ++j) {
      if (columns[j] >= cols) throw ValidationError(fmt::format("sparse column {} out of range", columns[j]));
      if (j > offsets[r] && columns[j] <= columns[j - 1]) {
        throw ValidationError(fmt::format("sparse columns in row {} must be strictly increasing", r));
      }
    }
  }
}

FixedTensor SparseMatrix::densify() const {
  FixedTensor out({rows, cols}, scale);
  for (int r = 0; r < rows; ++r) {
    for (std::size_t j = offsets[r]; j < offsets[r + 1]; ++j) {
      out.data[static_cast<std::size_t>(r) * cols + columns[j]] = values[j];
    }
  }
  return out;
}

SparseMatrix SparseMatrix::from_dense(const FixedTensor& m) {
  if (m.shape.size() != 2) throw ContractViolation("from_dense needs a 2-D tensor");
  SparseMatrix s;
  s.rows = m.shape[0];
  s.cols = m.shape[1];
  s.scale = m.scale;
  s.offsets.push_back(0);
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      const q15 v = m.data[static_cast<std::size_t>(r) * s.cols + c];
      if (v != 0) {
        s.columns.push_back(static_cast<std::uint16_t>(c));
        s.values.push_back(v);
      }
    }
    if (s.values.size() > 0xFFFF) throw ValidationError("sparse matrix exceeds 65535 nonzeros");
    s.offsets.push_back(static_cast<std::uint16_t>(s.values.size()));
  }
  return s;
}

// --- Stage / Layer -----------------------------------------------------------

std::string_view to_string(StageKind kind) {
  switch (kind) {
    case StageKind::kConv:
      return "conv";
    case StageKind::kDense:
      return "dense";
    case StageKind::kSparse:
      return "sparse";
  }
  return "?";
}

int Stage::out_channels() const {
  switch (kind) {
    case StageKind::kConv:
    case StageKind::kDense:
      return weights.shape.empty() ? 0 : weights.shape[0];
    case StageKind::kSparse:
      return sparse.rows;
  }
  return 0;
}

std::size_t Stage::parameter_bytes() const {
  switch (kind) {
    case StageKind::kDense:
      return 2 * weights.size();
    case StageKind::kSparse:
      return 4 * sparse.nnz() + 2 * (static_cast<std::size_t>(sparse.rows) + 1);
    case StageKind::kConv: {
      const auto nnz = static_cast<std::size_t>(std::count_if(weights.data.begin(), weights.data.end(),
                                                              [](q15 v) { return v != 0; }));
      return std::min(2 * weights.size(), 4 * nnz);
    }
  }
  return 0;
}

std::uint64_t Stage::operation_count() const {
  switch (kind) {
    case StageKind::kDense:
      return weights.size();
    case StageKind::kSparse:
      return sparse.nnz();
    case StageKind::kConv: {
      const auto nnz = static_cast<std::uint64_t>(std::count_if(weights.data.begin(), weights.data.end(),
                                                                [](q15 v) { return v != 0; }));
      const std::uint64_t outputs = out_shape.size() == 3 ? static_cast<std::uint64_t>(out_shape[1]) * out_shape[2] : 0;
      return nnz * outputs;
    }
  }
  return 0;
}

namespace {

bool same_stage(const Stage& a, const Stage& b) {
  return a.kind == b.kind && a.weights == b.weights && a.sparse == b.sparse && a.bias == b.bias &&
         a.out_scale == b.out_scale && a.relu == b.relu;
}

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kLayerKinds[] = {
    {LayerKind::kConv2d, "conv2d"},
    {LayerKind::kConvSeparatedTriple, "conv1d_separated_triple"},
    {LayerKind::kFcDense, "fc_dense"},
    {LayerKind::kFcSparse, "fc_sparse"},
    {LayerKind::kFcSeparatedPair, "fc_separated_pair"},
};

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& k : kLayerKinds) {
    if (k.kind == kind) return k.name;
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& k : kLayerKinds) {
    if (k.name == name) return k.kind;
  }
  throw ValidationError(fmt::format("unknown layer kind '{}'", name));
}

std::size_t Layer::parameter_bytes() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.parameter_bytes();
  return n;
}

std::uint64_t Layer::operation_count() const {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.operation_count();
  return n;
}

// --- Network -----------------------------------------------------------------

void Network::validate() {
  validated_ = false;
  if (input_shape.empty() || input_shape.size() > 3 ||
      std::any_of(input_shape.begin(), input_shape.end(), [](int d) { return d <= 0; })) {
    throw ValidationError(fmt::format("network '{}': bad input shape [{}]", name, fmt::join(input_shape, ",")));
  }
  std::vector<int> shape = input_shape;
  int scale = input_scale;

  for (auto& layer : layers) {
    auto fail = [&](const std::string& why) {
      return ValidationError(fmt::format("layer '{}': {}", layer.name, why));
    };
    auto expect_kinds = [&](std::initializer_list<StageKind> kinds) {
      if (layer.stages.size() != kinds.size()) {
        throw fail(fmt::format("{} needs {} stages, has {}", to_string(layer.kind), kinds.size(),
                               layer.stages.size()));
      }
      std::size_t i = 0;
      for (StageKind k : kinds) {
        if (layer.stages[i++].kind != k) throw fail(fmt::format("stage {} must be {}", i - 1, to_string(k)));
      }
    };
    switch (layer.kind) {
      case LayerKind::kConv2d:
        expect_kinds({StageKind::kConv});
        break;
      case LayerKind::kConvSeparatedTriple: {
        expect_kinds({StageKind::kConv, StageKind::kConv, StageKind::kConv});
        const auto& a = layer.stages[0].weights.shape;
        const auto& b = layer.stages[1].weights.shape;
        const auto& c = layer.stages[2].weights.shape;
        if (a.size() != 4 || b.size() != 4 || c.size() != 4) throw fail("separated filters must be 4-D");
        if (a[1] != 1 || a[3] != 1) throw fail("first separated filter must be [r, 1, n, 1]");
        if (b[2] != 1) throw fail("second separated filter must be [r, r, 1, k]");
        if (c[2] != 1 || c[3] != 1) throw fail("third separated filter must be [m, r, 1, 1]");
        break;
      }
      case LayerKind::kFcDense:
        expect_kinds({StageKind::kDense});
        break;
      case LayerKind::kFcSparse:
        expect_kinds({StageKind::kSparse});
        break;
      case LayerKind::kFcSeparatedPair:
        expect_kinds({StageKind::kDense, StageKind::kDense});
        break;
    }

    for (auto& st : layer.stages) {
      st.in_shape = shape;
      const std::size_t in_count = element_count(shape);
      switch (st.kind) {
        case StageKind::kConv: {
          const auto& w = st.weights.shape;
          if (w.size() != 4 || std::any_of(w.begin(), w.end(), [](int d) { return d <= 0; })) {
            throw fail(fmt::format("conv weights must be [Co,Ci,KH,KW], got [{}]", fmt::join(w, ",")));
          }
          if (shape.size() != 3) throw fail("conv input must be [C,H,W]");
          if (w[1] != shape[0]) {
            throw fail(fmt::format("conv expects {} input channels, previous layer gives {}", w[1], shape[0]));
          }
          if (w[2] > shape[1] || w[3] > shape[2]) throw fail("conv kernel larger than its input");
          if (static_cast<std::size_t>(w[1]) * w[2] * w[3] > 0xFFFF) throw fail("too many taps per output");
          shape = {w[0], shape[1] - w[2] + 1, shape[2] - w[3] + 1};
          break;
        }
        case StageKind::kDense: {
          const auto& w = st.weights.shape;
          if (w.size() != 2 || w[0] <= 0 || w[1] <= 0) throw fail("dense weights must be [m,n]");
          if (static_cast<std::size_t>(w[1]) != in_count) {
            throw fail(fmt::format("dense layer expects {} inputs, previous layer gives {}", w[1], in_count));
          }
          if (w[1] > 0xFFFF) throw fail("too many inputs per output");
          shape = {w[0]};
          break;
        }
        case StageKind::kSparse:
          try {
            st.sparse.validate();
          } catch (const ValidationError& e) {
            throw fail(e.what());
          }
          if (st.sparse.rows <= 0) throw fail("sparse layer has no rows");
          if (static_cast<std::size_t>(st.sparse.cols) != in_count) {
            throw fail(fmt::format("sparse layer expects {} inputs, previous layer gives {}", st.sparse.cols,
                                   in_count));
          }
          shape = {st.sparse.rows};
          break;
      }
      if (st.kind != StageKind::kSparse && st.weights.data.size() != element_count(st.weights.shape)) {
        throw fail("weight blob size disagrees with its shape");
      }
      if (!st.bias.empty() && st.bias.size() != static_cast<std::size_t>(st.out_channels())) {
        throw fail(fmt::format("bias has {} entries, layer has {} outputs channels", st.bias.size(),
                               st.out_channels()));
      }
      st.out_shape = shape;
      st.shift = scale + st.weight_scale() - st.out_scale;
      if (st.shift > 30 || st.shift < -46) throw fail(fmt::format("scale shift {} out of range", st.shift));
      scale = st.out_scale;
    }
  }
  if (class_count <= 0 || static_cast<std::size_t>(class_count) > element_count(shape)) {
    throw ValidationError(
        fmt::format("network '{}': class count {} does not fit output of {} values", name, class_count,
                    element_count(shape)));
  }
  validated_ = true;
}

std::size_t Network::parameter_bytes() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_bytes();
  return n;
}

std::uint64_t Network::operation_count() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.operation_count();
  return n;
}

std::size_t Network::stage_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.stages.size();
  return n;
}

std::vector<const Stage*> Network::stages() const {
  std::vector<const Stage*> out;
  for (const auto& l : layers) {
    for (const auto& s : l.stages) out.push_back(&s);
  }
  return out;
}

std::vector<int> Network::output_shape() const {
  for (auto l = layers.rbegin(); l != layers.rend(); ++l) {
    if (!l->stages.empty()) return l->stages.back().out_shape;
  }
  return input_shape;
}

int Network::output_scale() const {
  for (auto l = layers.rbegin(); l != layers.rend(); ++l) {
    if (!l->stages.empty()) return l->stages.back().out_scale;
  }
  return input_scale;
}

bool Network::operator==(const Network& o) const {
  if (name != o.name || input_shape != o.input_shape || input_scale != o.input_scale ||
      class_count != o.class_count || layers.size() != o.layers.size()) {
    return false;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = o.layers[i];
    if (a.name != b.name || a.kind != b.kind || a.stages.size() != b.stages.size()) return false;
    for (std::size_t s = 0; s < a.stages.size(); ++s) {
      if (!same_stage(a.stages[s], b.stages[s])) return false;
    }
  }
  return true;
}

// --- loop plan ---------------------------------------------------------------

int StagePlan::passes(int group) const {
  switch (kind) {
    case StageKind::kConv:
      return static_cast<int>(taps[static_cast<std::size_t>(group)].size());
    case StageKind::kDense:
      return cols;
    case StageKind::kSparse:
      return 1;
  }
  return 0;
}

std::uint64_t StagePlan::iterations() const {
  std::uint64_t n = 0;
  for (int g = 0; g < groups; ++g) n += static_cast<std::uint64_t>(passes(g)) * outputs;
  return n;
}

StagePlan plan_stage(const Stage& st) {
  if (st.out_shape.empty()) throw ContractViolation("stage used before Network::validate");
  StagePlan p;
  p.kind = st.kind;
  switch (st.kind) {
    case StageKind::kConv: {
      const auto& w = st.weights.shape;
      const int H = st.in_shape[1];
      const int W = st.in_shape[2];
      p.groups = w[0];
      p.in_width = W;
      p.out_width = st.out_shape[2];
      p.outputs = st.out_shape[1] * st.out_shape[2];
      p.taps.resize(static_cast<std::size_t>(p.groups));
      const std::size_t per_filter = static_cast<std::size_t>(w[1]) * w[2] * w[3];
      for (int o = 0; o < p.groups; ++o) {
        auto& taps = p.taps[static_cast<std::size_t>(o)];
        for (int ci = 0; ci < w[1]; ++ci) {
          for (int ky = 0; ky < w[2]; ++ky) {
            for (int kx = 0; kx < w[3]; ++kx) {
              const std::size_t wi = o * per_filter + (static_cast<std::size_t>(ci) * w[2] + ky) * w[3] + kx;
              if (st.weights.data[wi] != 0) {
                taps.push_back({static_cast<std::uint32_t>((ci * H + ky) * W + kx), static_cast<std::uint32_t>(wi)});
              }
            }
          }
        }
        // An all-zero filter still needs one pass so its outputs get written.
        if (taps.empty()) taps.push_back({0, static_cast<std::uint32_t>(o * per_filter)});
      }
      break;
    }
    case StageKind::kDense:
      p.groups = 1;
      p.outputs = st.weights.shape[0];
      p.cols = st.weights.shape[1];
      break;
    case StageKind::kSparse:
      p.groups = 1;
      p.outputs = st.sparse.rows;
      p.cols = st.sparse.cols;
      break;
  }
  return p;
}

// --- reference path ----------------------------------------------------------

FixedTensor run_stage(const Stage& st, const FixedTensor& in) {
  if (st.out_shape.empty()) throw ContractViolation("stage used before Network::validate");
  if (in.size() != element_count(st.in_shape)) {
    throw ValidationError(fmt::format("stage input has {} values, expected {}", in.size(),
                                      element_count(st.in_shape)));
  }
  FixedTensor out(st.out_shape, st.out_scale);
  switch (st.kind) {
    case StageKind::kConv: {
      const auto& w = st.weights.shape;
      const int H = st.in_shape[1], W = st.in_shape[2];
      const int Ho = st.out_shape[1], Wo = st.out_shape[2];
      for (int o = 0; o < w[0]; ++o) {
        for (int y = 0; y < Ho; ++y) {
          for (int x = 0; x < Wo; ++x) {
            acc32 acc = 0;
            for (int ci = 0; ci < w[1]; ++ci) {
              for (int ky = 0; ky < w[2]; ++ky) {
                for (int kx = 0; kx < w[3]; ++kx) {
                  const q15 a = in.data[(static_cast<std::size_t>(ci) * H + y + ky) * W + x + kx];
                  const q15 b = st.weights.data[((static_cast<std::size_t>(o) * w[1] + ci) * w[2] + ky) * w[3] + kx];
                  acc += qmul(a, b);
                }
              }
            }
            out.data[(static_cast<std::size_t>(o) * Ho + y) * Wo + x] = finalize(acc, st.bias_at(o), st.shift, st.relu);
          }
        }
      }
      break;
    }
    case StageKind::kDense: {
      const int m = st.weights.shape[0], n = st.weights.shape[1];
      for (int r = 0; r < m; ++r) {
        acc32 acc = 0;
        for (int c = 0; c < n; ++c) acc += qmul(in.data[c], st.weights.data[static_cast<std::size_t>(r) * n + c]);
        out.data[r] = finalize(acc, st.bias_at(r), st.shift, st.relu);
      }
      break;
    }
    case StageKind::kSparse: {
      const auto& s = st.sparse;
      for (int r = 0; r < s.rows; ++r) {
        acc32 acc = 0;
        for (std::size_t j = s.offsets[r]; j < s.offsets[r + 1]; ++j) acc += qmul(in.data[s.columns[j]], s.values[j]);
        out.data[r] = finalize(acc, st.bias_at(r), st.shift, st.relu);
      }
      break;
    }
  }
  return out;
}

std::vector<FixedTensor> reference_activations(const Network& net, const FixedTensor& input) {
  if (!net.validated()) throw ContractViolation("reference_infer needs a validated network");
  if (input.size() != element_count(net.input_shape)) {
    throw ValidationError(fmt::format("input has {} values, network '{}' expects {}", input.size(), net.name,
                                      element_count(net.input_shape)));
  }
  std::vector<FixedTensor> acts;
  const FixedTensor* cur = &input;
  for (const Stage* st : net.stages()) {
    acts.push_back(run_stage(*st, *cur));
    cur = &acts.back();
  }
  return acts;
}

FixedTensor reference_infer(const Network& net, const FixedTensor& input) {
  auto acts = reference_activations(net, input);
  if (acts.empty()) {
    FixedTensor pass = input;
    pass.shape = net.input_shape;
    return pass;
  }
  return std::move(acts.back());
}

int argmax(std::span<const q15> scores) {
  if (scores.empty()) throw ContractViolation("argmax of an empty score vector");
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

// --- evaluation --------------------------------------------------------------

Evaluation evaluate(const Network& net, const Dataset& data, int interesting) {
  if (data.samples.empty()) throw ValidationError("cannot evaluate on an empty dataset");
  if (interesting < 0 || interesting >= net.class_count) {
    throw ContractViolation(fmt::format("interesting class {} outside [0, {})", interesting, net.class_count));
  }
  Evaluation ev;
  ev.samples = data.samples.size();
  const auto k = static_cast<std::size_t>(net.class_count);
  ev.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (const auto& s : data.samples) {
    if (s.label < 0 || s.label >= net.class_count) {
      throw ValidationError(fmt::format("label {} outside the network's {} classes", s.label, net.class_count));
    }
    const FixedTensor scores = reference_infer(net, s.input);
    const int pred = argmax(std::span<const q15>(scores.data).first(k));
    ++ev.confusion[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(pred)];
  }
  std::size_t correct = 0, pos = 0, tp = 0, neg = 0, tn = 0;
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t p = 0; p < k; ++p) {
      const std::size_t c = ev.confusion[l][p];
      if (l == p) correct += c;
      if (static_cast<int>(l) == interesting) {
        pos += c;
        if (static_cast<int>(p) == interesting) tp += c;
      } else {
        neg += c;
        if (static_cast<int>(p) != interesting) tn += c;
      }
    }
  }
  if (pos == 0) throw ValidationError(fmt::format("dataset has no samples of interesting class {}", interesting));
  if (neg == 0) throw ValidationError("dataset has no samples outside the interesting class");
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.samples);
  ev.t_p = static_cast<double>(tp) / static_cast<double>(pos);
  ev.t_n = static_cast<double>(tn) / static_cast<double>(neg);
  return ev;
}

// --- floating-point path -----------------------------------------------------

std::vector<double> float_stage(const FloatStage& st, const std::vector<int>& in_shape,
                                const std::vector<double>& in, std::vector<int>* out_shape) {
  std::vector<double> out;
  std::vector<int> shape;
  auto bias = [&](std::size_t c) { return st.bias.empty() ? 0.0 : st.bias[c]; };
  if (st.kind == StageKind::kConv) {
    const auto& w = st.shape;
    const int H = in_shape[1], W = in_shape[2];
    const int Ho = H - w[2] + 1, Wo = W - w[3] + 1;
    shape = {w[0], Ho, Wo};
    out.assign(element_count(shape), 0.0);
    for (int o = 0; o < w[0]; ++o) {
      for (int y = 0; y < Ho; ++y) {
        for (int x = 0; x < Wo; ++x) {
          double acc = 0.0;
          for (int ci = 0; ci < w[1]; ++ci) {
            for (int ky = 0; ky < w[2]; ++ky) {
              for (int kx = 0; kx < w[3]; ++kx) {
                acc += in[(static_cast<std::size_t>(ci) * H + y + ky) * W + x + kx] *
                       st.weights[((static_cast<std::size_t>(o) * w[1] + ci) * w[2] + ky) * w[3] + kx];
              }
            }
          }
          out[(static_cast<std::size_t>(o) * Ho + y) * Wo + x] = acc + bias(static_cast<std::size_t>(o));
        }
      }
    }
  } else {
    const int m = st.shape[0], n = st.shape[1];
    shape = {m};
    out.assign(static_cast<std::size_t>(m), 0.0);
    for (int r = 0; r < m; ++r) {
      double acc = 0.0;
      for (int c = 0; c < n; ++c) acc += in[c] * st.weights[static_cast<std::size_t>(r) * n + c];
      out[r] = acc + bias(static_cast<std::size_t>(r));
    }
  }
  if (st.relu) {
    for (auto& v : out) v = std::max(v, 0.0);
  }
  if (out_shape) *out_shape = shape;
  return out;
}

std::vector<double> float_infer(const FloatNetwork& net, const std::vector<double>& input) {
  std::vector<double> cur = input;
  std::vector<int> shape = net.input_shape;
  for (const auto& l : net.layers) {
    for (const auto& st : l.stages) cur = float_stage(st, shape, cur, &shape);
  }
  return cur;
}

Network quantize_network(const FloatNetwork& fnet, int input_scale,
                         const std::vector<std::vector<double>>& calibration) {
  Network net;
  net.name = fnet.name;
  net.input_shape = fnet.input_shape;
  net.input_scale = input_scale;
  net.class_count = fnet.class_count;

  std::vector<std::vector<double>> acts = calibration;
  std::vector<int> shape = fnet.input_shape;
  for (const auto& fl : fnet.layers) {
    Layer layer;
    layer.name = fl.name;
    layer.kind = fl.kind;
    for (const auto& fs : fl.stages) {
      Stage st;
      st.kind = fs.kind;
      st.relu = fs.relu;
      double wmax = 0.0;
      for (double v : fs.weights) wmax = std::max(wmax, std::abs(v));
      const int wscale = scale_for(wmax);
      FixedTensor w(fs.shape, wscale);
      for (std::size_t i = 0; i < fs.weights.size(); ++i) w.data[i] = quantize(fs.weights[i], wscale);
      if (fs.kind == StageKind::kSparse) {
        st.sparse = SparseMatrix::from_dense(w);
      } else {
        st.weights = std::move(w);
      }

      std::vector<int> next_shape;
      double amax = 0.0;
      for (double b : fs.bias) amax = std::max(amax, std::abs(b));
      for (auto& a : acts) {
        a = float_stage(fs, shape, a, &next_shape);
        for (double v : a) amax = std::max(amax, std::abs(v));
      }
      if (acts.empty()) float_stage(fs, shape, std::vector<double>(element_count(shape), 0.0), &next_shape);
      shape = next_shape;
      st.out_scale = scale_for(amax);
      for (double b : fs.bias) st.bias.push_back(quantize(b, st.out_scale));
      layer.stages.push_back(std::move(st));
    }
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

}  // namespace imc
