// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Fixed-point tensors, sparse matrices, the network description and the
// continuous-power reference inference every runtime is checked against.
//
// A network is a list of layers; each layer lowers to one or more primitive
// stages (conv, dense, sparse). Runtimes only ever execute stages.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imc/fixed.hpp"

namespace imc {

std::size_t element_count(const std::vector<int>& shape);

/// Dense Q1.15 tensor; logical value = raw * 2^(scale - 15).
struct FixedTensor {
  std::vector<int> shape;
  std::vector<q15> data;
  int scale = 0;

  FixedTensor() = default;
  /// Zero-filled tensor.
  FixedTensor(std::vector<int> shape, int scale);
  FixedTensor(std::vector<int> shape, std::vector<q15> data, int scale);

  std::size_t size() const { return data.size(); }
  bool operator==(const FixedTensor&) const = default;
};

/// Compressed sparse row matrix of Q1.15 values.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint16_t> offsets;  // rows + 1 entries
  std::vector<std::uint16_t> columns;
  std::vector<q15> values;
  int scale = 0;

  std::size_t nnz() const { return values.size(); }
  /// Throws ValidationError on malformed structure.
  void validate() const;
  FixedTensor densify() const;
  /// Keeps every entry whose raw value is nonzero.
  static SparseMatrix from_dense(const FixedTensor& matrix);

  bool operator==(const SparseMatrix&) const = default;
};

enum class StageKind : std::uint8_t { kConv, kDense, kSparse };

std::string_view to_string(StageKind kind);

/// One primitive loop nest. Conv is a valid (unpadded) stride-1 convolution.
struct Stage {
  StageKind kind = StageKind::kDense;
  FixedTensor weights;   // kConv: [Co, Ci, KH, KW]; kDense: [m, n]
  SparseMatrix sparse;   // kSparse: m x n
  std::vector<q15> bias; // per output channel or row, at out_scale; empty = 0
  int out_scale = 0;
  bool relu = false;

  // Derived by Network::validate.
  std::vector<int> in_shape;
  std::vector<int> out_shape;
  int shift = 0;

  int weight_scale() const { return kind == StageKind::kSparse ? sparse.scale : weights.scale; }
  /// Output channels (conv) or rows (dense/sparse).
  int out_channels() const;
  q15 bias_at(int channel) const { return bias.empty() ? q15{0} : bias[static_cast<std::size_t>(channel)]; }
  std::size_t parameter_bytes() const;
  std::uint64_t operation_count() const;
};

enum class LayerKind : std::uint8_t {
  kConv2d,
  kConvSeparatedTriple,
  kFcDense,
  kFcSparse,
  kFcSeparatedPair,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::kFcDense;
  std::vector<Stage> stages;

  std::size_t parameter_bytes() const;
  std::uint64_t operation_count() const;
};

struct Network {
  std::string name;
  std::vector<int> input_shape;
  int input_scale = 0;
  int class_count = 0;
  std::vector<Layer> layers;

  /// Checks that layer shapes compose and fills every stage's derived fields.
  /// Errors name the offending layer.
  void validate();
  bool validated() const { return validated_; }

  std::size_t parameter_bytes() const;
  std::uint64_t operation_count() const;
  std::size_t stage_count() const;
  std::vector<const Stage*> stages() const;
  std::vector<int> output_shape() const;
  int output_scale() const;

  bool operator==(const Network& other) const;

 private:
  bool validated_ = false;
};

// --- loop plan ---------------------------------------------------------------

struct ConvTap {
  std::uint32_t in_offset;
  std::uint32_t weight_index;
};

/// Iteration structure shared by every runtime: for each group, a sequence of
/// passes; each pass visits every output of the group once and adds one
/// rounded product to it.
struct StagePlan {
  StageKind kind = StageKind::kDense;
  int groups = 0;
  int outputs = 0;  // per group
  int in_width = 0;
  int out_width = 0;
  int cols = 0;     // dense
  std::vector<std::vector<ConvTap>> taps;  // conv, per group, never empty

  int passes(int group) const;
  /// Flat input index of pass-0 tap for output i (conv only).
  std::uint32_t input_base(int i) const {
    return static_cast<std::uint32_t>((i / out_width) * in_width + i % out_width);
  }
  std::uint64_t iterations() const;
};

StagePlan plan_stage(const Stage& stage);

// --- reference path ----------------------------------------------------------

/// Software kernel for one stage; pure.
FixedTensor run_stage(const Stage& stage, const FixedTensor& input);
/// Scores of the final layer.
FixedTensor reference_infer(const Network& net, const FixedTensor& input);
/// Output of every stage in order.
std::vector<FixedTensor> reference_activations(const Network& net, const FixedTensor& input);

/// Lowest index wins ties.
int argmax(std::span<const q15> scores);

// --- datasets and evaluation -------------------------------------------------

struct Sample {
  FixedTensor input;
  int label = 0;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<int> feature_shape;
  int scale = 0;
  int class_count = 0;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;
};

struct Evaluation {
  double accuracy = 0.0;
  double t_p = 0.0;
  double t_n = 0.0;
  std::size_t samples = 0;
  /// confusion[label][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

Evaluation evaluate(const Network& net, const Dataset& data, int interesting_class);

// --- files -------------------------------------------------------------------

std::string serialize_model(const Network& net);
Network parse_model(std::string_view bytes);
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

std::string serialize_dataset(const Dataset& data);
Dataset parse_dataset(std::string_view bytes);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// --- floating-point description ----------------------------------------------

/// Real-valued stage used to build fixtures and compressed variants before
/// quantization. Sparse stages hold a dense matrix with explicit zeros.
struct FloatStage {
  StageKind kind = StageKind::kDense;
  std::vector<int> shape;
  std::vector<double> weights;
  std::vector<double> bias;
  bool relu = false;
};

struct FloatLayer {
  std::string name;
  LayerKind kind = LayerKind::kFcDense;
  std::vector<FloatStage> stages;
};

struct FloatNetwork {
  std::string name;
  std::vector<int> input_shape;
  int class_count = 0;
  std::vector<FloatLayer> layers;
};

std::vector<double> float_stage(const FloatStage& stage, const std::vector<int>& in_shape,
                                const std::vector<double>& input, std::vector<int>* out_shape = nullptr);
std::vector<double> float_infer(const FloatNetwork& net, const std::vector<double>& input);

/// Quantizes weights per tensor and picks each stage's output scale from the
/// largest activation seen on `calibration` inputs.
Network quantize_network(const FloatNetwork& net, int input_scale,
                         const std::vector<std::vector<double>>& calibration);

}  // namespace imc
