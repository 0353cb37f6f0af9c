// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Compression search: magnitude pruning, low-rank separation of fully
// connected layers (truncated SVD) and of convolutions (Tucker via higher
// order orthogonal iteration), a Pareto frontier over accuracy and inference
// energy, and selection of the configuration with the best estimated IMpJ.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "imc/impj.hpp"
#include "imc/model.hpp"

namespace imc {

/// Drops every entry of a 2-D tensor whose logical magnitude is below
/// `threshold`; raw zeros are always dropped.
SparseMatrix prune(const FixedTensor& weights, double threshold);

struct LowRank {
  Eigen::MatrixXd a;  // m x k
  Eigen::MatrixXd b;  // k x n
  Eigen::VectorXd singular_values;
  /// Frobenius norm of W - A B.
  double error = 0.0;
};

/// Best rank-k approximation W ~ A B with the singular values split evenly
/// between the factors.
LowRank svd_separate(const Eigen::MatrixXd& w, int k);

/// Dense third-order tensor, last index fastest.
struct Tensor3 {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<double> v;

  Tensor3() = default;
  explicit Tensor3(std::array<int, 3> d);
  double& operator()(int i, int j, int k) {
    return v[(static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k];
  }
  double operator()(int i, int j, int k) const {
    return v[(static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k];
  }
  double norm() const;
};

struct Tucker {
  Tensor3 core;
  std::array<Eigen::MatrixXd, 3> factors;  // dims[n] x ranks[n], orthonormal columns
  /// 1 - |K - K^| / |K|; 1 for an all-zero tensor.
  double fit = 0.0;
  int iterations = 0;
  /// False when the iteration limit was hit; the best iterate is returned.
  bool converged = false;

  Tensor3 reconstruct() const;
};

/// HOOI from the truncated HOSVD, stopping when the fit improves by less
/// than `tolerance`.
Tucker hooi(const Tensor3& tensor, std::array<int, 3> ranks, double tolerance = 1e-6, int max_iterations = 100);

/// Per-layer compression choice. rank 0 keeps the layer unseparated;
/// prune 0 keeps every weight.
struct LayerOption {
  double prune = 0.0;
  int rank = 0;
  bool operator==(const LayerOption&) const = default;
};

/// FC [m, n] -> separated pair Dense(k x n) then Dense(m x k).
FloatLayer separate_fc(const FloatLayer& layer, int k);
/// Conv [Co, 1, KH, KW] -> three convs [r2, 1, KH, 1], [r2 r3, r2, 1, KW]
/// (block sparse) and [Co, r2 r3, 1, 1]. Ranks are clipped to the kernel.
FloatLayer separate_conv(const FloatLayer& layer, int rank, Tucker* info = nullptr);
/// Applies one option to a base conv or dense layer; other kinds pass
/// through unchanged when the option is the identity.
FloatLayer compress_layer(const FloatLayer& layer, const LayerOption& option);

struct SweepGrid {
  /// Options per base layer name; unlisted layers are left as they are.
  std::map<std::string, std::vector<LayerOption>> layers;
  /// When nonzero, evaluate only this many grid points, drawn with `seed`.
  std::size_t sample = 0;
  std::uint64_t seed = 0;

  static SweepGrid load(const std::filesystem::path& path);
};

struct GenesisOptions {
  /// p, e_sense and e_comm are used; rates and e_infer come from evaluation.
  ImpjParams impj;
  double energy_per_op_j = 1e-6;
  std::size_t memory_bound_bytes = 65536;
  int interesting_class = 1;
  unsigned threads = 0;  // 0 = hardware concurrency
  std::size_t calibration_samples = 64;
};

struct CompressionConfig {
  std::string id;
  std::vector<LayerOption> choices;  // one per base layer
  std::size_t parameter_bytes = 0;
  std::uint64_t operations = 0;
  double accuracy = 0.0;
  double t_p = 0.0;
  double t_n = 0.0;
  double e_infer = 0.0;
  double impj = 0.0;
  bool feasible = false;
  bool frontier = false;
  bool chosen = false;
};

struct SearchResult {
  std::vector<CompressionConfig> configs;  // sorted by id
  int chosen = -1;                         // -1 = nothing feasible
  Network chosen_network;
};

/// Builds and quantizes one configuration. Activation scales are calibrated
/// on the first samples of `data`.
Network build_config(const FloatNetwork& base, const std::vector<LayerOption>& choices, const Dataset& data,
                     std::size_t calibration_samples = 64);

/// Sets `frontier` on every config not dominated in (accuracy, e_infer).
void mark_frontier(std::vector<CompressionConfig>& configs);
/// Feasible argmax of impj; ties go to lower e_infer, then smaller id.
/// Returns -1 when nothing is feasible.
int select_config(const std::vector<CompressionConfig>& configs);

/// Evaluates every grid point; the frontier covers all of them, the choice
/// only feasible ones (ties: lower e_infer, then smaller id).
SearchResult search(const FloatNetwork& base, const SweepGrid& grid, const Dataset& data,
                    const GenesisOptions& options);

/// Real-valued base networks and search options as JSON files.
FloatNetwork parse_float_network(const nlohmann::json& j);
nlohmann::json float_network_json(const FloatNetwork& net);
FloatNetwork load_float_network(const std::filesystem::path& path);
void save_float_network(const FloatNetwork& net, const std::filesystem::path& path);

void to_json(nlohmann::json& j, const GenesisOptions& options);
void from_json(const nlohmann::json& j, GenesisOptions& options);
void to_json(nlohmann::json& j, const LayerOption& option);
void from_json(const nlohmann::json& j, LayerOption& option);
void to_json(nlohmann::json& j, const SweepGrid& grid);

/// config_id,bytes,ops,accuracy,t_p,t_n,e_infer,impj,feasible,chosen,frontier
std::string frontier_csv(const SearchResult& result);

}  // namespace imc
