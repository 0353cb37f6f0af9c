// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Deterministic fixture networks and datasets. Everything here is generated
// from fixed seeds so the files under fixtures/ can be rebuilt bit for bit.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "imc/genesis.hpp"
#include "imc/model.hpp"

namespace imc {

struct Fixture {
  std::string name;
  Network net;
  /// Samples labeled by the network itself.
  Dataset data;
  /// Set when the network was quantized from a real-valued description.
  std::optional<FloatNetwork> float_net;

  const FixedTensor& input() const { return data.samples.at(0).input; }
};

/// Names accepted by make_fixture, in a fixed order.
std::vector<std::string> fixture_names();
/// Throws ValidationError for an unknown name.
Fixture make_fixture(const std::string& name);

/// Single n x n sparse FC layer with roughly `density` nonzeros.
Fixture sparse_fc_fixture(int n, double density = 0.25, std::uint64_t seed = 1);
/// One random conv or dense stage on a random input, for equivalence checks.
/// Shapes are kept small enough to run thousands per second.
Fixture random_stage_fixture(std::uint64_t seed);

/// Base network, labeled dataset, and a 27-point grid for the compression
/// search.
struct GenesisFixture {
  FloatNetwork base;
  Dataset data;
  SweepGrid grid;
  GenesisOptions options;
};
GenesisFixture genesis_fixture();

/// Writes <name>.imcm and <name>.imcd for every fixture plus the genesis
/// base, grid and options into `dir`.
void write_fixtures(const std::filesystem::path& dir);

/// Uniform double in [0, 1) from a 64-bit generator, identical on every
/// standard library.
double unit_uniform(std::uint64_t bits);

}  // namespace imc
