// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

// Interesting messages per Joule: an application-level model of a sensor
// that senses, optionally classifies locally, and radios out readings.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace imc {

/// Energies in Joules; rates in [0, 1].
struct ImpjParams {
  double p = 0.0;
  double t_p = 1.0;
  double t_n = 1.0;
  double e_sense = 0.0;
  double e_comm = 0.0;
  double e_infer = 0.0;

  /// Throws ValidationError.
  void validate() const;
};

/// Every reading is sent.
double impj_baseline(const ImpjParams& params);
/// Only interesting readings are sent, classified for free and perfectly.
double impj_ideal(const ImpjParams& params);
/// Readings classified positive are sent; false positives cost a message too.
double impj_inference(const ImpjParams& params);

/// Wildlife-camera scenario.
struct ImpjPreset {
  std::string name = "wildlife";
  double p = 0.05;
  double e_sense = 0.010;
  double e_comm = 23.0;
  /// Sending only the result instead of the image divides e_comm by this.
  double result_reduction = 98.0;
  double e_infer_naive = 0.198;
  double e_infer_tails = 0.026;

  void validate() const;
  static ImpjPreset wildlife() { return {}; }
  static ImpjPreset load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const ImpjPreset& preset);
void from_json(const nlohmann::json& j, ImpjPreset& preset);

/// One accuracy point (t_p = t_n = accuracy). "full" sends the image,
/// "result" sends only the classification.
struct ImpjRow {
  double accuracy = 0.0;
  double baseline = 0.0;
  double ideal = 0.0;
  double naive_full = 0.0;
  double tails_full = 0.0;
  double ideal_result = 0.0;
  double naive_result = 0.0;
  double tails_result = 0.0;
};

/// Accuracies 0, 1/steps, ..., 1.
std::vector<ImpjRow> impj_sweep(const ImpjPreset& preset, int steps);
std::string impj_csv(const std::vector<ImpjRow>& rows);

/// Headline ratios at accuracy 1.
struct ImpjRatios {
  double ideal_over_baseline = 0.0;
  double tails_full_over_naive_full = 0.0;
  double tails_result_over_baseline = 0.0;
  double tails_over_naive = 0.0;
  double ideal_result_over_tails = 0.0;
};

ImpjRatios impj_ratios(const ImpjPreset& preset);
void to_json(nlohmann::json& j, const ImpjRatios& ratios);

}  // namespace imc
