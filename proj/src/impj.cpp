// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "imc/impj.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "imc/error.hpp"

namespace imc {

namespace {

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("{} must be in [0, 1], got {}", name, v));
}

void check_energy(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(fmt::format("{} must be a finite energy >= 0, got {}", name, v));
}

}  // namespace

void ImpjParams::validate() const {
  check_unit(p, "p");
  check_unit(t_p, "t_p");
  check_unit(t_n, "t_n");
  check_energy(e_sense, "e_sense");
  check_energy(e_comm, "e_comm");
  check_energy(e_infer, "e_infer");
}

double impj_baseline(const ImpjParams& x) {
  x.validate();
  const double e = x.e_sense + x.e_comm;
  if (!(e > 0.0)) throw ValidationError("baseline needs e_sense + e_comm > 0");
  return x.p / e;
}

double impj_ideal(const ImpjParams& x) {
  x.validate();
  const double e = x.e_sense + x.p * x.e_comm;
  if (!(e > 0.0)) throw ValidationError("ideal needs e_sense + p * e_comm > 0");
  return x.p / e;
}

double impj_inference(const ImpjParams& x) {
  x.validate();
  const double sent = x.p * x.t_p + (1.0 - x.p) * (1.0 - x.t_n);
  const double e = (x.e_sense + x.e_infer) + sent * x.e_comm;
  if (!(e > 0.0)) throw ValidationError("inference needs a positive energy per reading");
  return x.p * x.t_p / e;
}

void ImpjPreset::validate() const {
  check_unit(p, "p");
  check_energy(e_sense, "e_sense");
  check_energy(e_comm, "e_comm");
  check_energy(e_infer_naive, "e_infer_naive");
  check_energy(e_infer_tails, "e_infer_tails");
  if (!(result_reduction >= 1.0)) throw ValidationError("result_reduction must be >= 1");
}

void to_json(nlohmann::json& j, const ImpjPreset& x) {
  j = nlohmann::json{{"name", x.name},
                     {"p", x.p},
                     {"e_sense", x.e_sense},
                     {"e_comm", x.e_comm},
                     {"result_reduction", x.result_reduction},
                     {"e_infer_naive", x.e_infer_naive},
                     {"e_infer_tails", x.e_infer_tails}};
}

void from_json(const nlohmann::json& j, ImpjPreset& x) {
  static const char* keys[] = {"name", "p", "e_sense", "e_comm", "result_reduction", "e_infer_naive", "e_infer_tails"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(keys), std::end(keys), k) == std::end(keys)) {
      throw ValidationError(fmt::format("unknown impj preset key '{}'", k));
    }
  }
  x = ImpjPreset{};
  x.name = j.value("name", x.name);
  x.p = j.value("p", x.p);
  x.e_sense = j.value("e_sense", x.e_sense);
  x.e_comm = j.value("e_comm", x.e_comm);
  x.result_reduction = j.value("result_reduction", x.result_reduction);
  x.e_infer_naive = j.value("e_infer_naive", x.e_infer_naive);
  x.e_infer_tails = j.value("e_infer_tails", x.e_infer_tails);
}

ImpjPreset ImpjPreset::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open impj preset {}", path.string()));
  ImpjPreset x;
  try {
    x = nlohmann::json::parse(in).get<ImpjPreset>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  x.validate();
  return x;
}

namespace {

ImpjRow row_at(const ImpjPreset& x, double acc) {
  ImpjParams full{x.p, acc, acc, x.e_sense, x.e_comm, 0.0};
  ImpjParams result = full;
  result.e_comm = x.e_comm / x.result_reduction;
  ImpjRow r;
  r.accuracy = acc;
  r.baseline = impj_baseline(full);
  r.ideal = impj_ideal(full);
  r.ideal_result = impj_ideal(result);
  full.e_infer = result.e_infer = x.e_infer_naive;
  r.naive_full = impj_inference(full);
  r.naive_result = impj_inference(result);
  full.e_infer = result.e_infer = x.e_infer_tails;
  r.tails_full = impj_inference(full);
  r.tails_result = impj_inference(result);
  return r;
}

}  // namespace

std::vector<ImpjRow> impj_sweep(const ImpjPreset& x, int steps) {
  x.validate();
  if (steps < 1) throw ValidationError("sweep needs at least one step");
  std::vector<ImpjRow> rows;
  for (int k = 0; k <= steps; ++k) rows.push_back(row_at(x, static_cast<double>(k) / steps));
  return rows;
}

std::string impj_csv(const std::vector<ImpjRow>& rows) {
  std::string s = "accuracy,baseline,ideal,naive_full,tails_full,ideal_result,naive_result,tails_result\n";
  for (const auto& r : rows) {
    s += fmt::format("{:.4f},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.accuracy, r.baseline, r.ideal,
                     r.naive_full, r.tails_full, r.ideal_result, r.naive_result, r.tails_result);
  }
  return s;
}

ImpjRatios impj_ratios(const ImpjPreset& x) {
  x.validate();
  const ImpjRow r = row_at(x, 1.0);
  ImpjRatios q;
  q.ideal_over_baseline = r.ideal / r.baseline;
  q.tails_full_over_naive_full = r.tails_full / r.naive_full;
  q.tails_result_over_baseline = r.tails_result / r.baseline;
  q.tails_over_naive = r.tails_result / r.naive_result;
  q.ideal_result_over_tails = r.ideal_result / r.tails_result;
  return q;
}

void to_json(nlohmann::json& j, const ImpjRatios& q) {
  j = nlohmann::json{{"ideal_over_baseline", q.ideal_over_baseline},
                     {"tails_full_over_naive_full", q.tails_full_over_naive_full},
                     {"tails_result_over_baseline", q.tails_result_over_baseline},
                     {"tails_over_naive", q.tails_over_naive},
                     {"ideal_result_over_tails", q.ideal_result_over_tails}};
}

}  // namespace imc
