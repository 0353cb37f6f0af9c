// Copyright 2026 The imc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace imc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (negative cost, bad rank, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Malformed input: archives, manifests, config files, shape mismatches.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Address outside the bounds of a memory region.
class AddressError : public Error {
 public:
  using Error::Error;
};

/// A task or loop iteration cannot finish within one charge cycle.
class NonTermination : public Error {
 public:
  NonTermination(const std::string& what, std::string task, double cycle_energy_uj)
      : Error(what), task_(std::move(task)), cycle_energy_uj_(cycle_energy_uj) {}

  const std::string& task() const { return task_; }
  /// Energy the stalled task managed to spend in its last charge cycle; its
  /// demand is strictly larger.
  double cycle_energy_uj() const { return cycle_energy_uj_; }

 private:
  std::string task_;
  double cycle_energy_uj_;
};

/// Calibration halved the accelerator tile down to zero.
class UnusableAccelerator : public Error {
 public:
  using Error::Error;
};

/// No evaluated compression configuration fits the memory bound.
class NoFeasibleConfiguration : public Error {
 public:
  using Error::Error;
};

/// Thrown by a metered operation the energy buffer cannot pay for. This is
/// control flow for the simulated device, not an error: the executor catches
/// it, reboots the device and resumes. Deliberately not derived from Error.
struct PowerFailure {};

}  // namespace imc
