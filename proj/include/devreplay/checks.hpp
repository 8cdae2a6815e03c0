#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace devreplay {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 7;
  int fifo_programs = 1000;
  std::uint64_t duplicate_trials = 1'000'000;
};

// Self-test of the invariants: pack/unpack roundtrip, batch unpack, device vs
// plain-array equivalence, FIFO ring vs bounded list, flattened-gather
// selection, the dueling combine identity, a finite-difference gradient
// check, and the duplicate-sample probability.
std::vector<CheckResult> run_verification(const VerifyOptions& options = {});

// 1 - prod_{i<k} (1 - i/n): probability that k uniform draws from n collide.
double duplicate_probability(std::uint64_t population, std::uint64_t draws);

// Fraction of `trials` with-replacement batches of size `draws` that contain a repeat.
double duplicate_rate_monte_carlo(std::uint64_t population, std::uint64_t draws,
                                  std::uint64_t trials, std::uint64_t seed);

}  // namespace devreplay
