// Copyright 2026 The sess-forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sess {

/// Seeded random stream. Every stochastic operation takes one of these
/// explicitly so that runs are reproducible from (seed, keys) alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Stream derived deterministically from a root seed and a list of keys,
  /// e.g. derive(seed, {step, slot}).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi].
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform integer in [lo, hi].
  int integer(int lo, int hi);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sess
