#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace collapse {

/// The stochastic decision a uniform draw was consumed by.
enum class Decision : std::uint8_t {
    position,  // fluctuation position
    path,      // reduction to a single entry path
    channel,   // exit particle types
    partner,   // choice among several qualifying partners
    readout,   // final detector reading
};

std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct TraceEntry {
    Decision decision;
    double value;

    friend bool operator==(const TraceEntry &, const TraceEntry &) = default;
};

/// Seeded uniform stream that records every draw it hands out.
///
/// Uniforms are built from the top 53 bits of mt19937_64 output, so a given
/// seed yields the same sequence on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    /// Uniform in [0, 1), logged against `decision`.
    double uniform(Decision decision);

    std::uint64_t seed() const {
        return seed_;
    }
    const std::vector<TraceEntry> &trace() const {
        return trace_;
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::vector<TraceEntry> trace_;
};

/// Independent per-trial seed from (master seed, trial index).
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

}  // namespace collapse
