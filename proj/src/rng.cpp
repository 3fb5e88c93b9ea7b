#include "collapse/rng.hpp"

#include <array>
#include <string>

#include "collapse/errors.hpp"

namespace collapse {

namespace {

constexpr std::array<std::string_view, 5> kDecisionNames{"position", "path", "channel", "partner", "readout"};

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string_view to_string(Decision d) {
    return kDecisionNames[static_cast<std::size_t>(d)];
}

Decision decision_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kDecisionNames.size(); ++i) {
        if (kDecisionNames[i] == s) {
            return static_cast<Decision>(i);
        }
    }
    throw ValidationError("unknown decision kind '" + std::string(s) + "'");
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {
}

double Rng::uniform(Decision decision) {
    double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    trace_.push_back({decision, u});
    return u;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace collapse
