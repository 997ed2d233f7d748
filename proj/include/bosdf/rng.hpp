#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bosdf {

using Rng = std::mt19937_64;

/// Independent random streams derived from one master seed.  Each source
/// of randomness in a run gets its own stream id so that paired runs of
/// different methods see the same objective, noise and delays.
enum class Stream : std::uint32_t {
    Objective = 0,
    Noise = 1,
    Delay = 2,
    Sampling = 3,
    Context = 4,
    Test = 99,
};

/// Engine for (seed, stream, index).  `index` is typically the iteration,
/// which keeps per-iteration draws aligned across methods even when a
/// distribution consumes a variable number of engine outputs.
inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(index & 0xffffffffu),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z[i] = normal(rng);
    }
    return z;
}

}  // namespace bosdf
