#pragma once

#include <cstdint>
#include <random>

namespace msbdl::detail {

// Independent generator per (seed, stream, index) triple; used so that
// sample i of a generator or the batch sampler of a run never depends on how
// much randomness other consumers drew.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Stream identifiers.
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamBatches = 2;
inline constexpr std::uint64_t kStreamSamples = 3;
inline constexpr std::uint64_t kStreamDictionaries = 4;
inline constexpr std::uint64_t kStreamTrials = 5;

}  // namespace msbdl::detail
