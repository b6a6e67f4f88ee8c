#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace balancemix {

// Error taxonomy mirrored by the CLI exit codes:
// ConfigError -> 2, IoError -> 3, ContractError -> 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// splitmix64 finalizer. Used to derive independent, reproducible RNG streams
// from (seed, stream-id) pairs so parallel passes stay deterministic.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace balancemix
