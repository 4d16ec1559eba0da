#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cbdae {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes disagree.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// A documented precondition was violated.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// An index or history request falls outside the available data.
class RangeError : public Error {
public:
    explicit RangeError(const std::string& msg) : Error(msg) {}
};

// A computation produced non-finite values or an unusable matrix.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Deterministic stream derivation: one master seed fans out to independent
// generators keyed by purpose, so adding a consumer never shifts another
// consumer's draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ seed;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    }
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view key) {
    return std::mt19937_64(derive_seed(seed, key));
}

}  // namespace cbdae
