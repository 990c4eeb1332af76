#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mva {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad input or configuration, detected before any computation is committed.
/// The CLI maps these to exit status 2.
class ValidationError : public Error {
  public:
    using Error::Error;
};

class InvalidInput : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class InvalidConfig : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class DimensionMismatch : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

/// Failures while running: corrupt files, diverging training, bad models.
/// The CLI maps these to exit status 3.
class RuntimeFailure : public Error {
  public:
    using Error::Error;
};

class InvalidModel : public RuntimeFailure {
  public:
    using RuntimeFailure::RuntimeFailure;
};

class FormatError : public RuntimeFailure {
  public:
    using RuntimeFailure::RuntimeFailure;
};

class IoError : public RuntimeFailure {
  public:
    using RuntimeFailure::RuntimeFailure;
};

class TrainingDiverged : public RuntimeFailure {
  public:
    using RuntimeFailure::RuntimeFailure;
};

/// splitmix64 finalizer; used to derive independent streams from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with platform-independent sampling.
///
/// std::normal_distribution and std::shuffle are implementation-defined, so
/// the transforms are done here on top of the fully specified mt19937_64 to
/// keep seeded runs reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in the open interval (0, 1).
    double uniform();
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    template <class Range>
    void shuffle(Range& r) {
        const auto n = static_cast<std::uint64_t>(r.size());
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::swap(r[i - 1], r[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mva
