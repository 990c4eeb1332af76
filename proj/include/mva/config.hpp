#pragma once

// Declarative run configuration (TOML subset) with strict schema checks.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mva/detection.hpp"
#include "mva/localization.hpp"
#include "mva/multiway.hpp"
#include "mva/synthetic.hpp"
#include "mva/variational.hpp"

namespace mva {

enum class ConfigSection { preprocess, train, detection, localization, synth };

const char* to_string(ConfigSection s);

struct RunConfig {
    std::uint64_t seed = 7;
    PreprocessConfig preprocess;
    VaeTrainConfig train;
    DetectionConfig detection;
    LocalizationConfig localization;
    SyntheticSpec synth;

    /// Defaults used by the generated example config and the benchmark.
    static RunConfig defaults();

    /// Propagates the run seed into every module seed and copies the
    /// detection sampling settings into localization.
    void finalize();

    /// Throws InvalidConfig naming the first invalid field.
    void validate() const;
};

/// Parses a config document. Every key of each listed section (and the
/// top-level seed) must be present; unknown sections or keys are rejected.
RunConfig parse_config(std::istream& in, const std::vector<ConfigSection>& required, std::string_view source);
RunConfig load_config(const std::filesystem::path& path, const std::vector<ConfigSection>& required);

/// Full document with every key.
std::string render_config(const RunConfig& cfg);

}  // namespace mva
