#pragma once

// Single-file model container.
//
// Layout: "MVAM", u32 format_version, then sections of
// (4-byte tag, u64 payload length, payload), then a CRC32 of every
// preceding byte. All integers and reals are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mva/detection.hpp"
#include "mva/localization.hpp"
#include "mva/multiway.hpp"
#include "mva/variational.hpp"

namespace mva {

inline constexpr std::uint32_t kArtifactVersion = 1;

struct SeedRecord {
    std::uint64_t run_seed = 0;
    std::uint64_t train_seed = 0;
    std::uint64_t detection_seed = 0;
};

struct ModelArtifact {
    std::uint32_t format_version = kArtifactVersion;
    PreprocessConfig preprocess;
    std::vector<std::string> sensor_labels;
    std::size_t features = 0;
    FeatureScaler scaler;
    VaeParams vae;
    DetectionConfig detection;
    double threshold = 0.0;
    LocalizationConfig localization;
    SensorIdentityBaseline baseline;
    SeedRecord seeds;

    /// Cross-section consistency: labels, widths and scaler sizes agree.
    void validate() const;
};

std::vector<std::uint8_t> serialize_artifact(const ModelArtifact& a);
/// Throws FormatError on bad magic, version mismatch, CRC mismatch,
/// truncation or a missing section.
ModelArtifact deserialize_artifact(std::span<const std::uint8_t> bytes, const std::string& context);

void save_artifact(const std::filesystem::path& path, const ModelArtifact& a);
ModelArtifact load_artifact(const std::filesystem::path& path);

}  // namespace mva
