#pragma once

// Seeded multi-sensor vibration generator with known damage ground truth.
//
// Every sensor records the same structural modes (sinusoids at integer DFT
// bins, sensor-specific phase, random per-event phase) plus white noise.
// Damage at a sensor shifts its modal frequencies by the fraction
// `magnitude` and scales their amplitudes by (1 + magnitude), the signature
// an added mass or a loosened joint leaves in the spectrum.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mva/multiway.hpp"

namespace mva {

struct Mode {
    double bin = 0.0;
    double amplitude = 0.0;
};

struct SyntheticSpec {
    std::size_t n_sensors = 8;
    std::size_t signal_length = 256;
    std::size_t n_events = 200;
    std::vector<Mode> base_modes{{3.0, 1.0}, {8.0, 0.8}, {14.0, 0.6}};
    double noise_std = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DamageSpec {
    std::vector<std::size_t> target_sensors;
    double magnitude = 0.0;
    std::size_t n_events = 0;
    /// Optional per-target multiplier on magnitude (same length as
    /// target_sensors); empty means 1 for every target.
    std::vector<double> site_scale;

    double magnitude_at(std::size_t target_position) const;
    void validate(const SyntheticSpec& spec) const;
};

struct SyntheticDataset {
    RawDataset raw;
    /// Ground truth per event: true when any sensor carries damage > 0.
    std::vector<bool> damaged;
    std::vector<std::size_t> target_sensors;
};

std::vector<std::string> default_sensor_labels(std::size_t n);

/// Healthy data when `damage` is empty (spec.n_events events); otherwise
/// damage.n_events events with the damage applied.
SyntheticDataset generate(const SyntheticSpec& spec, const std::optional<DamageSpec>& damage = std::nullopt);

struct Scenario {
    std::string label;
    DamageSpec damage;
    SyntheticDataset data;
};

struct BenchmarkSuite {
    SyntheticSpec spec;
    SyntheticDataset train;
    std::vector<Scenario> tests;
};

/// Healthy training set plus four test scenarios: held-out healthy
/// (magnitude 0), "light" (0.15, one site), "severe" (0.4, another site) and
/// "two-site" (0.2 and 0.4 at two further sites).
BenchmarkSuite benchmark_suite(std::uint64_t seed);
BenchmarkSuite benchmark_suite(const SyntheticSpec& base);

/// Ground truth rows for a sequence of scenarios as written by the synth command.
struct LabelRow {
    std::size_t event_index = 0;
    std::string group_label;
    bool damaged = false;
    std::vector<std::string> sites;
};

std::vector<LabelRow> scenario_labels(const std::vector<Scenario>& scenarios,
                                      const std::vector<std::string>& sensor_labels);

/// Columns: event_index,group_label,label,sites (sites separated by ';').
void write_labels_csv(const std::filesystem::path& path, const std::vector<LabelRow>& rows);
std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path);

}  // namespace mva
