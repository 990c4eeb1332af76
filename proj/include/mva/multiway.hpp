#pragma once

// Three-way (sensor x feature x event) data: ingestion, spectral
// preprocessing, slicing and persistence.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mva {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PreprocessConfig {
    /// FFT magnitude bins kept per sensor, DC included.
    std::size_t keep_bins = 128;
    /// Difference adjacent sensor pairs (0-1, 2-3, ...) before the FFT.
    bool pair_difference = false;

    /// Throws InvalidConfig when keep_bins cannot be served by signals of this length.
    void validate(std::size_t signal_length) const;
};

/// Dense sensor x feature x event array. Values are stored in
/// [sensor][feature][event] order, the same order as the binary file format.
class MultiwayTensor {
  public:
    MultiwayTensor() = default;
    /// Zero-filled tensor.
    MultiwayTensor(std::size_t sensors, std::size_t features, std::size_t events,
                   std::vector<std::string> sensor_labels);
    MultiwayTensor(std::size_t sensors, std::size_t features, std::size_t events,
                   std::vector<double> values, std::vector<std::string> sensor_labels);

    std::size_t sensors() const { return sensors_; }
    std::size_t features() const { return features_; }
    std::size_t events() const { return events_; }
    std::size_t slice_size() const { return sensors_ * features_; }

    double at(std::size_t sensor, std::size_t feature, std::size_t event) const {
        return values_[offset(sensor, feature, event)];
    }
    double& at(std::size_t sensor, std::size_t feature, std::size_t event) {
        return values_[offset(sensor, feature, event)];
    }

    std::span<const double> values() const { return values_; }
    const std::vector<std::string>& sensor_labels() const { return labels_; }

    /// New tensor holding the listed events, in the listed order.
    MultiwayTensor select_events(std::span<const std::size_t> indices) const;

  private:
    std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const {
        return (i * features_ + j) * events_ + k;
    }
    void check_invariants() const;

    std::size_t sensors_ = 0;
    std::size_t features_ = 0;
    std::size_t events_ = 0;
    std::vector<double> values_;
    std::vector<std::string> labels_;
};

/// One frontal slice: the sensor x feature matrix of a single event,
/// flattened sensor-major so flat[i * features + j] is sensor i, feature j.
struct EventSlice {
    std::size_t sensors = 0;
    std::size_t features = 0;
    std::size_t event_index = 0;
    Eigen::VectorXd flat;

    double at(std::size_t sensor, std::size_t feature) const {
        return flat[static_cast<Eigen::Index>(sensor * features + feature)];
    }
    Eigen::Map<const RowMatrix> matrix() const {
        return {flat.data(), static_cast<Eigen::Index>(sensors),
                static_cast<Eigen::Index>(features)};
    }
};

/// Raw time-domain signals for one acquisition window, one per sensor.
struct RawEvent {
    std::vector<std::vector<double>> signals;
};

struct RawDataset {
    std::vector<std::string> sensor_labels;
    std::vector<RawEvent> events;
};

/// Zero mean, unit population standard deviation. A constant signal maps to zeros.
std::vector<double> normalize_signal(std::span<const double> raw);

/// First keep_bins DFT magnitudes (unnormalized forward transform, DC included).
std::vector<double> fft_features(std::span<const double> signal, std::size_t keep_bins);

/// normalize_signal then fft_features for every signal of every event.
MultiwayTensor build_tensor(const RawDataset& data, const PreprocessConfig& cfg);

EventSlice frontal_slice(const MultiwayTensor& t, std::size_t event);

/// Inverse of frontal_slice: writes the slice back at slice.event_index.
void embed_slice(MultiwayTensor& t, const EventSlice& slice);

std::vector<EventSlice> all_slices(const MultiwayTensor& t);

/// Seeded random partition; the train part holds floor(fraction * T) events.
std::pair<MultiwayTensor, MultiwayTensor> split_events(const MultiwayTensor& t,
                                                       double train_fraction,
                                                       std::uint64_t seed);

/// Per-feature standardization fitted on training events.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    static FeatureScaler fit(const MultiwayTensor& train);
    EventSlice apply(const EventSlice& slice) const;
    MultiwayTensor apply(const MultiwayTensor& t) const;

    /// Standardizes every event of `train` (the tensor this scaler was fitted
    /// on) with mean and std recomputed without that event, so each event is
    /// scaled as an unseen one would be. Requires at least two events.
    MultiwayTensor apply_leave_one_out(const MultiwayTensor& train) const;
};

// Binary tensor file: "MWT1", u32 n, u32 m, u32 T (little-endian), n*m*T
// float64 in [sensor][feature][event] order, then newline-separated labels.
void write_tensor(const std::filesystem::path& path, const MultiwayTensor& t);
MultiwayTensor read_tensor(const std::filesystem::path& path);

// CSV event file: header row of sensor labels, one row per time sample.
void write_event_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                     const RawEvent& event);
RawDataset read_event_csv(const std::filesystem::path& path);
/// Every *.csv in dir, in lexicographic filename order, as one dataset.
RawDataset read_event_directory(const std::filesystem::path& dir);

}  // namespace mva
