#pragma once

// Sensor identity baseline and k-NN per-sensor anomaly scores.
//
// The baseline keeps, for every sensor, the residual profile of each
// training event. A new event's profile row for sensor i is compared with
// sensor i's training rows; the mean distance to the k nearest is that
// sensor's location score.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mva/detection.hpp"
#include "mva/multiway.hpp"
#include "mva/variational.hpp"

namespace mva {

enum class ProfileWidth {
    per_feature,  // p = m: one squared residual per output node
    mean,         // p = 1: mean squared residual of the sensor's block
};

const char* to_string(ProfileWidth p);
ProfileWidth parse_profile_width(std::string_view s);

struct LocalizationConfig {
    std::size_t k = 5;
    std::size_t mc_samples = 10;
    std::uint64_t seed = 0;
    ProfileWidth profile = ProfileWidth::per_feature;

    void validate() const;
};

struct SensorIdentityBaseline {
    std::vector<std::string> sensor_labels;
    std::size_t profile_width = 0;
    /// profiles[i] is T_train x p: sensor i's profile for every training event.
    std::vector<RowMatrix> profiles;
    /// n x p column means of the profiles.
    RowMatrix summary;

    std::size_t sensors() const { return profiles.size(); }
    std::size_t training_events() const { return profiles.empty() ? 0 : static_cast<std::size_t>(profiles[0].rows()); }
};

struct LocationScore {
    std::string sensor_label;
    double knn_score = 0.0;
    std::size_t rank = 0;
};

/// Reshapes a per-feature mean squared residual (sensor-major) into n x p rows.
RowMatrix residual_profile(const Eigen::VectorXd& mean_squared_residual, std::size_t sensors, std::size_t features,
                           ProfileWidth width);

/// n x p squared residuals of one event, averaged over L latent draws.
RowMatrix per_sensor_errors(const VaeParams& params, const EventSlice& slice, std::size_t mc_samples,
                            std::uint64_t stream_seed, ProfileWidth width = ProfileWidth::per_feature);

/// Profiles every training event (noise stream per event from cfg.seed).
SensorIdentityBaseline build_identity_baseline(const VaeParams& params, const MultiwayTensor& train,
                                               const LocalizationConfig& cfg);

/// Same as above from already computed per-event residual profiles.
SensorIdentityBaseline baseline_from_profiles(std::vector<std::string> sensor_labels,
                                              std::span<const RowMatrix> event_profiles);

/// k-NN scores for a profile (n x p) against the baseline, ranked.
std::vector<LocationScore> knn_scores_for_profile(const SensorIdentityBaseline& baseline, const RowMatrix& profile,
                                                  std::size_t k);

/// Result in sensor order with ranks assigned (1 = most anomalous).
std::vector<LocationScore> knn_location_scores(const SensorIdentityBaseline& baseline, const VaeParams& params,
                                               const EventSlice& slice, std::size_t k, std::size_t mc_samples,
                                               std::uint64_t stream_seed);

/// Scores ordered by descending knn_score; ties by ascending sensor label.
std::vector<LocationScore> localization_report(std::span<const LocationScore> scores);

/// Columns: sensor_label,knn_score,rank (in rank order).
void write_localization_csv(std::ostream& out, std::span<const LocationScore> scores);

}  // namespace mva
