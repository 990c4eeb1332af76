#include "mva/localization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mva/byte_io.hpp"
#include "mva/common.hpp"

namespace mva {

const char* to_string(ProfileWidth p) {
    return p == ProfileWidth::per_feature ? "per_feature" : "mean";
}

ProfileWidth parse_profile_width(std::string_view s) {
    if (s == "per_feature") {
        return ProfileWidth::per_feature;
    }
    if (s == "mean") {
        return ProfileWidth::mean;
    }
    throw InvalidConfig("unknown profile width '" + std::string(s) + "' (expected per_feature or mean)");
}

void LocalizationConfig::validate() const {
    if (k < 1) {
        throw InvalidConfig("localization.k must be >= 1");
    }
    if (mc_samples < 1) {
        throw InvalidConfig("localization.mc_samples must be >= 1");
    }
}

RowMatrix residual_profile(const Eigen::VectorXd& mean_squared_residual, std::size_t sensors, std::size_t features,
                           ProfileWidth width) {
    if (static_cast<std::size_t>(mean_squared_residual.size()) != sensors * features) {
        throw DimensionMismatch("residual vector has " + std::to_string(mean_squared_residual.size()) +
                                " entries, expected " + std::to_string(sensors * features));
    }
    const auto n = static_cast<Eigen::Index>(sensors);
    const auto m = static_cast<Eigen::Index>(features);
    Eigen::Map<const RowMatrix> blocks(mean_squared_residual.data(), n, m);
    if (width == ProfileWidth::per_feature) {
        return blocks;
    }
    return blocks.rowwise().mean();
}

RowMatrix per_sensor_errors(const VaeParams& params, const EventSlice& slice, std::size_t mc_samples,
                            std::uint64_t stream_seed, ProfileWidth width) {
    const auto ev = score_event(params, slice, mc_samples, stream_seed);
    return residual_profile(ev.mean_squared_residual, slice.sensors, slice.features, width);
}

SensorIdentityBaseline baseline_from_profiles(std::vector<std::string> sensor_labels,
                                              std::span<const RowMatrix> event_profiles) {
    if (event_profiles.empty()) {
        throw InvalidInput("identity baseline needs at least one training event");
    }
    const auto n = event_profiles.front().rows();
    const auto p = event_profiles.front().cols();
    if (static_cast<std::size_t>(n) != sensor_labels.size()) {
        throw DimensionMismatch("profile rows differ from sensor count");
    }
    SensorIdentityBaseline b;
    b.sensor_labels = std::move(sensor_labels);
    b.profile_width = static_cast<std::size_t>(p);
    const auto t = static_cast<Eigen::Index>(event_profiles.size());
    b.profiles.assign(static_cast<std::size_t>(n), RowMatrix::Zero(t, p));
    for (Eigen::Index e = 0; e < t; ++e) {
        const auto& prof = event_profiles[static_cast<std::size_t>(e)];
        if (prof.rows() != n || prof.cols() != p) {
            throw DimensionMismatch("training profiles differ in shape");
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            b.profiles[static_cast<std::size_t>(i)].row(e) = prof.row(i);
        }
    }
    b.summary.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        b.summary.row(i) = b.profiles[static_cast<std::size_t>(i)].colwise().mean();
    }
    return b;
}

SensorIdentityBaseline build_identity_baseline(const VaeParams& params, const MultiwayTensor& train,
                                               const LocalizationConfig& cfg) {
    cfg.validate();
    std::vector<RowMatrix> profiles;
    profiles.reserve(train.events());
    for (std::size_t e = 0; e < train.events(); ++e) {
        const auto slice = frontal_slice(train, e);
        profiles.push_back(per_sensor_errors(params, slice, cfg.mc_samples, event_stream_seed(cfg.seed, e), cfg.profile));
    }
    return baseline_from_profiles(train.sensor_labels(), profiles);
}

std::vector<LocationScore> knn_scores_for_profile(const SensorIdentityBaseline& baseline, const RowMatrix& profile,
                                                  std::size_t k) {
    const std::size_t t = baseline.training_events();
    if (k < 1 || k > t) {
        throw InvalidConfig("k = " + std::to_string(k) + " must lie in [1, " + std::to_string(t) + "]");
    }
    if (static_cast<std::size_t>(profile.rows()) != baseline.sensors() ||
        static_cast<std::size_t>(profile.cols()) != baseline.profile_width) {
        throw DimensionMismatch("profile is " + std::to_string(profile.rows()) + "x" + std::to_string(profile.cols()) +
                                ", baseline expects " + std::to_string(baseline.sensors()) + "x" +
                                std::to_string(baseline.profile_width));
    }
    std::vector<LocationScore> scores(baseline.sensors());
    std::vector<double> dist(t);
    for (std::size_t i = 0; i < baseline.sensors(); ++i) {
        const auto& ref = baseline.profiles[i];
        const auto row = profile.row(static_cast<Eigen::Index>(i));
        for (std::size_t e = 0; e < t; ++e) {
            dist[e] = (ref.row(static_cast<Eigen::Index>(e)) - row).norm();
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        scores[i].sensor_label = baseline.sensor_labels[i];
        scores[i].knn_score = std::accumulate(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
                              static_cast<double>(k);
    }
    const auto ranked = localization_report(scores);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        for (auto& s : scores) {
            if (s.sensor_label == ranked[r].sensor_label) {
                s.rank = r + 1;
            }
        }
    }
    return scores;
}

std::vector<LocationScore> knn_location_scores(const SensorIdentityBaseline& baseline, const VaeParams& params,
                                               const EventSlice& slice, std::size_t k, std::size_t mc_samples,
                                               std::uint64_t stream_seed) {
    const auto width =
        baseline.profile_width == 1 && slice.features != 1 ? ProfileWidth::mean : ProfileWidth::per_feature;
    return knn_scores_for_profile(baseline, per_sensor_errors(params, slice, mc_samples, stream_seed, width), k);
}

std::vector<LocationScore> localization_report(std::span<const LocationScore> scores) {
    if (scores.empty()) {
        throw InvalidInput("localization report needs at least one sensor score");
    }
    std::vector<LocationScore> out(scores.begin(), scores.end());
    std::stable_sort(out.begin(), out.end(), [](const LocationScore& a, const LocationScore& b) {
        if (a.knn_score != b.knn_score) {
            return a.knn_score > b.knn_score;
        }
        return a.sensor_label < b.sensor_label;
    });
    for (std::size_t r = 0; r < out.size(); ++r) {
        out[r].rank = r + 1;
    }
    return out;
}

void write_localization_csv(std::ostream& out, std::span<const LocationScore> scores) {
    out << "sensor_label,knn_score,rank\n";
    for (const auto& s : localization_report(scores)) {
        out << s.sensor_label << ',' << format_double(s.knn_score) << ',' << s.rank << '\n';
    }
}

}  // namespace mva
