#pragma once

// End-to-end train and score orchestration shared by the CLI and the
// acceptance suite.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mva/artifact.hpp"
#include "mva/config.hpp"
#include "mva/detection.hpp"
#include "mva/localization.hpp"
#include "mva/multiway.hpp"
#include "mva/synthetic.hpp"

namespace mva {

/// Worker count for batch scoring: hardware concurrency, capped by the
/// MVA_THREADS environment variable when set to a positive integer.
std::size_t worker_threads();

/// A .mwt tensor file, or a directory of per-event CSV files that is
/// preprocessed with `prep`.
MultiwayTensor load_features(const std::filesystem::path& path, const PreprocessConfig& prep);

/// Raw-data concatenation in order; sensor labels must agree.
RawDataset concat_raw(const std::vector<const RawDataset*>& parts);

struct TrainOutcome {
    ModelArtifact model;
    std::vector<double> loss_curve;
    std::vector<AnomalyScore> train_scores;
};

/// Standardize, fit the VAE, calibrate the threshold on training scores
/// and build the localization baseline from the same residuals.
TrainOutcome train_model(const MultiwayTensor& train, const RunConfig& cfg,
                         const std::function<void(std::size_t, double)>& on_epoch = {},
                         std::size_t threads = 1);

struct EventLocalization {
    std::size_t event_index = 0;
    std::vector<LocationScore> ranked;  // rank order
};

struct ScoreOutcome {
    DetectionReport report;
    std::vector<EventLocalization> localization;  // one per event, input order
    std::optional<Metrics> metrics;
};

/// `group_labels` is empty (all events in group "all") or one per event;
/// `truth`, when non-empty, yields metrics.
ScoreOutcome score_dataset(const ModelArtifact& model, const MultiwayTensor& data,
                           const std::vector<std::string>& group_labels, const std::vector<Decision>& truth,
                           std::size_t threads = 1);

}  // namespace mva
