#pragma once

// Reconstruction-probability scoring, threshold calibration, decisions,
// severity traces and F-score evaluation.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mva/multiway.hpp"
#include "mva/variational.hpp"

namespace mva {

struct AnomalyScore {
    /// Mean decoder density over the latent draws. Underflows to 0 for wide
    /// inputs; log_recon_prob carries the usable value.
    double recon_prob = 0.0;
    double log_recon_prob = 0.0;
    /// -(1/L) * sum of per-draw log-likelihoods. High means anomalous.
    double neg_log_likelihood = 0.0;
    /// Mean squared residual per sensor, over draws and that sensor's features.
    std::vector<double> per_sensor_errors;
};

struct DetectionConfig {
    std::size_t mc_samples = 10;
    double threshold_quantile = 0.03;
    /// Training events are scored by models fitted on the other folds so the
    /// calibration scores are out-of-sample; 1 scores them in-sample.
    std::size_t calibration_folds = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Decision { healthy, damage };

const char* to_string(Decision d);
Decision parse_decision(std::string_view s);

/// Score plus the per-feature mean squared residual (x - mu_x)^2, averaged
/// over the latent draws; localization reads the latter.
struct ScoredEvent {
    AnomalyScore score;
    Eigen::VectorXd mean_squared_residual;
};

/// Draws L latent samples from q(z|x) using a generator seeded with
/// `stream_seed` and evaluates the decoder density at x for each.
ScoredEvent score_event(const VaeParams& params, const EventSlice& slice, std::size_t mc_samples,
                        std::uint64_t stream_seed);

AnomalyScore reconstruction_probability(const VaeParams& params, const EventSlice& slice, std::size_t mc_samples,
                                        std::uint64_t stream_seed);

/// Per-event noise stream for batch scoring: depends on the run seed and the
/// slice's event_index only, so results do not depend on batch order or threading.
std::uint64_t event_stream_seed(std::uint64_t seed, std::size_t event_index);

/// Scores every slice, fanning out over up to `threads` workers; output order
/// is input order.
std::vector<ScoredEvent> score_batch(const VaeParams& params, std::span<const EventSlice> slices,
                                     const DetectionConfig& cfg, std::size_t threads = 1);

/// Linear-interpolation empirical quantile (q in [0, 1]).
double empirical_quantile(std::vector<double> values, double q);

/// The (1 - threshold_quantile) quantile of the training negative log-likelihoods.
double calibrate_threshold(std::span<const AnomalyScore> train_scores, const DetectionConfig& cfg);

/// damage iff neg_log_likelihood > threshold.
Decision classify(const AnomalyScore& score, double threshold);

struct ScoreGroup {
    std::string label;
    std::vector<AnomalyScore> scores;
};

struct SeverityPoint {
    std::string group;
    double mean_nll = 0.0;
    std::size_t count = 0;
};

/// Mean negative log-likelihood of each group, in the given order.
std::vector<SeverityPoint> severity_trace(std::span<const ScoreGroup> groups);

/// Groups (label, score) pairs by label in order of first appearance.
std::vector<ScoreGroup> group_scores(std::span<const std::string> labels, std::span<const AnomalyScore> scores);

struct Metrics {
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    std::size_t true_negative = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
};

/// Damage is the positive class. Undefined ratios are reported as 0.
Metrics evaluate(std::span<const Decision> decisions, std::span<const Decision> ground_truth);

struct EventRecord {
    std::size_t event_index = 0;
    std::string group_label;
    AnomalyScore score;
    Decision decision = Decision::healthy;
};

struct DetectionReport {
    std::vector<EventRecord> events;
    std::vector<SeverityPoint> severity;
    double threshold = 0.0;
};

/// Columns: event_index,group_label,recon_prob_log,nll,decision
void write_report_csv(std::ostream& out, const DetectionReport& report);
void write_report_csv(const std::filesystem::path& path, const DetectionReport& report);

struct ReportRow {
    std::size_t event_index = 0;
    std::string group_label;
    double log_recon_prob = 0.0;
    double neg_log_likelihood = 0.0;
    Decision decision = Decision::healthy;
};

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

}  // namespace mva
