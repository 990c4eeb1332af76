#include "mva/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "mva/common.hpp"

namespace mva {

std::size_t worker_threads() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MVA_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || cap < 1) {
            throw InvalidConfig("MVA_THREADS must be a positive integer, got '" + std::string(env) + "'");
        }
        n = std::min(n, static_cast<std::size_t>(cap));
    }
    return n;
}

MultiwayTensor load_features(const std::filesystem::path& path, const PreprocessConfig& prep) {
    if (std::filesystem::is_directory(path)) {
        return build_tensor(read_event_directory(path), prep);
    }
    if (!std::filesystem::exists(path)) {
        throw IoError("data path " + path.string() + " does not exist");
    }
    return read_tensor(path);
}

RawDataset concat_raw(const std::vector<const RawDataset*>& parts) {
    RawDataset out;
    for (const auto* p : parts) {
        if (out.sensor_labels.empty()) {
            out.sensor_labels = p->sensor_labels;
        } else if (out.sensor_labels != p->sensor_labels) {
            throw InvalidInput("datasets to concatenate have different sensor labels");
        }
        out.events.insert(out.events.end(), p->events.begin(), p->events.end());
    }
    return out;
}

namespace {

// Event indices of each calibration fold, from a seeded shuffle.
std::vector<std::vector<std::size_t>> calibration_folds(std::size_t events, std::size_t folds, std::uint64_t seed) {
    std::vector<std::size_t> order(events);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out(folds);
    for (std::size_t p = 0; p < events; ++p) {
        out[p % folds].push_back(order[p]);
    }
    for (auto& f : out) {
        std::sort(f.begin(), f.end());
    }
    return out;
}

std::vector<ScoredEvent> score_with_indices(const VaeParams& vae, std::vector<EventSlice> slices,
                                            std::span<const std::size_t> indices, const DetectionConfig& cfg,
                                            std::size_t threads) {
    for (std::size_t p = 0; p < slices.size(); ++p) {
        slices[p].event_index = indices[p];
    }
    return score_batch(vae, slices, cfg, threads);
}

}  // namespace

TrainOutcome train_model(const MultiwayTensor& train, const RunConfig& cfg,
                         const std::function<void(std::size_t, double)>& on_epoch, std::size_t threads) {
    cfg.validate();
    if (train.events() < cfg.localization.k) {
        throw InvalidConfig("localization.k = " + std::to_string(cfg.localization.k) + " exceeds the " +
                            std::to_string(train.events()) + " training events");
    }
    const std::size_t folds = cfg.detection.calibration_folds;
    if (folds > 1 && train.events() < 2 * folds) {
        throw InvalidConfig("detection.calibration_folds = " + std::to_string(folds) + " needs at least " +
                            std::to_string(2 * folds) + " training events, got " + std::to_string(train.events()));
    }
    TrainOutcome out;
    auto& m = out.model;
    m.preprocess = cfg.preprocess;
    m.sensor_labels = train.sensor_labels();
    m.features = train.features();
    m.scaler = FeatureScaler::fit(train);
    const auto slices = all_slices(m.scaler.apply(train));

    auto fit = train_mva(slices, cfg.train, on_epoch);
    m.vae = std::move(fit.params);
    out.loss_curve = std::move(fit.loss_curve);

    // Calibration scores must look like scores of unseen healthy events:
    // in-sample scores are optimistic and would bias the threshold low.
    std::vector<ScoredEvent> scored(train.events());
    if (folds == 1) {
        const auto calib = train.events() > 1 ? all_slices(m.scaler.apply_leave_one_out(train)) : slices;
        scored = score_batch(m.vae, calib, cfg.detection, threads);
    } else {
        const auto parts = calibration_folds(train.events(), folds, mix_seed(cfg.detection.seed, 0xCA11B));
        for (std::size_t f = 0; f < folds; ++f) {
            std::vector<std::size_t> rest;
            for (std::size_t g = 0; g < folds; ++g) {
                if (g != f) {
                    rest.insert(rest.end(), parts[g].begin(), parts[g].end());
                }
            }
            std::sort(rest.begin(), rest.end());
            const auto fit_part = train.select_events(rest);
            const auto held_part = train.select_events(parts[f]);
            const auto scaler = FeatureScaler::fit(fit_part);
            auto fold_cfg = cfg.train;
            fold_cfg.seed = mix_seed(cfg.train.seed, 100 + f);
            const auto fold_fit = train_mva(all_slices(scaler.apply(fit_part)), fold_cfg);
            const auto fold_scores =
                score_with_indices(fold_fit.params, all_slices(scaler.apply(held_part)), parts[f], cfg.detection, threads);
            for (std::size_t p = 0; p < parts[f].size(); ++p) {
                scored[parts[f][p]] = fold_scores[p];
            }
        }
    }
    std::vector<RowMatrix> profiles;
    for (const auto& s : scored) {
        out.train_scores.push_back(s.score);
        profiles.push_back(
            residual_profile(s.mean_squared_residual, train.sensors(), train.features(), cfg.localization.profile));
    }
    m.detection = cfg.detection;
    m.threshold = calibrate_threshold(out.train_scores, cfg.detection);
    m.localization = cfg.localization;
    m.baseline = baseline_from_profiles(train.sensor_labels(), profiles);
    m.seeds = {cfg.seed, cfg.train.seed, cfg.detection.seed};
    m.validate();
    return out;
}

ScoreOutcome score_dataset(const ModelArtifact& model, const MultiwayTensor& data,
                           const std::vector<std::string>& group_labels, const std::vector<Decision>& truth,
                           std::size_t threads) {
    if (data.sensors() != model.sensor_labels.size() || data.features() != model.features) {
        throw DimensionMismatch("data slices are " + std::to_string(data.sensors()) + "x" +
                                std::to_string(data.features()) + " (sensors x features), model expects " +
                                std::to_string(model.sensor_labels.size()) + "x" + std::to_string(model.features));
    }
    if (data.sensor_labels() != model.sensor_labels) {
        throw InvalidInput("data sensor labels differ from the sensor labels the model was trained on");
    }
    if (!group_labels.empty() && group_labels.size() != data.events()) {
        throw DimensionMismatch(std::to_string(group_labels.size()) + " group labels for " +
                                std::to_string(data.events()) + " events");
    }
    if (!truth.empty() && truth.size() != data.events()) {
        throw DimensionMismatch(std::to_string(truth.size()) + " ground-truth labels for " +
                                std::to_string(data.events()) + " events");
    }
    const auto slices = all_slices(model.scaler.apply(data));
    const auto scored = score_batch(model.vae, slices, model.detection, threads);

    ScoreOutcome out;
    out.report.threshold = model.threshold;
    std::vector<AnomalyScore> scores;
    std::vector<std::string> groups;
    std::vector<Decision> decisions;
    for (std::size_t e = 0; e < scored.size(); ++e) {
        EventRecord r;
        r.event_index = e;
        r.group_label = group_labels.empty() ? "all" : group_labels[e];
        r.score = scored[e].score;
        r.decision = classify(r.score, model.threshold);
        scores.push_back(r.score);
        groups.push_back(r.group_label);
        decisions.push_back(r.decision);
        out.report.events.push_back(std::move(r));

        const auto profile = residual_profile(scored[e].mean_squared_residual, data.sensors(), data.features(),
                                              model.localization.profile);
        const auto loc = knn_scores_for_profile(model.baseline, profile, model.localization.k);
        out.localization.push_back({e, localization_report(loc)});
    }
    out.report.severity = severity_trace(group_scores(groups, scores));
    if (!truth.empty()) {
        out.metrics = evaluate(decisions, truth);
    }
    return out;
}

}  // namespace mva
