#include "mva/detection.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "mva/byte_io.hpp"
#include "mva/common.hpp"

namespace mva {

void DetectionConfig::validate() const {
    if (mc_samples < 1) {
        throw InvalidConfig("detection.mc_samples must be >= 1");
    }
    if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0)) {
        throw InvalidConfig("detection.threshold_quantile must lie in (0, 1)");
    }
    if (calibration_folds < 1) {
        throw InvalidConfig("detection.calibration_folds must be >= 1");
    }
}

const char* to_string(Decision d) {
    return d == Decision::damage ? "damage" : "healthy";
}

Decision parse_decision(std::string_view s) {
    if (s == "damage") {
        return Decision::damage;
    }
    if (s == "healthy") {
        return Decision::healthy;
    }
    throw InvalidInput("unknown decision '" + std::string(s) + "' (expected healthy or damage)");
}

ScoredEvent score_event(const VaeParams& params, const EventSlice& slice, std::size_t mc_samples,
                        std::uint64_t stream_seed) {
    if (mc_samples < 1) {
        throw InvalidConfig("mc_samples must be >= 1");
    }
    if (static_cast<std::size_t>(slice.flat.size()) != params.input_width()) {
        throw DimensionMismatch("slice has " + std::to_string(slice.flat.size()) + " features, model expects " +
                                std::to_string(params.input_width()));
    }
    if (slice.sensors * slice.features != static_cast<std::size_t>(slice.flat.size())) {
        throw DimensionMismatch("slice shape does not match its flat length");
    }
    const auto q = encode(params, slice.flat);
    if (!q.mu.allFinite() || !q.sigma.allFinite()) {
        throw InvalidModel("encoder produced non-finite output; the model is untrained or corrupt");
    }
    Rng rng(stream_seed);
    std::vector<double> ll(mc_samples);
    Eigen::VectorXd eps(q.mu.size());
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(slice.flat.size());
    for (std::size_t l = 0; l < mc_samples; ++l) {
        for (Eigen::Index j = 0; j < eps.size(); ++j) {
            eps[j] = rng.normal();
        }
        const auto out = decode(params, reparameterize(q, eps));
        ll[l] = gaussian_log_likelihood(slice.flat, out);
        sq += (slice.flat - out.mu).cwiseAbs2();
    }
    const double inv_l = 1.0 / static_cast<double>(mc_samples);
    sq *= inv_l;

    ScoredEvent ev;
    const double top = *std::max_element(ll.begin(), ll.end());
    if (!std::isfinite(top)) {
        throw InvalidModel("decoder produced a non-finite likelihood; the model is untrained or corrupt");
    }
    double acc = 0.0;
    double sum = 0.0;
    for (double v : ll) {
        acc += std::exp(v - top);
        sum += v;
    }
    ev.score.log_recon_prob = top + std::log(acc * inv_l);
    ev.score.recon_prob = std::exp(ev.score.log_recon_prob);
    ev.score.neg_log_likelihood = -sum * inv_l;
    ev.score.per_sensor_errors.assign(slice.sensors, 0.0);
    for (std::size_t i = 0; i < slice.sensors; ++i) {
        ev.score.per_sensor_errors[i] =
            sq.segment(static_cast<Eigen::Index>(i * slice.features), static_cast<Eigen::Index>(slice.features)).mean();
    }
    ev.mean_squared_residual = std::move(sq);
    return ev;
}

AnomalyScore reconstruction_probability(const VaeParams& params, const EventSlice& slice, std::size_t mc_samples,
                                        std::uint64_t stream_seed) {
    return score_event(params, slice, mc_samples, stream_seed).score;
}

std::uint64_t event_stream_seed(std::uint64_t seed, std::size_t event_index) {
    return mix_seed(seed, static_cast<std::uint64_t>(event_index));
}

std::vector<ScoredEvent> score_batch(const VaeParams& params, std::span<const EventSlice> slices,
                                     const DetectionConfig& cfg, std::size_t threads) {
    cfg.validate();
    std::vector<ScoredEvent> out(slices.size());
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, slices.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < slices.size(); ++i) {
            out[i] = score_event(params, slices[i], cfg.mc_samples, event_stream_seed(cfg.seed, slices[i].event_index));
        }
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < slices.size(); i = next++) {
                    out[i] = score_event(params, slices[i], cfg.mc_samples,
                                         event_stream_seed(cfg.seed, slices[i].event_index));
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw InvalidInput("quantile of an empty set");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw InvalidConfig("quantile level must lie in [0, 1]");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double calibrate_threshold(std::span<const AnomalyScore> train_scores, const DetectionConfig& cfg) {
    cfg.validate();
    if (train_scores.empty()) {
        throw InvalidInput("threshold calibration needs at least one training score");
    }
    std::vector<double> nll;
    nll.reserve(train_scores.size());
    for (const auto& s : train_scores) {
        nll.push_back(s.neg_log_likelihood);
    }
    return empirical_quantile(std::move(nll), 1.0 - cfg.threshold_quantile);
}

Decision classify(const AnomalyScore& score, double threshold) {
    return score.neg_log_likelihood > threshold ? Decision::damage : Decision::healthy;
}

std::vector<SeverityPoint> severity_trace(std::span<const ScoreGroup> groups) {
    std::vector<SeverityPoint> out;
    for (const auto& g : groups) {
        if (g.scores.empty()) {
            throw InvalidInput("severity group '" + g.label + "' is empty");
        }
        double sum = 0.0;
        for (const auto& s : g.scores) {
            sum += s.neg_log_likelihood;
        }
        out.push_back({g.label, sum / static_cast<double>(g.scores.size()), g.scores.size()});
    }
    return out;
}

std::vector<ScoreGroup> group_scores(std::span<const std::string> labels, std::span<const AnomalyScore> scores) {
    if (labels.size() != scores.size()) {
        throw DimensionMismatch("group labels and scores differ in count");
    }
    std::vector<ScoreGroup> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const ScoreGroup& g) { return g.label == labels[i]; });
        if (it == groups.end()) {
            groups.push_back({labels[i], {}});
            it = std::prev(groups.end());
        }
        it->scores.push_back(scores[i]);
    }
    return groups;
}

Metrics evaluate(std::span<const Decision> decisions, std::span<const Decision> ground_truth) {
    if (decisions.size() != ground_truth.size()) {
        throw DimensionMismatch("evaluate got " + std::to_string(decisions.size()) + " decisions for " +
                                std::to_string(ground_truth.size()) + " ground-truth labels");
    }
    Metrics m;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const bool predicted = decisions[i] == Decision::damage;
        const bool actual = ground_truth[i] == Decision::damage;
        if (predicted && actual) {
            ++m.true_positive;
        } else if (predicted) {
            ++m.false_positive;
        } else if (actual) {
            ++m.false_negative;
        } else {
            ++m.true_negative;
        }
    }
    const auto tp = static_cast<double>(m.true_positive);
    if (m.true_positive + m.false_positive > 0) {
        m.precision = tp / static_cast<double>(m.true_positive + m.false_positive);
    }
    if (m.true_positive + m.false_negative > 0) {
        m.recall = tp / static_cast<double>(m.true_positive + m.false_negative);
    }
    if (m.precision + m.recall > 0.0) {
        m.f_score = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

void write_report_csv(std::ostream& out, const DetectionReport& report) {
    out << "event_index,group_label,recon_prob_log,nll,decision\n";
    for (const auto& e : report.events) {
        out << e.event_index << ',' << e.group_label << ',' << format_double(e.score.log_recon_prob) << ','
            << format_double(e.score.neg_log_likelihood) << ',' << to_string(e.decision) << '\n';
    }
}

void write_report_csv(const std::filesystem::path& path, const DetectionReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    write_report_csv(out, report);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("event_index,group_label,recon_prob_log,nll,decision", 0) != 0) {
        throw FormatError(path.string() + ": missing report header");
    }
    std::vector<ReportRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != 5) {
            throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has " +
                              std::to_string(cells.size()) + " columns, expected 5");
        }
        const std::string where = path.string() + " line " + std::to_string(lineno);
        ReportRow r;
        r.event_index = static_cast<std::size_t>(parse_double(cells[0], where));
        r.group_label = cells[1];
        r.log_recon_prob = parse_double(cells[2], where);
        r.neg_log_likelihood = parse_double(cells[3], where);
        r.decision = parse_decision(cells[4]);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace mva
