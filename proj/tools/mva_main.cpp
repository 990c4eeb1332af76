// mva: synth | train | score | evaluate | config
//
// Exit status: 0 success, 2 invalid input or configuration, 3 runtime
// failure (I/O, corrupt model, diverged training).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mva/artifact.hpp"
#include "mva/byte_io.hpp"
#include "mva/common.hpp"
#include "mva/config.hpp"
#include "mva/pipeline.hpp"
#include "mva/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw mva::IoError("cannot create output directory " + dir.string());
    }
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw mva::IoError("cannot open " + path.string() + " for writing");
    }
    return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
    out.close();
    if (!out) {
        throw mva::IoError("write failed for " + path.string());
    }
}

mva::RunConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed,
                              const std::vector<mva::ConfigSection>& required) {
    mva::RunConfig cfg = mva::load_config(path, required);
    if (seed) {
        cfg.seed = *seed;
        cfg.finalize();
        cfg.validate();
    }
    return cfg;
}

void write_raw_events(const fs::path& dir, const mva::RawDataset& data) {
    ensure_directory(dir);
    char name[32];
    for (std::size_t e = 0; e < data.events.size(); ++e) {
        std::snprintf(name, sizeof name, "event_%05zu.csv", e);
        mva::write_event_csv(dir / name, data.sensor_labels, data.events[e]);
    }
}

int cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out_dir, bool raw) {
    using S = mva::ConfigSection;
    const auto cfg = resolve_config(config_path, seed, {S::synth, S::preprocess});
    cfg.preprocess.validate(cfg.synth.signal_length);
    const auto suite = mva::benchmark_suite(cfg.synth);

    std::vector<const mva::RawDataset*> tests;
    for (const auto& sc : suite.tests) {
        tests.push_back(&sc.data.raw);
    }
    const auto test_raw = mva::concat_raw(tests);
    const auto train = mva::build_tensor(suite.train.raw, cfg.preprocess);
    const auto test = mva::build_tensor(test_raw, cfg.preprocess);

    ensure_directory(out_dir);
    mva::write_tensor(out_dir / "train.mwt", train);
    mva::write_tensor(out_dir / "test.mwt", test);
    mva::write_labels_csv(out_dir / "labels.csv", mva::scenario_labels(suite.tests, test.sensor_labels()));
    if (raw) {
        write_raw_events(out_dir / "raw" / "train", suite.train.raw);
        write_raw_events(out_dir / "raw" / "test", test_raw);
    }
    std::cout << "synth: train " << train.sensors() << "x" << train.features() << "x" << train.events() << ", test "
              << test.events() << " events in " << suite.tests.size() << " scenarios -> " << out_dir.string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& data_path,
              const fs::path& model_out) {
    using S = mva::ConfigSection;
    const auto cfg = resolve_config(config_path, seed, {S::preprocess, S::train, S::detection, S::localization});
    const auto train = mva::load_features(data_path, cfg.preprocess);

    const fs::path loss_path = fs::path(model_out).replace_extension(".loss.csv");
    if (model_out.has_parent_path()) {
        ensure_directory(model_out.parent_path());
    }
    auto loss = open_output(loss_path);
    loss << "epoch,loss\n";
    const auto outcome = mva::train_model(
        train, cfg,
        [&](std::size_t epoch, double value) {
            std::cout << "epoch " << epoch << " loss " << mva::format_double(value) << "\n" << std::flush;
            loss << epoch << ',' << mva::format_double(value) << '\n';
        },
        mva::worker_threads());
    close_output(loss, loss_path);
    mva::save_artifact(model_out, outcome.model);
    std::cout << "train: threshold " << mva::format_double(outcome.model.threshold) << " -> " << model_out.string()
              << "\n";
    return 0;
}

int cmd_score(const fs::path& model_path, const fs::path& data_path, const std::string& labels_path,
              const fs::path& out_dir) {
    const auto model = mva::load_artifact(model_path);
    const auto data = mva::load_features(data_path, model.preprocess);

    std::vector<std::string> groups;
    std::vector<mva::Decision> truth;
    if (!labels_path.empty()) {
        const auto rows = mva::read_labels_csv(labels_path);
        if (rows.size() != data.events()) {
            throw mva::DimensionMismatch(labels_path + " has " + std::to_string(rows.size()) + " rows for " +
                                         std::to_string(data.events()) + " events");
        }
        for (std::size_t e = 0; e < rows.size(); ++e) {
            if (rows[e].event_index != e) {
                throw mva::InvalidInput(labels_path + ": row " + std::to_string(e + 1) + " has event_index " +
                                        std::to_string(rows[e].event_index));
            }
            groups.push_back(rows[e].group_label);
            truth.push_back(rows[e].damaged ? mva::Decision::damage : mva::Decision::healthy);
        }
    }
    const auto outcome = mva::score_dataset(model, data, groups, truth, mva::worker_threads());

    ensure_directory(out_dir);
    mva::write_report_csv(out_dir / "scores.csv", outcome.report);

    const fs::path loc_path = out_dir / "localization.csv";
    auto loc = open_output(loc_path);
    loc << "event_index,sensor_label,knn_score,rank\n";
    std::size_t flagged = 0;
    for (std::size_t e = 0; e < outcome.report.events.size(); ++e) {
        if (outcome.report.events[e].decision != mva::Decision::damage) {
            continue;
        }
        ++flagged;
        for (const auto& s : outcome.localization[e].ranked) {
            loc << e << ',' << s.sensor_label << ',' << mva::format_double(s.knn_score) << ',' << s.rank << '\n';
        }
    }
    close_output(loc, loc_path);

    const fs::path sev_path = out_dir / "severity.csv";
    auto sev = open_output(sev_path);
    sev << "group_label,mean_nll,count\n";
    for (const auto& p : outcome.report.severity) {
        sev << p.group << ',' << mva::format_double(p.mean_nll) << ',' << p.count << '\n';
    }
    close_output(sev, sev_path);

    ordered_json summary;
    summary["events"] = outcome.report.events.size();
    summary["flagged"] = flagged;
    summary["threshold"] = outcome.report.threshold;
    ordered_json per_group = ordered_json::array();
    for (const auto& p : outcome.report.severity) {
        std::size_t g_flagged = 0;
        for (const auto& ev : outcome.report.events) {
            g_flagged += ev.group_label == p.group && ev.decision == mva::Decision::damage;
        }
        per_group.push_back({{"group_label", p.group}, {"count", p.count}, {"flagged", g_flagged},
                             {"mean_nll", p.mean_nll}});
    }
    summary["groups"] = per_group;
    std::cout << "score: " << flagged << " of " << outcome.report.events.size() << " events flagged (threshold "
              << mva::format_double(outcome.report.threshold) << ")\n";
    for (const auto& g : per_group) {
        std::cout << "  " << g["group_label"].get<std::string>() << ": " << g["flagged"].get<std::size_t>() << "/"
                  << g["count"].get<std::size_t>() << " flagged, mean NLL "
                  << mva::format_double(g["mean_nll"].get<double>()) << "\n";
    }
    if (outcome.metrics) {
        const auto& m = *outcome.metrics;
        summary["metrics"] = {{"tp", m.true_positive}, {"fp", m.false_positive}, {"fn", m.false_negative},
                              {"tn", m.true_negative}, {"precision", m.precision}, {"recall", m.recall},
                              {"f_score", m.f_score}};
        std::cout << "  precision " << mva::format_double(m.precision) << " recall " << mva::format_double(m.recall)
                  << " F " << mva::format_double(m.f_score) << "\n";
    }
    const fs::path sum_path = out_dir / "summary.json";
    auto sum = open_output(sum_path);
    sum << summary.dump(2) << '\n';
    close_output(sum, sum_path);
    return 0;
}

int cmd_evaluate(const fs::path& report_path, const fs::path& labels_path, const std::string& out_path) {
    const auto report = mva::read_report_csv(report_path);
    if (report.empty()) {
        throw mva::InvalidInput(report_path.string() + " contains no events");
    }
    const auto labels = mva::read_labels_csv(labels_path);
    if (labels.size() != report.size()) {
        throw mva::DimensionMismatch(report_path.string() + " has " + std::to_string(report.size()) + " events but " +
                                     labels_path.string() + " has " + std::to_string(labels.size()));
    }
    std::vector<mva::Decision> decisions;
    std::vector<mva::Decision> truth;
    for (std::size_t e = 0; e < report.size(); ++e) {
        if (report[e].event_index != labels[e].event_index) {
            throw mva::InvalidInput("row " + std::to_string(e + 1) + ": report event_index " +
                                    std::to_string(report[e].event_index) + " differs from label event_index " +
                                    std::to_string(labels[e].event_index));
        }
        decisions.push_back(report[e].decision);
        truth.push_back(labels[e].damaged ? mva::Decision::damage : mva::Decision::healthy);
    }
    const auto m = mva::evaluate(decisions, truth);
    std::cout << "tp " << m.true_positive << " fp " << m.false_positive << " fn " << m.false_negative << " tn "
              << m.true_negative << "\n"
              << "precision " << mva::format_double(m.precision) << "\n"
              << "recall " << mva::format_double(m.recall) << "\n"
              << "f_score " << mva::format_double(m.f_score) << "\n";
    if (!out_path.empty()) {
        ordered_json j{{"tp", m.true_positive}, {"fp", m.false_positive}, {"fn", m.false_negative},
                       {"tn", m.true_negative}, {"precision", m.precision}, {"recall", m.recall},
                       {"f_score", m.f_score}};
        auto out = open_output(out_path);
        out << j.dump(2) << '\n';
        close_output(out, out_path);
    }
    return 0;
}

int cmd_config(std::optional<std::uint64_t> seed, const std::string& out_path) {
    auto cfg = mva::RunConfig::defaults();
    if (seed) {
        cfg.seed = *seed;
        cfg.finalize();
    }
    const auto text = mva::render_config(cfg);
    if (out_path.empty()) {
        std::cout << text;
    } else {
        auto out = open_output(out_path);
        out << text;
        close_output(out, out_path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-way variational autoencoder damage detection and localization"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::string model;
    std::string labels;
    std::string report;
    bool raw = false;

    auto* synth = app.add_subcommand("synth", "Write the synthetic benchmark tensors and ground-truth labels");
    synth->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
    synth->add_option("--seed", seed, "Override the configured seed");
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_flag("--raw", raw, "Also write per-event raw signal CSV files");

    auto* train = app.add_subcommand("train", "Fit a model on healthy data and write the model file");
    train->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "Override the configured seed");
    train->add_option("--data", data, "Training tensor (.mwt) or directory of event CSV files")->required();
    train->add_option("--out", out, "Model file to write")->required();

    auto* score = app.add_subcommand("score", "Score events and write detection and localization reports");
    score->add_option("--model", model, "Model file")->required();
    score->add_option("--data", data, "Tensor (.mwt) or directory of event CSV files")->required();
    score->add_option("--labels", labels, "Optional ground-truth labels CSV (enables metrics)");
    score->add_option("--out", out, "Output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Precision, recall and F-score of a report against labels");
    evaluate->add_option("--report", report, "scores.csv written by score")->required();
    evaluate->add_option("--labels", labels, "labels.csv written by synth")->required();
    evaluate->add_option("--out", out, "Optional JSON file for the metrics");

    auto* config = app.add_subcommand("config", "Print a complete configuration with default values");
    config->add_option("--seed", seed, "Seed to write");
    config->add_option("--out", out, "Write to this file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*synth) {
            return cmd_synth(config_path, seed, out, raw);
        }
        if (*train) {
            return cmd_train(config_path, seed, data, out);
        }
        if (*score) {
            return cmd_score(model, data, labels, out);
        }
        if (*evaluate) {
            return cmd_evaluate(report, labels, out);
        }
        return cmd_config(seed, out);
    } catch (const mva::ValidationError& e) {
        std::cerr << "mva: error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const mva::RuntimeFailure& e) {
        std::cerr << "mva: error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "mva: error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
