#include "mva/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "mva/byte_io.hpp"
#include "mva/common.hpp"

namespace mva {

namespace {

struct KeySpec {
    ConfigSection section;
    const char* key;
};

constexpr KeySpec kSchema[] = {
    {ConfigSection::preprocess, "keep_bins"},
    {ConfigSection::preprocess, "pair_difference"},
    {ConfigSection::train, "learning_rate"},
    {ConfigSection::train, "epochs"},
    {ConfigSection::train, "mc_samples"},
    {ConfigSection::train, "latent_width"},
    {ConfigSection::train, "encoder_hidden"},
    {ConfigSection::train, "decoder_hidden"},
    {ConfigSection::train, "activation"},
    {ConfigSection::train, "early_stop"},
    {ConfigSection::detection, "mc_samples"},
    {ConfigSection::detection, "threshold_quantile"},
    {ConfigSection::detection, "calibration_folds"},
    {ConfigSection::localization, "k"},
    {ConfigSection::localization, "profile"},
    {ConfigSection::synth, "n_sensors"},
    {ConfigSection::synth, "signal_length"},
    {ConfigSection::synth, "n_train_events"},
    {ConfigSection::synth, "noise_std"},
    {ConfigSection::synth, "mode_bins"},
    {ConfigSection::synth, "mode_amplitudes"},
};

constexpr ConfigSection kAllSections[] = {ConfigSection::preprocess, ConfigSection::train, ConfigSection::detection,
                                          ConfigSection::localization, ConfigSection::synth};

using Values = std::vector<std::string>;

std::string field(ConfigSection s, std::string_view key) {
    return std::string(to_string(s)) + "." + std::string(key);
}

const std::string& single(const Values& v, const std::string& name) {
    if (v.size() != 1) {
        throw InvalidConfig(name + ": expected a single value, got " + std::to_string(v.size()));
    }
    return v.front();
}

std::uint64_t to_count(const std::string& s, const std::string& name) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw InvalidConfig(name + ": '" + s + "' is not a non-negative integer");
    }
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw InvalidConfig(name + ": '" + s + "' is out of range");
    }
}

double to_real(const std::string& s, const std::string& name) {
    try {
        return parse_double(s, name);
    } catch (const InvalidInput& e) {
        throw InvalidConfig(e.what());
    }
}

bool to_bool(const std::string& s, const std::string& name) {
    if (s == "true") {
        return true;
    }
    if (s == "false") {
        return false;
    }
    throw InvalidConfig(name + ": '" + s + "' is not true or false");
}

std::vector<std::size_t> to_counts(const Values& v, const std::string& name) {
    std::vector<std::size_t> out;
    for (const auto& s : v) {
        out.push_back(static_cast<std::size_t>(to_count(s, name)));
    }
    return out;
}

std::vector<double> to_reals(const Values& v, const std::string& name) {
    std::vector<double> out;
    for (const auto& s : v) {
        out.push_back(to_real(s, name));
    }
    return out;
}

template <class T>
std::string render_list(const std::vector<T>& v) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if constexpr (std::is_floating_point_v<T>) {
            os << (i ? ", " : "") << format_double(v[i]);
        } else {
            os << (i ? ", " : "") << v[i];
        }
    }
    os << ']';
    return os.str();
}

void apply(RunConfig& cfg, ConfigSection section, const std::string& key, const Values& v) {
    const std::string name = field(section, key);
    switch (section) {
        case ConfigSection::preprocess:
            if (key == "keep_bins") {
                cfg.preprocess.keep_bins = to_count(single(v, name), name);
            } else if (key == "pair_difference") {
                cfg.preprocess.pair_difference = to_bool(single(v, name), name);
            }
            break;
        case ConfigSection::train:
            if (key == "learning_rate") {
                cfg.train.learning_rate = to_real(single(v, name), name);
            } else if (key == "epochs") {
                cfg.train.epochs = to_count(single(v, name), name);
            } else if (key == "mc_samples") {
                cfg.train.mc_samples = to_count(single(v, name), name);
            } else if (key == "latent_width") {
                cfg.train.latent_width = to_count(single(v, name), name);
            } else if (key == "encoder_hidden") {
                cfg.train.encoder_hidden = to_counts(v, name);
            } else if (key == "decoder_hidden") {
                cfg.train.decoder_hidden = to_counts(v, name);
            } else if (key == "activation") {
                try {
                    cfg.train.activation = parse_activation(single(v, name));
                } catch (const InvalidConfig& e) {
                    throw InvalidConfig(name + ": " + e.what());
                }
            } else if (key == "early_stop") {
                cfg.train.early_stop = to_bool(single(v, name), name);
            }
            break;
        case ConfigSection::detection:
            if (key == "mc_samples") {
                cfg.detection.mc_samples = to_count(single(v, name), name);
            } else if (key == "threshold_quantile") {
                cfg.detection.threshold_quantile = to_real(single(v, name), name);
            } else if (key == "calibration_folds") {
                cfg.detection.calibration_folds = to_count(single(v, name), name);
            }
            break;
        case ConfigSection::localization:
            if (key == "k") {
                cfg.localization.k = to_count(single(v, name), name);
            } else if (key == "profile") {
                try {
                    cfg.localization.profile = parse_profile_width(single(v, name));
                } catch (const InvalidConfig& e) {
                    throw InvalidConfig(name + ": " + e.what());
                }
            }
            break;
        case ConfigSection::synth:
            if (key == "n_sensors") {
                cfg.synth.n_sensors = to_count(single(v, name), name);
            } else if (key == "signal_length") {
                cfg.synth.signal_length = to_count(single(v, name), name);
            } else if (key == "n_train_events") {
                cfg.synth.n_events = to_count(single(v, name), name);
            } else if (key == "noise_std") {
                cfg.synth.noise_std = to_real(single(v, name), name);
            } else if (key == "mode_bins" || key == "mode_amplitudes") {
                const auto vals = to_reals(v, name);
                if (cfg.synth.base_modes.size() != vals.size()) {
                    cfg.synth.base_modes.resize(vals.size());
                }
                for (std::size_t i = 0; i < vals.size(); ++i) {
                    (key == "mode_bins" ? cfg.synth.base_modes[i].bin : cfg.synth.base_modes[i].amplitude) = vals[i];
                }
            }
            break;
    }
}

}  // namespace

const char* to_string(ConfigSection s) {
    switch (s) {
        case ConfigSection::preprocess:
            return "preprocess";
        case ConfigSection::train:
            return "train";
        case ConfigSection::detection:
            return "detection";
        case ConfigSection::localization:
            return "localization";
        case ConfigSection::synth:
            return "synth";
    }
    return "?";
}

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.finalize();
    return cfg;
}

void RunConfig::finalize() {
    train.seed = mix_seed(seed, 1);
    detection.seed = mix_seed(seed, 2);
    synth.seed = seed;
    localization.seed = detection.seed;
    localization.mc_samples = detection.mc_samples;
}

void RunConfig::validate() const {
    train.validate();
    detection.validate();
    localization.validate();
    if (preprocess.keep_bins < 1) {
        throw InvalidConfig("preprocess.keep_bins must be >= 1");
    }
    synth.validate();
    if (preprocess.pair_difference && synth.n_sensors % 2 != 0) {
        throw InvalidConfig("preprocess.pair_difference needs an even synth.n_sensors");
    }
}

RunConfig parse_config(std::istream& in, const std::vector<ConfigSection>& required, std::string_view source) {
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw InvalidConfig(std::string(source) + ": " + e.what());
    }

    std::map<std::string, Values> seen;
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") {
            continue;
        }
        if (item.parents.size() > 1) {
            throw InvalidConfig(std::string(source) + ": nested section '" + item.fullname() + "' is not supported");
        }
        const std::string full = item.fullname();
        if (seen.count(full)) {
            throw InvalidConfig(std::string(source) + ": field '" + full + "' is set twice");
        }
        seen[full] = item.inputs;
    }

    std::set<std::string> known{"seed"};
    for (const auto& k : kSchema) {
        known.insert(field(k.section, k.key));
    }
    for (const auto& [name, _] : seen) {
        if (!known.count(name)) {
            throw InvalidConfig(std::string(source) + ": unknown field '" + name + "'");
        }
    }

    RunConfig cfg = RunConfig::defaults();
    auto it = seen.find("seed");
    if (it == seen.end()) {
        throw InvalidConfig(std::string(source) + ": missing field 'seed'");
    }
    cfg.seed = to_count(single(it->second, "seed"), "seed");

    for (ConfigSection section : kAllSections) {
        const bool needed = std::find(required.begin(), required.end(), section) != required.end();
        for (const auto& k : kSchema) {
            if (k.section != section) {
                continue;
            }
            const std::string name = field(section, k.key);
            auto f = seen.find(name);
            if (f == seen.end()) {
                if (needed) {
                    throw InvalidConfig(std::string(source) + ": missing field '" + name + "'");
                }
                continue;
            }
            apply(cfg, section, k.key, f->second);
        }
    }
    if (cfg.synth.base_modes.empty()) {
        throw InvalidConfig("synth.mode_bins: at least one mode is required");
    }
    if (seen.count("synth.mode_bins") && seen.count("synth.mode_amplitudes") &&
        seen["synth.mode_bins"].size() != seen["synth.mode_amplitudes"].size()) {
        throw InvalidConfig("synth.mode_amplitudes: length differs from synth.mode_bins");
    }
    cfg.finalize();
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<ConfigSection>& required) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidConfig("cannot read config file " + path.string());
    }
    return parse_config(in, required, path.string());
}

std::string render_config(const RunConfig& cfg) {
    std::vector<double> bins;
    std::vector<double> amps;
    for (const auto& m : cfg.synth.base_modes) {
        bins.push_back(m.bin);
        amps.push_back(m.amplitude);
    }
    std::ostringstream os;
    os << "# mva run configuration. Every key is required by the commands that\n"
       << "# read its section; module seeds are derived from `seed`.\n"
       << "seed = " << cfg.seed << "\n\n"
       << "[preprocess]\n"
       << "keep_bins = " << cfg.preprocess.keep_bins << "\n"
       << "pair_difference = " << (cfg.preprocess.pair_difference ? "true" : "false") << "\n\n"
       << "[train]\n"
       << "learning_rate = " << format_double(cfg.train.learning_rate) << "\n"
       << "epochs = " << cfg.train.epochs << "\n"
       << "mc_samples = " << cfg.train.mc_samples << "\n"
       << "latent_width = " << cfg.train.latent_width << "\n"
       << "encoder_hidden = " << render_list(cfg.train.encoder_hidden) << "\n"
       << "decoder_hidden = " << render_list(cfg.train.decoder_hidden) << "\n"
       << "activation = \"" << to_string(cfg.train.activation) << "\"\n"
       << "early_stop = " << (cfg.train.early_stop ? "true" : "false") << "\n\n"
       << "[detection]\n"
       << "mc_samples = " << cfg.detection.mc_samples << "\n"
       << "threshold_quantile = " << format_double(cfg.detection.threshold_quantile) << "\n"
       << "calibration_folds = " << cfg.detection.calibration_folds << "\n\n"
       << "[localization]\n"
       << "k = " << cfg.localization.k << "\n"
       << "profile = \"" << to_string(cfg.localization.profile) << "\"\n\n"
       << "[synth]\n"
       << "n_sensors = " << cfg.synth.n_sensors << "\n"
       << "signal_length = " << cfg.synth.signal_length << "\n"
       << "n_train_events = " << cfg.synth.n_events << "\n"
       << "noise_std = " << format_double(cfg.synth.noise_std) << "\n"
       << "mode_bins = " << render_list(bins) << "\n"
       << "mode_amplitudes = " << render_list(amps) << "\n";
    return os.str();
}

}  // namespace mva
