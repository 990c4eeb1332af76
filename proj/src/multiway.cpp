#include "mva/multiway.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include <fftw3.h>

#include "mva/byte_io.hpp"
#include "mva/common.hpp"

namespace mva {

namespace {

// FFTW's planner is not re-entrant; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Below this a feature column is treated as constant and left unscaled.
constexpr double kMinFeatureStd = 1e-9;

}  // namespace

void PreprocessConfig::validate(std::size_t signal_length) const {
    if (keep_bins == 0) {
        throw InvalidConfig("preprocess.keep_bins must be >= 1");
    }
    if (2 * keep_bins > signal_length) {
        throw InvalidConfig("preprocess.keep_bins = " + std::to_string(keep_bins) +
                            " exceeds half the signal length " + std::to_string(signal_length));
    }
}

MultiwayTensor::MultiwayTensor(std::size_t sensors, std::size_t features, std::size_t events,
                               std::vector<std::string> sensor_labels)
    : MultiwayTensor(sensors, features, events, std::vector<double>(sensors * features * events, 0.0),
                     std::move(sensor_labels)) {}

MultiwayTensor::MultiwayTensor(std::size_t sensors, std::size_t features, std::size_t events,
                               std::vector<double> values, std::vector<std::string> sensor_labels)
    : sensors_(sensors),
      features_(features),
      events_(events),
      values_(std::move(values)),
      labels_(std::move(sensor_labels)) {
    check_invariants();
}

void MultiwayTensor::check_invariants() const {
    if (sensors_ == 0 || features_ == 0 || events_ == 0) {
        throw InvalidInput("tensor dimensions must be positive, got (" + std::to_string(sensors_) + ", " +
                           std::to_string(features_) + ", " + std::to_string(events_) + ")");
    }
    if (values_.size() != sensors_ * features_ * events_) {
        throw InvalidInput("tensor holds " + std::to_string(values_.size()) + " values, expected " +
                           std::to_string(sensors_ * features_ * events_));
    }
    for (std::size_t idx = 0; idx < values_.size(); ++idx) {
        if (!std::isfinite(values_[idx])) {
            throw InvalidInput("tensor value at flat index " + std::to_string(idx) + " is not finite");
        }
    }
    if (labels_.size() != sensors_) {
        throw InvalidInput("tensor has " + std::to_string(labels_.size()) + " sensor labels for " +
                           std::to_string(sensors_) + " sensors");
    }
    std::set<std::string> unique(labels_.begin(), labels_.end());
    if (unique.size() != labels_.size()) {
        throw InvalidInput("sensor labels must be unique");
    }
}

MultiwayTensor MultiwayTensor::select_events(std::span<const std::size_t> indices) const {
    if (indices.empty()) {
        throw InvalidInput("cannot select zero events");
    }
    std::vector<double> out(sensors_ * features_ * indices.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sensors_; ++i) {
        for (std::size_t j = 0; j < features_; ++j) {
            for (std::size_t idx : indices) {
                if (idx >= events_) {
                    throw IndexError("event index " + std::to_string(idx) + " out of range [0, " +
                                     std::to_string(events_) + ")");
                }
                out[pos++] = at(i, j, idx);
            }
        }
    }
    return {sensors_, features_, indices.size(), std::move(out), labels_};
}

std::vector<double> normalize_signal(std::span<const double> raw) {
    if (raw.empty()) {
        throw InvalidInput("cannot normalize an empty signal");
    }
    for (std::size_t t = 0; t < raw.size(); ++t) {
        if (!std::isfinite(raw[t])) {
            throw InvalidInput("signal sample " + std::to_string(t) + " is not finite");
        }
    }
    const double n = static_cast<double>(raw.size());
    const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : raw) {
        ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / n);
    std::vector<double> out(raw.size(), 0.0);
    if (sd == 0.0) {
        return out;
    }
    for (std::size_t t = 0; t < raw.size(); ++t) {
        out[t] = (raw[t] - mean) / sd;
    }
    return out;
}

std::vector<double> fft_features(std::span<const double> signal, std::size_t keep_bins) {
    if (keep_bins == 0 || 2 * keep_bins > signal.size()) {
        throw InvalidConfig("keep_bins = " + std::to_string(keep_bins) +
                            " exceeds the available bins of a length-" + std::to_string(signal.size()) +
                            " signal");
    }
    const int n = static_cast<int>(signal.size());
    std::vector<double> in(signal.begin(), signal.end());
    std::vector<std::complex<double>> out(signal.size() / 2 + 1);
    fftw_plan plan = nullptr;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE);
    }
    // FFTW_ESTIMATE does not touch the input buffer while planning.
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    std::vector<double> mags(keep_bins);
    for (std::size_t k = 0; k < keep_bins; ++k) {
        mags[k] = std::abs(out[k]);
    }
    return mags;
}

MultiwayTensor build_tensor(const RawDataset& data, const PreprocessConfig& cfg) {
    if (data.events.empty()) {
        throw InvalidInput("cannot build a tensor from an empty event list");
    }
    const std::size_t raw_sensors = data.sensor_labels.size();
    if (raw_sensors == 0) {
        throw InvalidInput("dataset has no sensors");
    }
    const std::size_t length = data.events.front().signals.empty() ? 0 : data.events.front().signals.front().size();
    for (std::size_t e = 0; e < data.events.size(); ++e) {
        const auto& ev = data.events[e];
        if (ev.signals.size() != raw_sensors) {
            throw InvalidInput("event " + std::to_string(e) + " has " + std::to_string(ev.signals.size()) +
                               " signals, expected " + std::to_string(raw_sensors));
        }
        for (std::size_t s = 0; s < raw_sensors; ++s) {
            if (ev.signals[s].size() != length) {
                throw InvalidInput("event " + std::to_string(e) + " sensor " + data.sensor_labels[s] +
                                   " has " + std::to_string(ev.signals[s].size()) + " samples, expected " +
                                   std::to_string(length));
            }
        }
    }
    cfg.validate(length);

    std::vector<std::string> labels;
    if (cfg.pair_difference) {
        if (raw_sensors % 2 != 0) {
            throw InvalidInput("pair_difference needs an even sensor count, got " + std::to_string(raw_sensors));
        }
        for (std::size_t s = 0; s < raw_sensors; s += 2) {
            labels.push_back(data.sensor_labels[s] + "-" + data.sensor_labels[s + 1]);
        }
    } else {
        labels = data.sensor_labels;
    }

    const std::size_t n = labels.size();
    const std::size_t m = cfg.keep_bins;
    const std::size_t events = data.events.size();
    MultiwayTensor t(n, m, events, std::move(labels));
    std::vector<double> diff(length);
    for (std::size_t e = 0; e < events; ++e) {
        const auto& sig = data.events[e].signals;
        for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> source;
            if (cfg.pair_difference) {
                for (std::size_t k = 0; k < length; ++k) {
                    diff[k] = sig[2 * i][k] - sig[2 * i + 1][k];
                }
                source = diff;
            } else {
                source = sig[i];
            }
            const auto feats = fft_features(normalize_signal(source), m);
            for (std::size_t j = 0; j < m; ++j) {
                t.at(i, j, e) = feats[j];
            }
        }
    }
    return t;
}

EventSlice frontal_slice(const MultiwayTensor& t, std::size_t event) {
    if (event >= t.events()) {
        throw IndexError("event index " + std::to_string(event) + " out of range [0, " +
                         std::to_string(t.events()) + ")");
    }
    EventSlice s;
    s.sensors = t.sensors();
    s.features = t.features();
    s.event_index = event;
    s.flat.resize(static_cast<Eigen::Index>(t.slice_size()));
    for (std::size_t i = 0; i < t.sensors(); ++i) {
        for (std::size_t j = 0; j < t.features(); ++j) {
            s.flat[static_cast<Eigen::Index>(i * t.features() + j)] = t.at(i, j, event);
        }
    }
    return s;
}

void embed_slice(MultiwayTensor& t, const EventSlice& slice) {
    if (slice.sensors != t.sensors() || slice.features != t.features()) {
        throw DimensionMismatch("slice shape does not match tensor shape");
    }
    if (slice.event_index >= t.events()) {
        throw IndexError("event index " + std::to_string(slice.event_index) + " out of range");
    }
    for (std::size_t i = 0; i < t.sensors(); ++i) {
        for (std::size_t j = 0; j < t.features(); ++j) {
            t.at(i, j, slice.event_index) = slice.at(i, j);
        }
    }
}

std::vector<EventSlice> all_slices(const MultiwayTensor& t) {
    std::vector<EventSlice> out;
    out.reserve(t.events());
    for (std::size_t k = 0; k < t.events(); ++k) {
        out.push_back(frontal_slice(t, k));
    }
    return out;
}

std::pair<MultiwayTensor, MultiwayTensor> split_events(const MultiwayTensor& t, double train_fraction,
                                                       std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidConfig("train_fraction must lie in (0, 1)");
    }
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(t.events())));
    if (n_train == 0 || n_train == t.events()) {
        throw InvalidConfig("train_fraction leaves an empty partition for " + std::to_string(t.events()) +
                            " events");
    }
    std::vector<std::size_t> order(t.events());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {t.select_events(train), t.select_events(test)};
}

FeatureScaler FeatureScaler::fit(const MultiwayTensor& train) {
    FeatureScaler s;
    const std::size_t d = train.slice_size();
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 1.0);
    const double count = static_cast<double>(train.events());
    for (std::size_t i = 0; i < train.sensors(); ++i) {
        for (std::size_t j = 0; j < train.features(); ++j) {
            const std::size_t f = i * train.features() + j;
            double sum = 0.0;
            for (std::size_t k = 0; k < train.events(); ++k) {
                sum += train.at(i, j, k);
            }
            const double mu = sum / count;
            double ss = 0.0;
            for (std::size_t k = 0; k < train.events(); ++k) {
                const double r = train.at(i, j, k) - mu;
                ss += r * r;
            }
            const double sd = std::sqrt(ss / count);
            s.mean[f] = mu;
            s.stddev[f] = sd < kMinFeatureStd ? 1.0 : sd;
        }
    }
    return s;
}

EventSlice FeatureScaler::apply(const EventSlice& slice) const {
    if (static_cast<std::size_t>(slice.flat.size()) != mean.size()) {
        throw DimensionMismatch("scaler fitted on " + std::to_string(mean.size()) +
                                " features, slice has " + std::to_string(slice.flat.size()));
    }
    EventSlice out = slice;
    for (Eigen::Index f = 0; f < out.flat.size(); ++f) {
        const auto u = static_cast<std::size_t>(f);
        out.flat[f] = (slice.flat[f] - mean[u]) / stddev[u];
    }
    return out;
}

MultiwayTensor FeatureScaler::apply(const MultiwayTensor& t) const {
    if (t.slice_size() != mean.size()) {
        throw DimensionMismatch("scaler fitted on " + std::to_string(mean.size()) +
                                " features, tensor slices have " + std::to_string(t.slice_size()));
    }
    MultiwayTensor out = t;
    for (std::size_t i = 0; i < t.sensors(); ++i) {
        for (std::size_t j = 0; j < t.features(); ++j) {
            const std::size_t f = i * t.features() + j;
            for (std::size_t k = 0; k < t.events(); ++k) {
                out.at(i, j, k) = (t.at(i, j, k) - mean[f]) / stddev[f];
            }
        }
    }
    return out;
}

void write_tensor(const std::filesystem::path& path, const MultiwayTensor& t) {
    ByteWriter w;
    w.chars("MWT1");
    w.u32(static_cast<std::uint32_t>(t.sensors()));
    w.u32(static_cast<std::uint32_t>(t.features()));
    w.u32(static_cast<std::uint32_t>(t.events()));
    w.f64s(t.values());
    for (const auto& label : t.sensor_labels()) {
        w.chars(label);
        w.u8('\n');
    }
    write_file_bytes(path, w.data());
}

MultiwayTensor read_tensor(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    if (r.fixed(4) != "MWT1") {
        throw FormatError(path.string() + ": not a multiway tensor file (bad magic)");
    }
    const std::size_t n = r.u32();
    const std::size_t m = r.u32();
    const std::size_t t = r.u32();
    auto values = r.f64s(n * m * t);
    const auto tail = r.take_bytes(r.remaining());
    std::vector<std::string> labels;
    std::string current;
    for (std::uint8_t c : tail) {
        if (c == '\n') {
            labels.push_back(current);
            current.clear();
        } else {
            current.push_back(static_cast<char>(c));
        }
    }
    if (!current.empty()) {
        labels.push_back(current);
    }
    return {n, m, t, std::move(values), std::move(labels)};
}

void write_event_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                     const RawEvent& event) {
    if (event.signals.size() != labels.size()) {
        throw InvalidInput("event has " + std::to_string(event.signals.size()) + " signals for " +
                           std::to_string(labels.size()) + " labels");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    for (std::size_t s = 0; s < labels.size(); ++s) {
        out << (s ? "," : "") << labels[s];
    }
    out << '\n';
    const std::size_t length = labels.empty() ? 0 : event.signals.front().size();
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t s = 0; s < labels.size(); ++s) {
            out << (s ? "," : "") << format_double(event.signals[s][t]);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

RawDataset read_event_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    RawDataset ds;
    std::string line;
    if (!std::getline(in, line)) {
        throw InvalidInput(path.string() + ": missing header row");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            ds.sensor_labels.push_back(cell);
        }
    }
    RawEvent ev;
    ev.signals.resize(ds.sensor_labels.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= ds.sensor_labels.size()) {
                throw InvalidInput(path.string() + ": row " + std::to_string(row) + " has too many columns");
            }
            const double v = parse_double(cell, path.string() + " row " + std::to_string(row));
            if (!std::isfinite(v)) {
                throw InvalidInput(path.string() + ": row " + std::to_string(row) + " column " +
                                   ds.sensor_labels[col] + " is not finite");
            }
            ev.signals[col++].push_back(v);
        }
        if (col != ds.sensor_labels.size()) {
            throw InvalidInput(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(col) +
                               " columns, expected " + std::to_string(ds.sensor_labels.size()));
        }
    }
    ds.events.push_back(std::move(ev));
    return ds;
}

RawDataset read_event_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError(dir.string() + " is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw InvalidInput(dir.string() + " contains no .csv event files");
    }
    RawDataset all;
    for (const auto& f : files) {
        auto one = read_event_csv(f);
        if (all.sensor_labels.empty()) {
            all.sensor_labels = one.sensor_labels;
        } else if (one.sensor_labels != all.sensor_labels) {
            throw InvalidInput(f.string() + ": sensor labels differ from the first event file");
        }
        all.events.push_back(std::move(one.events.front()));
    }
    return all;
}

MultiwayTensor FeatureScaler::apply_leave_one_out(const MultiwayTensor& train) const {
    if (train.slice_size() != mean.size()) {
        throw DimensionMismatch("scaler fitted on " + std::to_string(mean.size()) +
                                " features, tensor slices have " + std::to_string(train.slice_size()));
    }
    const std::size_t t = train.events();
    if (t < 2) {
        throw InvalidInput("leave-one-out standardization needs at least two events");
    }
    const double n = static_cast<double>(t);
    MultiwayTensor out = train;
    for (std::size_t i = 0; i < train.sensors(); ++i) {
        for (std::size_t j = 0; j < train.features(); ++j) {
            double mu = 0.0;
            for (std::size_t k = 0; k < t; ++k) {
                mu += train.at(i, j, k);
            }
            mu /= n;
            double ss = 0.0;
            for (std::size_t k = 0; k < t; ++k) {
                const double r = train.at(i, j, k) - mu;
                ss += r * r;
            }
            for (std::size_t k = 0; k < t; ++k) {
                const double d = train.at(i, j, k) - mu;
                // Sum of squares about the reduced mean drops by d^2 * T/(T-1).
                const double ss_k = std::max(0.0, ss - d * d * n / (n - 1.0));
                const double mu_k = mu - d / (n - 1.0);
                const double sd_k = std::sqrt(ss_k / (n - 1.0));
                out.at(i, j, k) = (train.at(i, j, k) - mu_k) / (sd_k < kMinFeatureStd ? 1.0 : sd_k);
            }
        }
    }
    return out;
}

}  // namespace mva
