#include "mva/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "mva/byte_io.hpp"
#include "mva/common.hpp"

namespace mva {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fixed phase offset of mode k at sensor i, in [0, 2 pi).
double sensor_phase(std::size_t sensor, std::size_t mode) {
    const double golden = 0.6180339887498949;
    const double frac = std::fmod(static_cast<double>((sensor + 1) * (mode + 3)) * golden, 1.0);
    return kTwoPi * frac;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (n_sensors < 1) {
        throw InvalidConfig("synth.n_sensors must be >= 1");
    }
    if (signal_length < 2) {
        throw InvalidConfig("synth.signal_length must be >= 2");
    }
    if (n_events < 1) {
        throw InvalidConfig("synth.n_events must be >= 1");
    }
    if (!(noise_std > 0.0)) {
        throw InvalidConfig("synth.noise_std must be positive");
    }
    if (base_modes.empty()) {
        throw InvalidConfig("synth needs at least one base mode");
    }
    for (const auto& m : base_modes) {
        if (!(m.bin > 0.0) || m.bin >= static_cast<double>(signal_length) / 2.0) {
            throw InvalidConfig("synth mode bin " + format_double(m.bin) + " must lie in (0, signal_length/2)");
        }
    }
}

double DamageSpec::magnitude_at(std::size_t target_position) const {
    return site_scale.empty() ? magnitude : magnitude * site_scale[target_position];
}

void DamageSpec::validate(const SyntheticSpec& spec) const {
    if (!(magnitude >= 0.0)) {
        throw InvalidConfig("damage magnitude must be >= 0");
    }
    if (n_events < 1) {
        throw InvalidConfig("damage scenario needs n_events >= 1");
    }
    std::set<std::size_t> seen;
    for (auto s : target_sensors) {
        if (s >= spec.n_sensors) {
            throw InvalidConfig("damage target sensor " + std::to_string(s) + " out of range");
        }
        if (!seen.insert(s).second) {
            throw InvalidConfig("damage target sensor " + std::to_string(s) + " listed twice");
        }
    }
    if (!site_scale.empty() && site_scale.size() != target_sensors.size()) {
        throw InvalidConfig("damage site_scale must match target_sensors in length");
    }
    for (double s : site_scale) {
        if (!(s >= 0.0)) {
            throw InvalidConfig("damage site_scale entries must be >= 0");
        }
    }
}

std::vector<std::string> default_sensor_labels(std::size_t n) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) {
        labels.push_back("S" + std::to_string(i + 1));
    }
    return labels;
}

SyntheticDataset generate(const SyntheticSpec& spec, const std::optional<DamageSpec>& damage) {
    spec.validate();
    if (damage) {
        damage->validate(spec);
    }
    std::vector<double> sensor_magnitude(spec.n_sensors, 0.0);
    if (damage) {
        for (std::size_t t = 0; t < damage->target_sensors.size(); ++t) {
            sensor_magnitude[damage->target_sensors[t]] = damage->magnitude_at(t);
        }
    }
    const bool any_damage = std::any_of(sensor_magnitude.begin(), sensor_magnitude.end(), [](double m) { return m > 0.0; });
    const std::size_t events = damage ? damage->n_events : spec.n_events;
    const double n = static_cast<double>(spec.signal_length);

    SyntheticDataset out;
    out.raw.sensor_labels = default_sensor_labels(spec.n_sensors);
    out.raw.events.reserve(events);
    out.damaged.assign(events, any_damage);
    if (damage) {
        out.target_sensors = damage->target_sensors;
    }

    Rng rng(spec.seed);
    std::vector<double> event_phase(spec.base_modes.size());
    for (std::size_t e = 0; e < events; ++e) {
        for (auto& p : event_phase) {
            p = kTwoPi * rng.uniform();
        }
        RawEvent ev;
        ev.signals.assign(spec.n_sensors, std::vector<double>(spec.signal_length, 0.0));
        for (std::size_t i = 0; i < spec.n_sensors; ++i) {
            const double shift = 1.0 + sensor_magnitude[i];
            auto& sig = ev.signals[i];
            for (std::size_t k = 0; k < spec.base_modes.size(); ++k) {
                const double freq = spec.base_modes[k].bin * shift;
                const double amp = spec.base_modes[k].amplitude * shift;
                const double phase = sensor_phase(i, k) + event_phase[k];
                for (std::size_t t = 0; t < spec.signal_length; ++t) {
                    sig[t] += amp * std::sin(kTwoPi * freq * static_cast<double>(t) / n + phase);
                }
            }
            for (auto& v : sig) {
                v += spec.noise_std * rng.normal();
            }
        }
        out.raw.events.push_back(std::move(ev));
    }
    return out;
}

BenchmarkSuite benchmark_suite(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    return benchmark_suite(spec);
}

BenchmarkSuite benchmark_suite(const SyntheticSpec& base) {
    base.validate();
    if (base.n_sensors < 5) {
        throw InvalidConfig("the benchmark suite needs at least 5 sensors for distinct damage sites");
    }
    const std::size_t n = base.n_sensors;
    BenchmarkSuite suite;
    suite.spec = base;

    SyntheticSpec train_spec = base;
    train_spec.seed = mix_seed(base.seed, 100);
    suite.train = generate(train_spec);

    struct Plan {
        const char* label;
        DamageSpec damage;
    };
    const std::size_t light_site = 2 % n;
    const std::size_t severe_site = n - 3;
    const std::vector<Plan> plans{
        {"healthy", {{}, 0.0, 100, {}}},
        {"light", {{light_site}, 0.15, 50, {}}},
        {"severe", {{severe_site}, 0.4, 50, {}}},
        {"two-site", {{0, n - 1}, 0.4, 30, {0.5, 1.0}}},
    };
    for (std::size_t s = 0; s < plans.size(); ++s) {
        SyntheticSpec spec = base;
        spec.seed = mix_seed(base.seed, 200 + s);
        suite.tests.push_back({plans[s].label, plans[s].damage, generate(spec, plans[s].damage)});
    }
    return suite;
}

std::vector<LabelRow> scenario_labels(const std::vector<Scenario>& scenarios,
                                      const std::vector<std::string>& sensor_labels) {
    std::vector<LabelRow> rows;
    for (const auto& sc : scenarios) {
        std::vector<std::string> sites;
        for (std::size_t t = 0; t < sc.damage.target_sensors.size(); ++t) {
            if (sc.damage.magnitude_at(t) > 0.0) {
                sites.push_back(sensor_labels.at(sc.damage.target_sensors[t]));
            }
        }
        for (bool d : sc.data.damaged) {
            rows.push_back({rows.size(), sc.label, d, d ? sites : std::vector<std::string>{}});
        }
    }
    return rows;
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<LabelRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "event_index,group_label,label,sites\n";
    for (const auto& r : rows) {
        out << r.event_index << ',' << r.group_label << ',' << (r.damaged ? "damage" : "healthy") << ',';
        for (std::size_t s = 0; s < r.sites.size(); ++s) {
            out << (s ? ";" : "") << r.sites[s];
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("event_index,group_label,label", 0) != 0) {
        throw FormatError(path.string() + ": missing labels header");
    }
    std::vector<LabelRow> rows;
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
        if (line.back() == ',') {
            cells.emplace_back();
        }
        if (cells.size() < 3 || cells.size() > 4) {
            throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has " +
                              std::to_string(cells.size()) + " columns");
        }
        LabelRow r;
        r.event_index = static_cast<std::size_t>(parse_double(cells[0], path.string() + " line " + std::to_string(lineno)));
        r.group_label = cells[1];
        if (cells[2] != "damage" && cells[2] != "healthy") {
            throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has unknown label '" + cells[2] + "'");
        }
        r.damaged = cells[2] == "damage";
        if (cells.size() == 4 && !cells[3].empty()) {
            std::stringstream sites(cells[3]);
            std::string site;
            while (std::getline(sites, site, ';')) {
                r.sites.push_back(site);
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace mva
