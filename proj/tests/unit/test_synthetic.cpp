#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "mva/common.hpp"
#include "mva/multiway.hpp"
#include "mva/synthetic.hpp"
#include "oracles.hpp"

using namespace mva;

namespace {

std::size_t dominant_bin(const std::vector<double>& signal) {
    const auto mags = oracle::naive_dft_magnitudes(signal, signal.size() / 2);
    return static_cast<std::size_t>(std::max_element(mags.begin() + 1, mags.end()) - mags.begin());
}

/// FFT magnitude of one bin for every event of one sensor.
std::vector<double> bin_column(const SyntheticDataset& d, std::size_t sensor, std::size_t bin) {
    std::vector<double> out;
    for (const auto& ev : d.raw.events) out.push_back(fft_features(normalize_signal(ev.signals[sensor]), bin + 1)[bin]);
    return out;
}

}  // namespace

TEST_CASE("generation is deterministic") {
    SyntheticSpec spec;
    spec.n_events = 5;
    spec.seed = 3;
    const auto a = generate(spec);
    const auto b = generate(spec);
    CHECK(a.raw.sensor_labels == b.raw.sensor_labels);
    for (std::size_t e = 0; e < 5; ++e) CHECK(a.raw.events[e].signals == b.raw.events[e].signals);
    spec.seed = 4;
    CHECK(generate(spec).raw.events[0].signals != a.raw.events[0].signals);
    CHECK(a.raw.sensor_labels.front() == "S1");
    CHECK(std::none_of(a.damaged.begin(), a.damaged.end(), [](bool d) { return d; }));
}

TEST_CASE("noiseless healthy spectra peak at the base modes") {
    SyntheticSpec spec;
    spec.n_events = 3;
    spec.noise_std = 1e-12;
    spec.seed = 11;
    const auto d = generate(spec);
    const double n = static_cast<double>(spec.signal_length);
    for (const auto& ev : d.raw.events) {
        for (const auto& sig : ev.signals) {
            const auto mags = oracle::naive_dft_magnitudes(sig, spec.signal_length / 2);
            std::vector<std::size_t> order(mags.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                              [&](std::size_t a, std::size_t b) { return mags[a] > mags[b]; });
            CHECK(std::set<std::size_t>(order.begin(), order.begin() + 3) == std::set<std::size_t>{3, 8, 14});
            for (const auto& m : spec.base_modes) {
                CHECK(mags[static_cast<std::size_t>(m.bin)] == doctest::Approx(m.amplitude * n / 2).epsilon(1e-9));
            }
            CHECK(dominant_bin(sig) == 3);
        }
    }
}

TEST_CASE("zero-magnitude damage is indistinguishable from healthy data") {
    SyntheticSpec spec;
    spec.n_events = 100;
    spec.seed = 21;
    const auto healthy = generate(spec);
    spec.seed = 22;
    const auto zero = generate(spec, DamageSpec{{2}, 0.0, 100, {}});
    CHECK(std::none_of(zero.damaged.begin(), zero.damaged.end(), [](bool d) { return d; }));
    // Welch tests on the mode bins of every sensor, Bonferroni-corrected to
    // family level 0.01 over 24 tests; |t| > 3.6 rejects.
    std::size_t rejected = 0;
    double worst = 0;
    for (std::size_t s = 0; s < spec.n_sensors; ++s) {
        for (const auto& m : spec.base_modes) {
            const auto bin = static_cast<std::size_t>(m.bin);
            const double t = std::abs(oracle::welch_t(bin_column(healthy, s, bin), bin_column(zero, s, bin)));
            worst = std::max(worst, t);
            rejected += t > 3.6 ? 1 : 0;
        }
    }
    INFO("largest |t| = " << worst);
    CHECK(rejected == 0);

    const auto light = generate(spec, DamageSpec{{2}, 0.15, 100, {}});
    CHECK(std::abs(oracle::welch_t(bin_column(healthy, 2, 3), bin_column(light, 2, 3))) > 3.6);
}

TEST_CASE("damage at one sensor moves only that sensor's spectrum") {
    SyntheticSpec spec;
    spec.n_events = 20;
    spec.seed = 8;
    auto healthy_spec = spec;
    const auto healthy = generate(healthy_spec, DamageSpec{{}, 0.0, 20, {}});
    const auto damaged = generate(spec, DamageSpec{{2}, 0.3, 20, {}});
    CHECK(std::all_of(damaged.damaged.begin(), damaged.damaged.end(), [](bool d) { return d; }));
    std::size_t moved = 0;
    for (std::size_t e = 0; e < 20; ++e) {
        const auto& h = healthy.raw.events[e].signals;
        const auto& d = damaged.raw.events[e].signals;
        for (std::size_t s = 0; s < spec.n_sensors; ++s) {
            if (s != 2) CHECK(h[s] == d[s]);
        }
        CHECK(dominant_bin(h[2]) == 3);
        moved += dominant_bin(d[2]) != 3 ? 1 : 0;
    }
    CHECK(moved == 20);
}

TEST_CASE("benchmark suite layout") {
    const auto suite = benchmark_suite(5);
    CHECK(suite.train.raw.events.size() == 200);
    CHECK(suite.train.raw.events[0].signals.size() == 8);
    REQUIRE(suite.tests.size() == 4);
    CHECK(suite.tests[0].label == "healthy");
    CHECK(suite.tests[0].damage.magnitude == 0.0);
    CHECK(suite.tests[1].damage.magnitude == 0.15);
    CHECK(suite.tests[2].damage.magnitude == 0.4);
    const auto& two = suite.tests[3].damage;
    REQUIRE(two.target_sensors.size() == 2);
    CHECK(two.target_sensors[0] != two.target_sensors[1]);
    CHECK(two.magnitude_at(0) < two.magnitude_at(1));
    PreprocessConfig prep;
    const auto t = build_tensor(suite.train.raw, prep);
    CHECK(t.sensors() == 8);
    CHECK(t.features() == 128);
    CHECK(t.events() == 200);
}

TEST_CASE("scenario labels round trip") {
    const auto suite = benchmark_suite(2);
    const auto rows = scenario_labels(suite.tests, suite.train.raw.sensor_labels);
    CHECK(rows.size() == 100 + 50 + 50 + 30);
    CHECK(rows[0].sites.empty());
    CHECK(rows[100].sites == std::vector<std::string>{"S3"});
    CHECK(rows.back().sites.size() == 2);
    oracle::TempDir dir("labels");
    write_labels_csv(dir.path() / "labels.csv", rows);
    const auto back = read_labels_csv(dir.path() / "labels.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].event_index == rows[i].event_index);
        CHECK(back[i].group_label == rows[i].group_label);
        CHECK(back[i].damaged == rows[i].damaged);
        CHECK(back[i].sites == rows[i].sites);
    }
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec;
    spec.noise_std = 0;
    CHECK_THROWS_AS(spec.validate(), InvalidConfig);
    spec = {};
    spec.base_modes = {{200.0, 1.0}};
    CHECK_THROWS_AS(spec.validate(), InvalidConfig);
    spec = {};
    CHECK_THROWS_AS(generate(spec, DamageSpec{{8}, 0.1, 5, {}}), InvalidConfig);
    CHECK_THROWS_AS(generate(spec, DamageSpec{{1}, -0.1, 5, {}}), InvalidConfig);
    CHECK_THROWS_AS(generate(spec, DamageSpec{{1, 1}, 0.1, 5, {}}), InvalidConfig);
}
