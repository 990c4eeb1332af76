#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "mva/byte_io.hpp"
#include "mva/common.hpp"
#include "mva/multiway.hpp"
#include "mva/synthetic.hpp"
#include "oracles.hpp"

using namespace mva;

namespace {

MultiwayTensor indexed_tensor(std::size_t n, std::size_t m, std::size_t t) {
    MultiwayTensor x(n, m, t, default_sensor_labels(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < t; ++k) x.at(i, j, k) = 100.0 * i + 10.0 * j + k;
    return x;
}

}  // namespace

TEST_CASE("normalize_signal examples") {
    const std::vector<double> flat{5, 5, 5};
    CHECK(normalize_signal(flat) == std::vector<double>{0, 0, 0});

    const std::vector<double> two{0, 2};
    const auto out = normalize_signal(two);
    CHECK(out[0] == doctest::Approx(-1.0));
    CHECK(out[1] == doctest::Approx(1.0));

    const std::vector<double> bad{1.0, std::nan("")};
    CHECK_THROWS_AS(normalize_signal(bad), InvalidInput);
    CHECK_THROWS_AS(normalize_signal(std::vector<double>{}), InvalidInput);
}

TEST_CASE("normalize_signal is idempotent and scale/shift invariant") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd(2.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(17 + trial);
        for (auto& v : x) v = nd(gen);
        const auto once = normalize_signal(x);
        const auto twice = normalize_signal(once);
        std::vector<double> affine(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) affine[i] = 4.5 * x[i] - 7.0;
        const auto moved = normalize_signal(affine);
        double mean = 0, var = 0;
        for (double v : once) mean += v;
        mean /= static_cast<double>(once.size());
        for (double v : once) var += (v - mean) * (v - mean);
        var /= static_cast<double>(once.size());
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-12));
            CHECK(moved[i] == doctest::Approx(once[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("fft_features examples") {
    const std::vector<double> c(16, -2.5);
    const auto dc = fft_features(c, 3);
    CHECK(dc[0] == doctest::Approx(16 * 2.5));
    CHECK(std::abs(dc[1]) < 1e-12);
    CHECK(std::abs(dc[2]) < 1e-12);

    std::vector<double> cosine(64);
    for (std::size_t t = 0; t < 64; ++t) cosine[t] = std::cos(2 * std::numbers::pi * 4 * t / 64.0);
    const auto mags = fft_features(cosine, 8);
    const auto ref = oracle::naive_dft_magnitudes(cosine, 8);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(mags[k] == doctest::Approx(k == 4 ? 32.0 : 0.0).scale(1.0).epsilon(1e-9));
        CHECK(std::abs(mags[k] - ref[k]) < 1e-9);
    }

    const std::vector<double> zeros(32, 0.0);
    for (double v : fft_features(zeros, 16)) CHECK(v == 0.0);

    CHECK_THROWS_AS(fft_features(zeros, 17), InvalidConfig);
    CHECK_THROWS_AS(fft_features(zeros, 0), InvalidConfig);
}

TEST_CASE("fft_features matches the naive DFT on random signals") {
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<int> len(2, 256);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> x(static_cast<std::size_t>(len(gen)));
        for (auto& v : x) v = nd(gen);
        const std::size_t bins = x.size() / 2;
        const auto got = fft_features(x, bins);
        const auto ref = oracle::naive_dft_magnitudes(x, bins);
        double worst = 0, scale = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            worst = std::max(worst, std::abs(got[k] - ref[k]));
            scale = std::max(scale, std::abs(ref[k]));
        }
        CHECK(worst / scale < 1e-9);
    }
}

TEST_CASE("build_tensor shapes and errors") {
    RawDataset d;
    d.sensor_labels = {"a", "b"};
    for (int e = 0; e < 3; ++e) {
        RawEvent ev;
        for (int s = 0; s < 2; ++s) {
            std::vector<double> sig(8);
            for (std::size_t t = 0; t < 8; ++t) sig[t] = std::sin(0.3 * (t + 1) * (s + 1) + e);
            ev.signals.push_back(sig);
        }
        d.events.push_back(ev);
    }
    PreprocessConfig cfg;
    cfg.keep_bins = 4;
    const auto t = build_tensor(d, cfg);
    CHECK(t.sensors() == 2);
    CHECK(t.features() == 4);
    CHECK(t.events() == 3);
    const auto direct = fft_features(normalize_signal(d.events[1].signals[0]), 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(t.at(0, j, 1) == direct[j]);

    cfg.keep_bins = 5;
    CHECK_THROWS_AS(build_tensor(d, cfg), InvalidConfig);
    cfg.keep_bins = 4;

    RawDataset ragged = d;
    ragged.events[2].signals[1].pop_back();
    CHECK_THROWS_AS(build_tensor(ragged, cfg), InvalidInput);

    RawDataset missing = d;
    missing.events[0].signals.pop_back();
    CHECK_THROWS_AS(build_tensor(missing, cfg), InvalidInput);

    RawDataset empty;
    empty.sensor_labels = {"a"};
    CHECK_THROWS_AS(build_tensor(empty, cfg), InvalidInput);
}

TEST_CASE("pair_difference halves the sensor rows") {
    RawDataset d;
    for (int s = 0; s < 24; ++s) d.sensor_labels.push_back("A" + std::to_string(s));
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    for (int e = 0; e < 2; ++e) {
        RawEvent ev;
        for (int s = 0; s < 24; ++s) {
            std::vector<double> sig(32);
            for (auto& v : sig) v = nd(gen);
            ev.signals.push_back(sig);
        }
        d.events.push_back(ev);
    }
    PreprocessConfig cfg;
    cfg.keep_bins = 16;
    cfg.pair_difference = true;
    const auto t = build_tensor(d, cfg);
    CHECK(t.sensors() == 12);
    CHECK(t.sensor_labels()[0] == "A0-A1");
    CHECK(t.sensor_labels()[11] == "A22-A23");
    std::vector<double> diff(32);
    for (std::size_t k = 0; k < 32; ++k) diff[k] = d.events[1].signals[4][k] - d.events[1].signals[5][k];
    const auto ref = fft_features(normalize_signal(diff), 16);
    for (std::size_t j = 0; j < 16; ++j) CHECK(t.at(2, j, 1) == ref[j]);

    d.sensor_labels.pop_back();
    for (auto& ev : d.events) ev.signals.pop_back();
    CHECK_THROWS_AS(build_tensor(d, cfg), InvalidInput);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(MultiwayTensor(0, 1, 1, std::vector<std::string>{}), InvalidInput);
    CHECK_THROWS_AS(MultiwayTensor(2, 1, 1, std::vector<std::string>{"x", "x"}), InvalidInput);
    CHECK_THROWS_AS(MultiwayTensor(1, 1, 2, std::vector<double>{1.0}, {"x"}), InvalidInput);
    CHECK_THROWS_AS(MultiwayTensor(1, 1, 1, std::vector<double>{INFINITY}, {"x"}), InvalidInput);
}

TEST_CASE("frontal slices") {
    MultiwayTensor t(3, 4, 5, default_sensor_labels(3));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t k = 0; k < 5; ++k) t.at(i, j, k) = static_cast<double>(k);
    const auto s = frontal_slice(t, 1);
    CHECK(s.flat.size() == 12);
    CHECK((s.matrix().array() == 1.0).all());
    CHECK_THROWS_AS(frontal_slice(t, 5), IndexError);

    const auto x = indexed_tensor(3, 4, 5);
    MultiwayTensor copy(3, 4, 5, default_sensor_labels(3));
    for (std::size_t k = 0; k < 5; ++k) {
        const auto sl = frontal_slice(x, k);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(sl.flat[static_cast<Eigen::Index>(i * 4 + j)] == sl.matrix()(static_cast<Eigen::Index>(i),
                                                                                  static_cast<Eigen::Index>(j)));
                CHECK(sl.at(i, j) == x.at(i, j, k));
            }
        embed_slice(copy, sl);
    }
    CHECK(std::equal(copy.values().begin(), copy.values().end(), x.values().begin()));
}

TEST_CASE("split_events partitions") {
    const auto x = indexed_tensor(2, 2, 125);
    const auto [train, test] = split_events(x, 0.8, 9);
    CHECK(train.events() == 100);
    CHECK(test.events() == 25);
    std::set<double> seen;
    for (const auto* part : {&train, &test})
        for (std::size_t k = 0; k < part->events(); ++k) seen.insert(part->at(0, 0, k));
    CHECK(seen.size() == 125);

    const auto again = split_events(x, 0.8, 9);
    CHECK(std::equal(again.first.values().begin(), again.first.values().end(), train.values().begin()));

    const auto tiny = split_events(indexed_tensor(1, 1, 2), 0.5, 1);
    CHECK(tiny.first.events() == 1);
    CHECK(tiny.second.events() == 1);
    CHECK_THROWS_AS(split_events(x, 1.0, 1), InvalidConfig);
    CHECK_THROWS_AS(split_events(x, 0.0, 1), InvalidConfig);
}

TEST_CASE("feature scaler") {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> nd(3.0, 2.0);
    MultiwayTensor x(2, 3, 40, default_sensor_labels(2));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 40; ++k) x.at(i, j, k) = j == 2 ? 7.0 : nd(gen);
    const auto sc = FeatureScaler::fit(x);
    const auto z = sc.apply(x);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double m = 0, v = 0;
            for (std::size_t k = 0; k < 40; ++k) m += z.at(i, j, k);
            m /= 40;
            for (std::size_t k = 0; k < 40; ++k) v += (z.at(i, j, k) - m) * (z.at(i, j, k) - m);
            v /= 40;
            CHECK(std::abs(m) < 1e-12);
            CHECK(v == doctest::Approx(j == 2 ? 0.0 : 1.0).epsilon(1e-10));
        }
    CHECK(sc.stddev[2] == 1.0);  // constant feature keeps unit scale

    const auto slice = sc.apply(frontal_slice(x, 3));
    for (Eigen::Index f = 0; f < slice.flat.size(); ++f) {
        CHECK(slice.flat[f] == frontal_slice(z, 3).flat[f]);
    }
    CHECK_THROWS_AS(sc.apply(indexed_tensor(2, 4, 1)), DimensionMismatch);
}

TEST_CASE("leave-one-out scaling equals refitting without the event") {
    std::mt19937_64 gen(8);
    std::gamma_distribution<double> gd(2.0, 1.5);
    MultiwayTensor x(2, 2, 12, default_sensor_labels(2));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 12; ++k) x.at(i, j, k) = gd(gen);
    const auto sc = FeatureScaler::fit(x);
    const auto loo = sc.apply_leave_one_out(x);
    for (std::size_t k = 0; k < 12; ++k) {
        std::vector<std::size_t> rest;
        for (std::size_t r = 0; r < 12; ++r)
            if (r != k) rest.push_back(r);
        const auto refit = FeatureScaler::fit(x.select_events(rest));
        const auto expect = refit.apply(frontal_slice(x, k));
        const auto got = frontal_slice(loo, k);
        for (Eigen::Index f = 0; f < got.flat.size(); ++f) {
            CHECK(got.flat[f] == doctest::Approx(expect.flat[f]).epsilon(1e-10));
        }
    }
}

TEST_CASE("tensor file round trip") {
    oracle::TempDir dir("tensor");
    const auto x = indexed_tensor(3, 2, 4);
    write_tensor(dir.path() / "x.mwt", x);
    const auto back = read_tensor(dir.path() / "x.mwt");
    CHECK(back.sensors() == 3);
    CHECK(back.features() == 2);
    CHECK(back.events() == 4);
    CHECK(back.sensor_labels() == x.sensor_labels());
    CHECK(std::equal(back.values().begin(), back.values().end(), x.values().begin()));

    auto bytes = read_file_bytes(dir.path() / "x.mwt");
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MWT1");
    bytes[0] = 'X';
    write_file_bytes(dir.path() / "bad.mwt", bytes);
    CHECK_THROWS_AS(read_tensor(dir.path() / "bad.mwt"), FormatError);
    bytes[0] = 'M';
    bytes.resize(30);
    write_file_bytes(dir.path() / "short.mwt", bytes);
    CHECK_THROWS_AS(read_tensor(dir.path() / "short.mwt"), FormatError);
    CHECK_THROWS_AS(read_tensor(dir.path() / "missing.mwt"), IoError);
}

TEST_CASE("event CSV round trip") {
    oracle::TempDir dir("csv");
    RawEvent ev;
    ev.signals = {{0.1, -2.5, 3e-7}, {1.0, 2.0, 3.0}};
    write_event_csv(dir.path() / "event_0.csv", {"left", "right"}, ev);
    write_event_csv(dir.path() / "event_1.csv", {"left", "right"}, ev);
    const auto one = read_event_csv(dir.path() / "event_0.csv");
    CHECK(one.sensor_labels == std::vector<std::string>{"left", "right"});
    CHECK(one.events.size() == 1);
    CHECK(one.events[0].signals == ev.signals);
    const auto all = read_event_directory(dir.path());
    CHECK(all.events.size() == 2);
}
