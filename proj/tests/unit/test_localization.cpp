#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mva/common.hpp"
#include "mva/localization.hpp"
#include "mva/synthetic.hpp"

using namespace mva;

namespace {

RowMatrix random_profile(std::size_t n, std::size_t p, std::mt19937_64& gen) {
    std::gamma_distribution<double> gd(2.0, 0.5);
    RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gd(gen);
    return m;
}

SensorIdentityBaseline random_baseline(std::size_t n, std::size_t p, std::size_t events, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<RowMatrix> profiles;
    for (std::size_t e = 0; e < events; ++e) profiles.push_back(random_profile(n, p, gen));
    return baseline_from_profiles(default_sensor_labels(n), profiles);
}

std::vector<LocationScore> named(const std::vector<double>& values) {
    std::vector<LocationScore> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({"sensor" + std::to_string(i + 1), values[i], 0});
    return out;
}

}  // namespace

TEST_CASE("residual profiles follow the sensor-major blocks") {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(12);
    const auto zero = residual_profile(r, 3, 4, ProfileWidth::per_feature);
    CHECK(zero.isZero(0.0));
    r.segment(4, 4) << 1, 2, 3, 6;
    const auto per = residual_profile(r, 3, 4, ProfileWidth::per_feature);
    CHECK(per.row(0).isZero(0.0));
    CHECK(per.row(2).isZero(0.0));
    CHECK(per(1, 3) == 6.0);
    const auto mean = residual_profile(r, 3, 4, ProfileWidth::mean);
    CHECK(mean.cols() == 1);
    CHECK(mean(1, 0) == 3.0);
    CHECK(mean(0, 0) == 0.0);
    CHECK_THROWS_AS(residual_profile(r, 5, 4, ProfileWidth::mean), DimensionMismatch);
}

TEST_CASE("perfect reconstruction gives an all-zero profile") {
    VaeTopology topo;
    topo.input_width = 6;
    topo.encoder_hidden = {4};
    topo.latent_width = 2;
    topo.decoder_hidden = {4};
    auto p = VaeParams::zeros(topo);
    EventSlice s;
    s.sensors = 2;
    s.features = 3;
    s.flat.resize(6);
    s.flat << 1, -2, 3, 0.5, 0, 4;
    p.decoder_head.mu.bias = s.flat;
    CHECK(per_sensor_errors(p, s, 5, 1).isZero(0.0));
    CHECK(per_sensor_errors(p, s, 5, 1, ProfileWidth::mean).isZero(0.0));

    MultiwayTensor t(2, 3, 1, default_sensor_labels(2));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) t.at(i, j, 0) = s.at(i, j);
    LocalizationConfig cfg;
    cfg.k = 1;
    const auto b = build_identity_baseline(p, t, cfg);
    CHECK(b.training_events() == 1);
    CHECK(b.summary.isZero(0.0));
    for (const auto& sc : knn_location_scores(b, p, s, 1, 3, 9)) CHECK(sc.knn_score == 0.0);
}

TEST_CASE("baseline from a single training event equals its profile") {
    std::mt19937_64 gen(1);
    const auto prof = random_profile(4, 3, gen);
    const std::vector<RowMatrix> one{prof};
    const auto b = baseline_from_profiles(default_sensor_labels(4), one);
    CHECK(b.summary == prof);
    CHECK(b.profile_width == 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(b.profiles[i].row(0) == prof.row(static_cast<Eigen::Index>(i)));
    CHECK_THROWS_AS(baseline_from_profiles(default_sensor_labels(4), {}), InvalidInput);
}

TEST_CASE("baseline summary is the mean profile and entries stay non-negative") {
    std::mt19937_64 gen(2);
    std::vector<RowMatrix> profiles;
    RowMatrix sum = RowMatrix::Zero(5, 2);
    for (int e = 0; e < 9; ++e) {
        profiles.push_back(random_profile(5, 2, gen));
        sum += profiles.back();
    }
    const auto b = baseline_from_profiles(default_sensor_labels(5), profiles);
    CHECK((b.summary - sum / 9.0).cwiseAbs().maxCoeff() < 1e-14);
    for (const auto& m : b.profiles) CHECK((m.array() >= 0).all());
}

TEST_CASE("k-NN scores against a brute-force oracle") {
    const auto b = random_baseline(4, 3, 12, 3);
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto prof = random_profile(4, 3, gen);
        for (std::size_t k : {1, 3, 12}) {
            const auto scores = knn_scores_for_profile(b, prof, k);
            for (std::size_t i = 0; i < 4; ++i) {
                std::vector<double> d;
                for (std::size_t e = 0; e < 12; ++e) {
                    double s = 0;
                    for (Eigen::Index j = 0; j < 3; ++j) {
                        const double diff = b.profiles[i](static_cast<Eigen::Index>(e), j) -
                                            prof(static_cast<Eigen::Index>(i), j);
                        s += diff * diff;
                    }
                    d.push_back(std::sqrt(s));
                }
                std::sort(d.begin(), d.end());
                double mean = 0;
                for (std::size_t r = 0; r < k; ++r) mean += d[r];
                mean /= static_cast<double>(k);
                CHECK(scores[i].knn_score == doctest::Approx(mean).epsilon(1e-13));
                CHECK(scores[i].knn_score >= 0.0);
            }
            std::set<std::size_t> ranks;
            for (const auto& s : scores) ranks.insert(s.rank);
            CHECK(ranks == std::set<std::size_t>{1, 2, 3, 4});
            const auto top = std::max_element(scores.begin(), scores.end(), [](const auto& a, const auto& c) {
                return a.knn_score < c.knn_score;
            });
            CHECK(top->rank == 1);
        }
    }
    CHECK_THROWS_AS(knn_scores_for_profile(b, random_profile(4, 3, gen), 0), InvalidConfig);
    CHECK_THROWS_AS(knn_scores_for_profile(b, random_profile(4, 3, gen), 13), InvalidConfig);
    CHECK_THROWS_AS(knn_scores_for_profile(b, random_profile(3, 3, gen), 1), DimensionMismatch);
}

TEST_CASE("k-NN score is zero exactly when k training rows coincide") {
    std::mt19937_64 gen(5);
    const auto a = random_profile(3, 2, gen);
    const auto c = random_profile(3, 2, gen);
    const std::vector<RowMatrix> profiles{a, a, c};
    const auto b = baseline_from_profiles(default_sensor_labels(3), profiles);
    for (const auto& s : knn_scores_for_profile(b, a, 2)) CHECK(s.knn_score == 0.0);
    for (const auto& s : knn_scores_for_profile(b, a, 3)) CHECK(s.knn_score > 0.0);
    for (const auto& s : knn_scores_for_profile(b, c, 1)) CHECK(s.knn_score == 0.0);
    for (const auto& s : knn_scores_for_profile(b, c, 2)) CHECK(s.knn_score > 0.0);
}

TEST_CASE("k-NN scores are permutation equivariant") {
    std::mt19937_64 gen(6);
    std::vector<RowMatrix> profiles;
    for (int e = 0; e < 8; ++e) profiles.push_back(random_profile(5, 2, gen));
    const auto probe = random_profile(5, 2, gen);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    auto permute = [&](const RowMatrix& m) {
        RowMatrix out(m.rows(), m.cols());
        for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(perm[i]));
        return out;
    };
    const auto labels = default_sensor_labels(5);
    std::vector<std::string> permuted_labels;
    std::vector<RowMatrix> permuted;
    for (auto i : perm) permuted_labels.push_back(labels[i]);
    for (const auto& p : profiles) permuted.push_back(permute(p));
    const auto base = knn_scores_for_profile(baseline_from_profiles(labels, profiles), probe, 3);
    const auto moved = knn_scores_for_profile(baseline_from_profiles(permuted_labels, permuted), permute(probe), 3);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(moved[i].sensor_label == base[perm[i]].sensor_label);
        CHECK(moved[i].knn_score == base[perm[i]].knn_score);
        CHECK(moved[i].rank == base[perm[i]].rank);
    }
}

TEST_CASE("localization report order") {
    const auto report = localization_report(named({0, 5, 1}));
    CHECK(report[0].sensor_label == "sensor2");
    CHECK(report[1].sensor_label == "sensor3");
    CHECK(report[2].sensor_label == "sensor1");

    std::vector<LocationScore> tied{{"b", 2.0, 0}, {"c", 2.0, 0}, {"a", 2.0, 0}, {"d", 3.0, 0}};
    const auto t = localization_report(tied);
    CHECK(t[0].sensor_label == "d");
    CHECK(t[1].sensor_label == "a");
    CHECK(t[2].sensor_label == "b");
    CHECK(t[3].sensor_label == "c");
    CHECK_THROWS_AS(localization_report({}), InvalidInput);

    std::ostringstream out;
    auto ranked = localization_report(named({0, 5, 1}));
    for (std::size_t r = 0; r < ranked.size(); ++r) ranked[r].rank = r + 1;
    write_localization_csv(out, ranked);
    CHECK(out.str() == "sensor_label,knn_score,rank\nsensor2,5,1\nsensor3,1,2\nsensor1,0,3\n");
}

TEST_CASE("localization configuration") {
    LocalizationConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.k = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    CHECK(parse_profile_width("mean") == ProfileWidth::mean);
    CHECK_THROWS_AS(parse_profile_width("max"), InvalidConfig);
}
