#pragma once

// Independent reference implementations used as test oracles.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// O(N^2) DFT magnitudes of the first `bins` coefficients.
inline std::vector<double> naive_dft_magnitudes(const std::vector<double>& x, std::size_t bins) {
    const double n = static_cast<double>(x.size());
    std::vector<double> out(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        std::complex<long double> acc = 0;
        for (std::size_t t = 0; t < x.size(); ++t) {
            const long double angle = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(k) *
                                      static_cast<long double>(t) / static_cast<long double>(n);
            acc += static_cast<long double>(x[t]) * std::complex<long double>(std::cos(angle), std::sin(angle));
        }
        out[k] = static_cast<double>(std::abs(acc));
    }
    return out;
}

/// Diagonal-Gaussian log density.
inline double log_normal_pdf(double x, double mu, double sigma) {
    const double r = (x - mu) / sigma;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma) - 0.5 * r * r;
}

/// Monte Carlo estimate of KL(N(mu, sigma^2) || N(0, 1)) summed over
/// dimensions, E_q[ln q(z) - ln p(z)], with antithetic pairs (eps, -eps).
inline double kl_monte_carlo(const std::vector<double>& mu, const std::vector<double>& sigma, std::size_t samples,
                             std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    double total = 0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
        long double acc = 0;
        for (std::size_t s = 0; s < samples / 2; ++s) {
            const double e = nd(gen);
            for (double sign : {1.0, -1.0}) {
                const double z = mu[d] + sigma[d] * sign * e;
                acc += log_normal_pdf(z, mu[d], sigma[d]) - log_normal_pdf(z, 0.0, 1.0);
            }
        }
        total += static_cast<double>(acc / static_cast<long double>(2 * (samples / 2)));
    }
    return total;
}

/// Welch's t statistic for two samples.
inline double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    auto moments = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair{m, s / static_cast<double>(v.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    return (ma - mb) / std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
}

/// Relative error ||a - b|| / max(||a||, ||b||, floor).
template <class A, class B>
double relative_error(const A& a, const B& b, double floor = 1e-12) {
    const double diff = (a - b).norm();
    return diff / std::max({a.norm(), b.norm(), floor});
}

/// Scratch directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("mva_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace oracle
