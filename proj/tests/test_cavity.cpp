#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "treeloc/cavity.hpp"

using namespace treeloc;

namespace {

// Independent oracle for the deep-localized (t -> 0) limit: the increments
// follow the directed-polymer velocity on the tree with i.i.d. weights
// w = |t/(V-E)|,  v* = log t + min_b (log K + log E|1/V|^b) / b.
// For uniform disorder on [-1,1] at E = 0, E|1/V|^b = 1/(1-b) exactly.
double frozen_velocity_uniform(int K, double t) {
    double best = 1e300;
    for (int i = 1; i < 999; ++i) {
        const double b = i / 1000.0;
        const double h = (std::log(static_cast<double>(K)) - std::log1p(-b)) / b;
        best = std::fmin(best, h);
    }
    return std::log(t) + best;
}

double run_mean_increment(const DisorderDensity& d, const ModelParams& p, std::size_t N, int R,
                          std::uint64_t seed) {
    const auto run = free_energy_run(d, p, N, R, seed);
    return run.estimate + std::log(static_cast<double>(p.K));
}

} // namespace

TEST_CASE("deep-localized limit follows the directed-polymer velocity", "[cavity]") {
    const auto u = DisorderDensity::uniform(1.0);
    const int K = 2;
    const double t = 1e-3;
    const double v_star = frozen_velocity_uniform(K, t);
    const auto params = ModelParams::from_t(K, t, 0.0, 1.0);
    const double v_small = run_mean_increment(u, params, 10000, 1500, 101);
    const double v_large = run_mean_increment(u, params, 100000, 1500, 102);
    // finite pools truncate the front: the measured velocity sits below the
    // infinite-population value and increases with N
    CHECK(v_large < v_star);
    CHECK(v_small < v_large);
    CHECK(v_large > v_star - 0.25);
    CHECK(v_small > v_star - 0.40);
}

TEST_CASE("pool moments match the closed-form Cauchy law", "[cavity]") {
    // the (Gamma, y) pool's Gamma marginal at the fixed point has the
    // closed-form Cauchy law; compare a sub-linear absolute moment
    const auto c = DisorderDensity::cauchy(1.0);
    const auto params = ModelParams::from_t(4, 0.1, 0.0, 1.0);
    const double s = 0.9;
    const auto fp = cauchy_fixed_point(params, 1.0);

    // quadrature oracle: E|t Gamma|^s over Cauchy(m*, sigma*) via the
    // substitution gamma = m + sigma tan(theta)
    const int Q = 400000;
    double oracle = 0.0;
    for (int i = 0; i < Q; ++i) {
        const double th = -M_PI / 2 + M_PI * (i + 0.5) / Q;
        const double gam = fp.gamma_pool.location + fp.gamma_pool.scale * std::tan(th);
        oracle += std::pow(std::abs(params.t * gam), s) / Q;
    }

    auto pool = init_pool(c, params, 1000000, 2024);
    for (int sw = 0; sw < 30; ++sw) pool = sweep_pool(pool, c);
    const int nbatch = 16;
    std::vector<double> batch(nbatch, 0.0);
    const std::size_t per = pool.samples.size() / nbatch;
    for (int b = 0; b < nbatch; ++b) {
        for (std::size_t i = b * per; i < (b + 1) * per; ++i)
            batch[b] += std::pow(std::abs(params.t * pool.samples[i]), s);
        batch[b] /= static_cast<double>(per);
    }
    double mean = 0.0, var = 0.0;
    for (double v : batch) mean += v / nbatch;
    for (double v : batch) var += (v - mean) * (v - mean) / (nbatch - 1);
    const double se = std::sqrt(var / nbatch);
    const double lhs = std::log(params.K * mean);
    const double rhs = std::log(params.K * oracle);
    CHECK(std::abs(lhs - rhs) <= 3.0 * se / mean + 0.02);
}

TEST_CASE("reported free energy sits at -log K at the known critical coupling", "[cavity]") {
    const auto u = DisorderDensity::uniform(1.0);
    const auto params = ModelParams::from_g(2, 0.153, 0.0, 1.0);
    const auto run = free_energy_run(u, params, 100000, 5000, 71);
    CHECK(std::abs(run.estimate - (-std::log(2.0))) < 0.02);
}

TEST_CASE("free energy is increasing in t", "[cavity]") {
    const auto u = DisorderDensity::uniform(1.0);
    std::vector<double> phis, ses;
    for (double g : {0.10, 0.125, 0.15, 0.175, 0.20}) {
        const auto params = ModelParams::from_g(2, g, 0.0, 1.0);
        std::vector<double> vals;
        for (int k = 0; k < 4; ++k)
            vals.push_back(free_energy_run(u, params, 20000, 800, mix_key(31, k)).estimate);
        double m = 0.0, v = 0.0;
        for (double x : vals) m += x / vals.size();
        for (double x : vals) v += (x - m) * (x - m) / (vals.size() - 1);
        phis.push_back(m);
        ses.push_back(std::sqrt(v / vals.size()));
    }
    for (std::size_t i = 1; i < phis.size(); ++i) {
        const double comb = std::hypot(ses[i], ses[i - 1]);
        CHECK(phis[i] - phis[i - 1] > -2.0 * comb);
    }
}

TEST_CASE("cross-seed dispersion shrinks like 1/sqrt(R)", "[cavity]") {
    const auto u = DisorderDensity::uniform(1.0);
    const auto params = ModelParams::from_g(2, 0.153, 0.0, 1.0);
    auto sd_at = [&](int R) {
        std::vector<double> vals;
        for (int k = 0; k < 8; ++k)
            vals.push_back(free_energy_run(u, params, 20000, R, mix_key(555, k, R)).estimate);
        double m = 0.0, v = 0.0;
        for (double x : vals) m += x / vals.size();
        for (double x : vals) v += (x - m) * (x - m) / (vals.size() - 1);
        return std::sqrt(v);
    };
    const double sd1 = sd_at(500);
    const double sd4 = sd_at(2000);
    // quadrupling R should halve the dispersion; allow generous slack for
    // the 8-sample variance estimate
    CHECK(sd4 < 0.75 * sd1);
    CHECK(sd4 > 0.25 * sd1);
}

TEST_CASE("s dependence at the critical coupling is one-sided", "[cavity]") {
    // at the transition the infinite-size free energy is s-independent on
    // [1,2]; at finite pool size the s = 1.5 estimate freezes lower, so the
    // implementable check is directional
    const auto u = DisorderDensity::uniform(1.0);
    std::vector<double> phi1, phi15;
    for (int k = 0; k < 4; ++k) {
        phi1.push_back(free_energy_run(u, ModelParams::from_g(2, 0.153, 0.0, 1.0), 30000, 1200,
                                       mix_key(808, k)).estimate);
        phi15.push_back(free_energy_run(u, ModelParams::from_g(2, 0.153, 0.0, 1.5), 30000, 1200,
                                        mix_key(809, k)).estimate);
    }
    auto mean_se = [](const std::vector<double>& v) {
        double m = 0.0, var = 0.0;
        for (double x : v) m += x / v.size();
        for (double x : v) var += (x - m) * (x - m) / (v.size() - 1);
        return std::pair<double, double>{m, std::sqrt(var / v.size())};
    };
    const auto [m1, se1] = mean_se(phi1);
    const auto [m15, se15] = mean_se(phi15);
    CHECK(m15 <= m1 + 3.0 * std::hypot(se1, se15));
}

TEST_CASE("run bookkeeping", "[cavity]") {
    const auto u = DisorderDensity::uniform(1.0);
    const auto params = ModelParams::from_g(2, 0.2, 0.0, 1.0);
    const auto run = free_energy_run(u, params, 10000, 100, 5);
    REQUIRE(static_cast<int>(run.increments.size()) == 100);
    for (double v : run.increments) REQUIRE(std::isfinite(v));
    // estimate equals the mean of increments past burn-in, minus log K
    double acc = 0.0;
    for (int r = 10; r < 100; ++r) acc += run.increments[r];
    CHECK(run.estimate == Catch::Approx(acc / 90.0 - std::log(2.0)).margin(1e-12));
    CHECK(phi_at_checkpoint(run, 50) ==
          Catch::Approx(phi_from_increments(run.increments, 50, 2)).margin(1e-15));
    CHECK_THROWS(free_energy_run(u, ModelParams::from_g(2, 0.2, 0.0, 0.5), 10000, 100, 5));
    CHECK_THROWS(free_energy_run(u, params, 100, 100, 5));
}

TEST_CASE("R-stage fit recovers exact synthetic data", "[cavity]") {
    std::vector<std::pair<double, double>> pts;
    for (double R : {1000.0, 2000.0, 5000.0}) pts.push_back({R, 0.7 + 3.0 / R});
    const auto fit = fit_R(pts);
    CHECK(fit.phi_inf == Catch::Approx(0.7).margin(1e-12));
    CHECK(fit.slope == Catch::Approx(3.0).margin(1e-9));
    CHECK(fit.residual_rms < 1e-12);
}

TEST_CASE("R-stage fit under noise stays within propagated error", "[cavity]") {
    Rng rng(1234);
    const double sigma = 1e-3;
    std::vector<std::pair<double, double>> pts;
    std::vector<double> ones, invr;
    for (double R : {1000.0, 1500.0, 2500.0, 4000.0, 8000.0}) {
        // Box-Muller normal from two uniforms
        const double u1 = rng.uniform01_open(), u2 = rng.uniform01();
        const double noise = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        pts.push_back({R, 0.42 - 5.0 / R + sigma * noise});
        ones.push_back(1.0);
        invr.push_back(1.0 / R);
    }
    const auto fit = fit_R(pts);
    const auto ls = least_squares({ones, invr}, {0, 0, 0, 0, 0});
    const double se_phi = sigma * std::sqrt(ls.inv_gram_diag[0]);
    CHECK(std::abs(fit.phi_inf - 0.42) <= 3.0 * se_phi);
}

TEST_CASE("R-stage fit of constant data", "[cavity]") {
    std::vector<std::pair<double, double>> pts = {{500.0, 1.25}, {1000.0, 1.25}, {2000.0, 1.25}};
    const auto fit = fit_R(pts);
    CHECK(fit.phi_inf == Catch::Approx(1.25).margin(1e-12));
    CHECK(fit.slope == Catch::Approx(0.0).margin(1e-9));
    CHECK_THROWS(fit_R({{1000.0, 0.1}, {1000.0, 0.2}, {1000.0, 0.3}}));
}

TEST_CASE("N-stage fit recovers exact synthetic data", "[cavity]") {
    const double phi = -0.69, b = 0.5, c = -1.2;
    std::vector<std::pair<double, double>> pts;
    for (double N : {1e4, 1e5, 1e6, 4e6}) {
        const double l = 1.0 / std::log(N);
        pts.push_back({N, phi + b * l + c * l * l});
    }
    const auto fit = fit_N(pts);
    CHECK(fit.phi_inf == Catch::Approx(phi).margin(1e-10));
    CHECK(fit.slope == Catch::Approx(b).margin(1e-8));
    CHECK(fit.curvature == Catch::Approx(c).margin(1e-7));
}

TEST_CASE("N-stage fit under noise stays within propagated error", "[cavity]") {
    Rng rng(4321);
    const double sigma = 1e-3;
    std::vector<std::pair<double, double>> pts;
    std::vector<double> ones, il, il2;
    for (double N : {1e4, 1e5, 1e6, 4e6, 2e7}) {
        const double u1 = rng.uniform01_open(), u2 = rng.uniform01();
        const double noise = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        const double l = 1.0 / std::log(N);
        pts.push_back({N, -0.7 + 0.4 * l - 0.9 * l * l + sigma * noise});
        ones.push_back(1.0);
        il.push_back(l);
        il2.push_back(l * l);
    }
    const auto fit = fit_N(pts);
    const auto ls = least_squares({ones, il, il2}, {0, 0, 0, 0, 0});
    const double se_phi = sigma * std::sqrt(ls.inv_gram_diag[0]);
    CHECK(std::abs(fit.phi_inf - (-0.7)) <= 5.0 * se_phi);
}

TEST_CASE("N-stage fit rejects bad designs and handles constants", "[cavity]") {
    std::vector<std::pair<double, double>> flat;
    for (double N : {1e4, 1e5, 1e6, 4e6}) flat.push_back({N, 0.31});
    const auto fit = fit_N(flat);
    CHECK(fit.phi_inf == Catch::Approx(0.31).margin(1e-9));
    CHECK(fit.slope == Catch::Approx(0.0).margin(1e-7));
    CHECK(fit.curvature == Catch::Approx(0.0).margin(1e-6));
    CHECK_THROWS(fit_N({{1e4, 0.1}, {2e4, 0.1}, {3e4, 0.1}, {4e4, 0.1}}));   // < 2 decades
    CHECK_THROWS(fit_N({{1e4, 0.1}, {1e5, 0.1}, {1e6, 0.1}}));               // < 4 points
}

TEST_CASE("runs are reproducible and thread-count independent", "[cavity]") {
    const auto u = DisorderDensity::uniform(1.0);
    const auto params = ModelParams::from_g(2, 0.16, 0.0, 1.0);
    const auto r1 = free_energy_run(u, params, 10000, 50, 9, 0.1, 1);
    const auto r2 = free_energy_run(u, params, 10000, 50, 9, 0.1, 4);
    REQUIRE(r1.increments == r2.increments);
}
