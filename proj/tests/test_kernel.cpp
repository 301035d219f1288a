#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "treeloc/kernel.hpp"

using namespace treeloc;

namespace {

double lambda_for(const DisorderDensity& d, int K, double t, double s, double E, int n,
                  double x_max) {
    const auto params = ModelParams::from_t(K, t, E, s);
    const auto grid = build_grid(1e-6 * t * t, x_max, n);
    const auto kern = assemble_kernel(DensitySource::bare(d), params, grid);
    const auto res = leading_eigen(kern, 1e-11, 800);
    REQUIRE(res.converged);
    return res.lambda;
}

} // namespace

TEST_CASE("grid construction", "[kernel]") {
    const auto g = build_grid(1e-4, 10.0, 64);
    REQUIRE(g.size() == 128);
    for (std::size_t i = 0; i < 64; ++i)
        CHECK(g.abscissas[i] == Catch::Approx(-g.abscissas[127 - i]).epsilon(1e-15));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.abscissas[i] > g.abscissas[i - 1]);
    double wsum = 0.0;
    for (double w : g.weights) {
        CHECK(w > 0.0);
        wsum += w;
    }
    CHECK(wsum == Catch::Approx(2.0 * (10.0 - 1e-4)).epsilon(1e-9));
    CHECK(std::abs(g.abscissas[64]) >= 1e-4);
    CHECK_THROWS(build_grid(0.0, 1.0, 64));
    CHECK_THROWS(build_grid(1e-4, 10.0, 32));
}

TEST_CASE("grid refinement changes lambda by less than a percent", "[kernel]") {
    const auto u = DisorderDensity::uniform(1.0);
    const double l64 = lambda_for(u, 2, 0.11, 1.0, 0.0, 64, 10.0);
    const double l128 = lambda_for(u, 2, 0.11, 1.0, 0.0, 128, 10.0);
    CHECK(std::abs(l128 - l64) / l64 < 0.01);
}

TEST_CASE("kernel entries match the direct formula", "[kernel]") {
    const auto c = DisorderDensity::cauchy(1.0);
    const auto params = ModelParams::from_t(2, 0.23, 0.0, 1.0);
    const auto grid = build_grid(1e-6 * params.t * params.t, 10.0, 256);
    const auto kern = assemble_kernel(DensitySource::bare(c), params, grid);
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t i = rng.index(grid.size());
        const std::size_t j = rng.index(grid.size());
        const double x = grid.abscissas[i], y = grid.abscissas[j];
        // s = 1: prefactor reduces to t/|x|
        const double direct = params.t / std::abs(x) *
                              c.density(-params.t * params.t / x - y) * grid.weights[j];
        CHECK(kern.entry(i, j) == Catch::Approx(direct).margin(1e-12));
    }
}

TEST_CASE("lambda scales linearly with the density amplitude", "[kernel]") {
    // synthetic tabulated effective density scaled by c: lambda must scale by c
    const auto params = ModelParams::from_t(2, 0.15, 0.0, 1.0);
    const auto fp = cauchy_fixed_point(params, 1.0);
    const auto grid = build_grid(1e-6 * params.t * params.t, 20.0, 400);

    auto make_eff = [&](double scale_amp) {
        EffectiveDensity eff;
        eff.z_max = 30.0;
        eff.z_linear = 2.0;
        eff.n_log = 150;
        eff.n_linear = 800;
        eff.log_step = std::log(eff.z_max / eff.z_linear) / eff.n_log;
        eff.lin_step = 2.0 * eff.z_linear / eff.n_linear;
        for (std::size_t i = 0; i <= eff.n_log; ++i)
            eff.grid.push_back(-eff.z_max * std::exp(-eff.log_step * i));
        for (std::size_t i = 1; i <= eff.n_linear; ++i)
            eff.grid.push_back(-eff.z_linear + eff.lin_step * i);
        for (std::size_t i = 1; i <= eff.n_log; ++i)
            eff.grid.push_back(eff.z_linear * std::exp(eff.log_step * i));
        for (double z : eff.grid) eff.values.push_back(scale_amp * cauchy_pdf(fp.effective, z));
        eff.tail_exp = 2.0;
        eff.tail_amp = scale_amp * fp.effective.scale / M_PI;
        return eff;
    };

    Rng rng(2718);
    for (int trial = 0; trial < 4; ++trial) {
        const double c = 0.1 + 9.9 * rng.uniform01();
        const auto k1 = assemble_kernel(DensitySource::effective(make_eff(1.0)), params, grid);
        const auto kc = assemble_kernel(DensitySource::effective(make_eff(c)), params, grid);
        const double l1 = leading_eigen(k1, 1e-11, 500).lambda;
        const double lc = leading_eigen(kc, 1e-11, 500).lambda;
        CHECK(lc == Catch::Approx(c * l1).epsilon(1e-9));
    }
}

TEST_CASE("power iteration on a diagonal-dominant test matrix", "[kernel]") {
    const std::vector<std::vector<double>> M = {{2.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
    const std::vector<double> w = {1.0, 1.0, 1.0};
    const auto res = power_iteration(
        [&](const std::vector<double>& in, std::vector<double>& out) {
            out.assign(3, 0.0);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) out[i] += M[i][j] * in[j];
        },
        3, w, 1e-12, 200);
    REQUIRE(res.converged);
    CHECK(res.lambda == Catch::Approx(2.0).epsilon(1e-10));
    CHECK(res.eigenvector[0] == Catch::Approx(1.0).epsilon(1e-8));
    CHECK(res.eigenvector[1] < 1e-8);
    CHECK(res.eigenvector[2] < 1e-8);
}

TEST_CASE("power iteration agrees with a dense eigensolver", "[kernel]") {
    // 200-point grids, several parameter sets; dense decomposition via Eigen
    Rng rng(505);
    for (int trial = 0; trial < 4; ++trial) {
        const int K = 2 + static_cast<int>(rng.index(4));
        const double g = 0.1 + 0.3 * rng.uniform01();
        const bool cauchy = trial % 2 == 0;
        const auto d = cauchy ? DisorderDensity::cauchy(1.0) : DisorderDensity::uniform(1.0);
        const auto params = ModelParams::from_g(K, g, 0.0, 1.0);
        const auto grid = build_grid(1e-6 * params.t * params.t, 10.0, 100);
        const auto kern = assemble_kernel(DensitySource::bare(d), params, grid);
        const auto res = leading_eigen(kern, 1e-13, 3000);
        REQUIRE(res.converged);

        const std::size_t n = grid.size();
        Eigen::MatrixXd M(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) M(i, j) = kern.entry(i, j);
        const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues();
        double lmax = 0.0;
        for (Eigen::Index i = 0; i < ev.size(); ++i) lmax = std::fmax(lmax, std::abs(ev(i)));
        INFO("trial " << trial << " K=" << K << " g=" << g);
        CHECK(res.lambda == Catch::Approx(lmax).epsilon(1e-8));
    }
}

TEST_CASE("domain doubling has a sub-percent effect near criticality", "[kernel]") {
    const auto u = DisorderDensity::uniform(1.0);
    const double l10 = lambda_for(u, 2, 0.11, 1.0, 0.0, 1000, 10.0);
    const double l20 = lambda_for(u, 2, 0.11, 1.0, 0.0, 1000, 20.0);
    CHECK(std::abs(l20 - l10) / l10 < 0.005);
}

TEST_CASE("lambda is increasing in t", "[kernel]") {
    const auto u = DisorderDensity::uniform(1.0);
    double prev = 0.0;
    for (double t : {0.08, 0.095, 0.11, 0.125, 0.14}) {
        const double l = lambda_for(u, 2, t, 1.0, 0.0, 500, 20.0);
        CHECK(l > prev);
        prev = l;
    }
}

TEST_CASE("grid refinement forms a Cauchy sequence in lambda", "[kernel]") {
    const auto c = DisorderDensity::cauchy(1.0);
    std::vector<double> lam;
    for (int n : {250, 500, 1000, 2000, 4000}) lam.push_back(lambda_for(c, 2, 0.23, 1.0, 0.0, n, 40.0));
    double prev_gap = 1e9;
    for (std::size_t i = 1; i < lam.size(); ++i) {
        const double gap = std::abs(lam[i] - lam[i - 1]) / lam[i - 1];
        CHECK(gap < prev_gap + 1e-12);
        prev_gap = gap;
    }
}

TEST_CASE("eigenvector is positive where rows are nonzero", "[kernel]") {
    const auto c = DisorderDensity::cauchy(1.0);
    const auto params = ModelParams::from_t(2, 0.23, 0.0, 1.0);
    const auto grid = build_grid(1e-6 * params.t * params.t, 20.0, 500);
    const auto kern = assemble_kernel(DensitySource::bare(c), params, grid);
    const auto res = leading_eigen(kern, 1e-11, 500);
    REQUIRE(res.converged);
    for (double v : res.eigenvector) CHECK(v > 0.0);
}

TEST_CASE("near-critical uniform profile is flat with a linear cutoff", "[kernel]") {
    const auto u = DisorderDensity::uniform(1.0);
    const auto params = ModelParams::from_t(2, 0.11, 0.0, 1.0);
    const auto grid = build_grid(1e-6 * params.t * params.t, 40.0, 2000);
    const auto kern = assemble_kernel(DensitySource::bare(u), params, grid);
    const auto res = leading_eigen(kern, 1e-11, 800);
    REQUIRE(res.converged);
    const auto prof = eigenvector_profile(res, grid);

    double pmin = 1e300, pmax = 0.0, ref = 0.0;
    for (const auto& [x, p] : prof) {
        if (x >= 0.02 && x <= 0.5) {
            pmin = std::fmin(pmin, p);
            pmax = std::fmax(pmax, p);
        }
        if (x > 0.0 && x <= 1.05e-3) ref = std::fmax(ref, p / (x / 1e-3));
    }
    CHECK(pmax / pmin < 1.5);
    // below x = 1e-3 the profile drops at least linearly in |x|
    for (const auto& [x, p] : prof) {
        if (x <= 0.0 || x >= 1e-3) continue;
        CHECK(p <= 2.0 * std::fmax(ref, 1e-12) * (x / 1e-3) + 1e-12);
        CHECK(std::isfinite(p));
    }
    // normalization contract: median over [0.05, 0.5] is 1
    std::vector<double> band;
    for (const auto& [x, p] : prof)
        if (x >= 0.05 && x <= 0.5) band.push_back(p);
    std::sort(band.begin(), band.end());
    CHECK(band[band.size() / 2] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("matvec is thread-count independent", "[kernel]") {
    const auto c = DisorderDensity::cauchy(1.0);
    const auto params = ModelParams::from_t(3, 0.15, 0.0, 1.0);
    const auto grid = build_grid(1e-6 * params.t * params.t, 10.0, 512);
    const auto kern = assemble_kernel(DensitySource::bare(c), params, grid);
    std::vector<double> in(grid.size());
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = 1.0 / (1.0 + static_cast<double>(i));
    std::vector<double> out1(in.size()), out4(in.size());
    kern.matvec(in, out1, 1);
    kern.matvec(in, out4, 4);
    REQUIRE(out1 == out4);
}
