#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "treeloc/disorder.hpp"
#include "treeloc/linalg.hpp"
#include "treeloc/rde.hpp"

namespace treeloc {

// One quenched free-energy run: a pool of (Gamma, y) pairs is swept R times;
// y values are the normalized partial partition functions of the directed
// sum over tree paths, renormalized by their pool mean each sweep. The
// per-sweep log normalizers are the increments; their average minus log K is
// the reported free energy, so the localization criterion reads
// phi = -log K.
struct FreeEnergyRun {
    ModelParams params;
    std::size_t pool_size = 0;
    int sweeps = 0;
    std::vector<double> increments;  // delta phi_r, r = 1..R
    double estimate = 0.0;           // mean over (burn_in, R] minus log K
    int burn_in = 0;
    std::uint64_t seed = 0;
};

inline double phi_from_increments(const std::vector<double>& inc, int R, int K,
                                  double burn_frac = 0.1) {
    if (R <= 0 || R > static_cast<int>(inc.size()))
        throw std::invalid_argument("phi_from_increments: bad checkpoint");
    const int burn = static_cast<int>(R * burn_frac);
    if (burn >= R) throw std::invalid_argument("phi_from_increments: burn-in swallows the run");
    double acc = 0.0;
    for (int r = burn; r < R; ++r) acc += inc[r];
    return acc / static_cast<double>(R - burn) - std::log(static_cast<double>(K));
}

inline FreeEnergyRun free_energy_run(const DisorderDensity& d, const ModelParams& params,
                                     std::size_t N, int R, std::uint64_t seed,
                                     double burn_frac = 0.1, int threads = 1) {
    if (!(params.s >= 1.0 && params.s <= 2.0))
        throw std::invalid_argument("free_energy_run: s must lie in [1,2]");
    if (N < 10000) throw std::invalid_argument("free_energy_run: pool size must be >= 1e4");
    if (R < 10) throw std::invalid_argument("free_energy_run: need at least 10 sweeps");

    const double t2 = params.t * params.t;
    const double s = params.s;
    std::vector<double> gam(N), y(N), gam_new(N), y_new(N);

    // depth-1 initial condition: Gamma = 1/(V-E), y = |t Gamma|^s
    detail::parallel_for(N, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng(mix_key(seed, 0, i));
            double den;
            do { den = d.sample(rng) - params.E; } while (std::abs(den) < 1e-300);
            gam[i] = 1.0 / den;
            y[i] = std::pow(std::abs(params.t * gam[i]), s);
        }
    });
    double mean = 0.0;
    for (std::size_t i = 0; i < N; ++i) mean += y[i] / static_cast<double>(N);
    if (!(mean > 0.0) || !std::isfinite(mean))
        throw std::runtime_error("free_energy_run: degenerate initial pool");
    for (auto& v : y) v /= mean;

    FreeEnergyRun run;
    run.params = params;
    run.pool_size = N;
    run.sweeps = R;
    run.seed = seed;
    run.burn_in = static_cast<int>(R * burn_frac);
    run.increments.resize(R);

    for (int r = 1; r <= R; ++r) {
        detail::parallel_for(N, threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                Rng rng(mix_key(seed, static_cast<std::uint64_t>(r), i));
                double acc_g = 0.0, acc_y = 0.0;
                for (int a = 0; a < params.K; ++a) {
                    const std::size_t j = rng.index(N);
                    acc_g += gam[j];
                    acc_y += y[j];
                }
                double den;
                do { den = d.sample(rng) - params.E - t2 * acc_g; } while (std::abs(den) < 1e-300);
                const double g = 1.0 / den;
                gam_new[i] = g;
                y_new[i] = std::pow(std::abs(params.t * g), s) * acc_y;
            }
        });
        double m = 0.0;
        for (std::size_t i = 0; i < N; ++i) m += y_new[i] / static_cast<double>(N);
        if (!(m > 0.0) || !std::isfinite(m))
            throw std::runtime_error("free_energy_run: pool normalizer collapsed");
        run.increments[r - 1] = std::log(m);
        for (std::size_t i = 0; i < N; ++i) y_new[i] /= m;
        gam.swap(gam_new);
        y.swap(y_new);
    }
    run.estimate = phi_from_increments(run.increments, R, params.K, burn_frac);
    return run;
}

// phi^{(R,N)} at an intermediate checkpoint R' <= R of the same run
// (burn-in R'/10, matching a run of that length).
inline double phi_at_checkpoint(const FreeEnergyRun& run, int Rp, double burn_frac = 0.1) {
    return phi_from_increments(run.increments, Rp, run.params.K, burn_frac);
}

enum class ScalingStage { r_extrapolation, n_extrapolation };

struct ScalingFit {
    ScalingStage stage = ScalingStage::r_extrapolation;
    double phi_inf = 0.0;        // extrapolated free energy
    double slope = 0.0;          // a_{K,t}(N) for the R stage, b for the N stage
    double curvature = 0.0;      // c for the N stage
    double residual_rms = 0.0;
    std::vector<double> inv_gram_diag;
};

// phi^{(R,N)} = phi^{(inf,N)} + a/R
inline ScalingFit fit_R(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw std::invalid_argument("fit_R: need >= 3 points");
    std::vector<double> ones, inv_r, y;
    double r0 = points.front().first;
    bool distinct = false;
    for (const auto& [R, phi] : points) {
        if (!(R > 0.0)) throw std::invalid_argument("fit_R: R must be positive");
        if (R != r0) distinct = true;
        ones.push_back(1.0);
        inv_r.push_back(1.0 / R);
        y.push_back(phi);
    }
    if (!distinct) throw std::invalid_argument("fit_R: all R equal (rank-deficient design)");
    const auto ls = least_squares({ones, inv_r}, y);
    ScalingFit f;
    f.stage = ScalingStage::r_extrapolation;
    f.phi_inf = ls.coeffs[0];
    f.slope = ls.coeffs[1];
    f.residual_rms = ls.residual_rms;
    f.inv_gram_diag = ls.inv_gram_diag;
    return f;
}

// phi^{(inf,N)} = phi^{(inf,inf)} + b/log N + c/(log N)^2
inline ScalingFit fit_N(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 4) throw std::invalid_argument("fit_N: need >= 4 points");
    double nmin = points.front().first, nmax = nmin;
    std::vector<double> ones, il, il2, y;
    for (const auto& [N, phi] : points) {
        if (!(N > 1.0)) throw std::invalid_argument("fit_N: N must exceed 1");
        nmin = std::fmin(nmin, N);
        nmax = std::fmax(nmax, N);
        const double l = 1.0 / std::log(N);
        ones.push_back(1.0);
        il.push_back(l);
        il2.push_back(l * l);
        y.push_back(phi);
    }
    if (nmax / nmin < 100.0)
        throw std::invalid_argument("fit_N: N values must span at least two decades");
    const auto ls = least_squares({ones, il, il2}, y);
    if (ls.condition > 1e12 * 1e12)  // condition of the Gram matrix ~ cond(X)^2
        throw std::invalid_argument("fit_N: ill-conditioned design; widen the N range");
    ScalingFit f;
    f.stage = ScalingStage::n_extrapolation;
    f.phi_inf = ls.coeffs[0];
    f.slope = ls.coeffs[1];
    f.curvature = ls.coeffs[2];
    f.residual_rms = ls.residual_rms;
    f.inv_gram_diag = ls.inv_gram_diag;
    return f;
}

// Reduced N-stage used when fewer than four population sizes are available:
// the leading finite-pool correction of the traveling-front picture is
// proportional to 1/(log N)^2, so fit {1, 1/(log N)^2}.
inline ScalingFit fit_N_reduced(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw std::invalid_argument("fit_N_reduced: need >= 2 points");
    std::vector<double> ones, il2, y;
    for (const auto& [N, phi] : points) {
        if (!(N > 1.0)) throw std::invalid_argument("fit_N_reduced: N must exceed 1");
        const double l = 1.0 / std::log(N);
        ones.push_back(1.0);
        il2.push_back(l * l);
        y.push_back(phi);
    }
    const auto ls = least_squares({ones, il2}, y);
    ScalingFit f;
    f.stage = ScalingStage::n_extrapolation;
    f.phi_inf = ls.coeffs[0];
    f.curvature = ls.coeffs[1];
    f.residual_rms = ls.residual_rms;
    f.inv_gram_diag = ls.inv_gram_diag;
    return f;
}

} // namespace treeloc
