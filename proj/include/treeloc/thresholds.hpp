#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeloc/cavity.hpp"
#include "treeloc/disorder.hpp"
#include "treeloc/kernel.hpp"
#include "treeloc/rde.hpp"

namespace treeloc {

enum class Method { A, B, C, D, E, asymptotic };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::A: return "A";
        case Method::B: return "B";
        case Method::C: return "C";
        case Method::D: return "D";
        case Method::E: return "E";
        case Method::asymptotic: return "asymptotic";
    }
    return "?";
}

struct ThresholdResult {
    Method method = Method::A;
    int K = 2;
    double E = 0.0;
    std::optional<double> g_c;
    double t_c = 0.0;                 // g_c / (K log K)
    double uncertainty = 0.0;
    std::map<std::string, std::string> diagnostics;
};

// conversions to the conventional disorder-strength units (t = 1 models)
inline double uniform_w_c(double g_c, int K) { return 2.0 / g_c * K * std::log(static_cast<double>(K)); }
inline double cauchy_gamma_c(double g_c, int K) { return 1.0 / g_c * K * std::log(static_cast<double>(K)); }

namespace detail {

inline std::string fmt_diag(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// methods A and B: kernel eigenvalue criterion lambda(g) = 1/K at s = 1
// ---------------------------------------------------------------------------

struct EigenThresholdOptions {
    int grid_n = 4000;              // points per sign
    double x_max = 200.0;
    double x_min_factor = 1e-6;     // x_min = factor * t^2
    double bracket_lo = 0.05;
    double bracket_hi = 2.0;
    int max_expansions = 4;
    double g_tol = 5e-4;            // final bracket width
    double eigen_tol = 1e-10;
    int eigen_max_iter = 500;
    std::size_t pool_size = 200000; // method B population
    int pool_max_sweeps = 500;
    EffectiveGridSpec eff_grid{};
    std::uint64_t seed = 2024;
    int threads = 1;
};

namespace detail {

// Method-B effective density with the tail-band fallback: if too few
// composite samples reach beyond z_max/2 (deep localized regime), shrink
// z_max so the fitted band is populated.
inline EffectiveDensity effective_density_adaptive(const ResolventPool& pool,
                                                   const DisorderDensity& d,
                                                   const ModelParams& params,
                                                   EffectiveGridSpec spec, int threads) {
    for (;;) {
        try {
            return effective_density(pool, d, params, spec, threads);
        } catch (const TailUnfittable&) {
            if (spec.z_max <= 4.0) throw;
            spec.z_max = std::fmax(4.0, spec.z_max / 2.0);
        }
    }
}

struct EigenEvaluator {
    Method method;
    const DisorderDensity& d;
    int K;
    double E;
    const EigenThresholdOptions& opts;
    mutable int evals = 0;
    mutable int last_pool_sweeps = 0;
    mutable double last_z_max = 0.0;
    mutable int last_iterations = 0;

    double lambda_at(double g) const {
        ++evals;
        const ModelParams params = ModelParams::from_g(K, g, E, 1.0);
        const KernelGrid grid =
            build_grid(opts.x_min_factor * params.t * params.t, opts.x_max, opts.grid_n);
        DensitySource source = DensitySource::bare(d);
        if (method == Method::B) {
            if (d.kind() == DisorderKind::cauchy) {
                source = DensitySource::cauchy_closed(
                    cauchy_fixed_point(params, d.cauchy_scale()).effective);
            } else {
                PoolConvergence conv;
                const std::uint64_t eseed = mix_key(opts.seed, 0xb0, static_cast<std::uint64_t>(evals));
                ResolventPool pool = converge_pool(d, params, opts.pool_size, eseed, &conv,
                                                   opts.pool_max_sweeps, opts.threads);
                EffectiveDensity eff =
                    effective_density_adaptive(pool, d, params, opts.eff_grid, opts.threads);
                last_pool_sweeps = conv.sweeps;
                last_z_max = eff.z_max;
                source = DensitySource::effective(std::move(eff));
            }
        }
        const DiscreteKernel kern = assemble_kernel(std::move(source), params, grid);
        const EigenResult res = leading_eigen(kern, opts.eigen_tol, opts.eigen_max_iter, opts.threads);
        if (!res.converged)
            throw std::runtime_error("threshold_eigen: power iteration did not converge (residual " +
                                     fmt_diag(res.residual) + ")");
        last_iterations = res.iterations;
        return res.lambda;
    }
};

} // namespace detail

inline ThresholdResult threshold_eigen(Method method, const DisorderDensity& d, int K, double E,
                                       const EigenThresholdOptions& opts = {}) {
    if (method != Method::A && method != Method::B)
        throw std::invalid_argument("threshold_eigen: method must be A or B");
    if (K < 2) throw std::invalid_argument("threshold_eigen: K must be >= 2");
    if (!(d.density(E) > 0.0))
        throw std::invalid_argument("threshold_eigen: rho(E) must be positive");

    detail::EigenEvaluator ev{method, d, K, E, opts};
    const double crit = 1.0 / static_cast<double>(K);
    double lo = opts.bracket_lo, hi = opts.bracket_hi;
    double flo = ev.lambda_at(lo) - crit;
    double fhi = ev.lambda_at(hi) - crit;
    for (int e = 0; e < opts.max_expansions && flo * fhi > 0.0; ++e) {
        lo *= 0.5;
        hi *= 2.0;
        flo = ev.lambda_at(lo) - crit;
        fhi = ev.lambda_at(hi) - crit;
    }
    if (!(flo < 0.0 && fhi > 0.0))
        throw std::runtime_error(std::string("threshold_eigen: criterion not bracketed; lambda(") +
                                 detail::fmt_diag(lo) + ") = " + detail::fmt_diag(flo + crit) +
                                 ", lambda(" + detail::fmt_diag(hi) + ") = " +
                                 detail::fmt_diag(fhi + crit));
    while (hi - lo > opts.g_tol) {
        const double mid = 0.5 * (lo + hi);
        if (ev.lambda_at(mid) - crit < 0.0) lo = mid; else hi = mid;
    }

    ThresholdResult res;
    res.method = method;
    res.K = K;
    res.E = E;
    res.g_c = 0.5 * (lo + hi);
    res.t_c = *res.g_c / (K * std::log(static_cast<double>(K)));
    res.uncertainty = 0.5 * (hi - lo);
    res.diagnostics["grid_n"] = std::to_string(opts.grid_n);
    res.diagnostics["x_max"] = detail::fmt_diag(opts.x_max);
    res.diagnostics["eigen_evals"] = std::to_string(ev.evals);
    res.diagnostics["power_iterations"] = std::to_string(ev.last_iterations);
    if (method == Method::B && d.kind() != DisorderKind::cauchy) {
        res.diagnostics["pool_size"] = std::to_string(opts.pool_size);
        res.diagnostics["pool_sweeps"] = std::to_string(ev.last_pool_sweeps);
        res.diagnostics["eff_z_max"] = detail::fmt_diag(ev.last_z_max);
    }
    return res;
}

// ---------------------------------------------------------------------------
// method C: quenched cavity free energy with two-stage finite-size scaling
// ---------------------------------------------------------------------------

struct CavityThresholdOptions {
    std::vector<std::size_t> pool_sizes = {10000, 30000, 100000};
    std::vector<int> sweep_lengths = {1000, 3000};
    int n_seeds = 4;
    double burn_frac = 0.1;
    double bracket_lo = 0.05;
    double bracket_hi = 2.0;
    int scan_points = 8;
    double g_tol = 0.004;
    int max_bisections = 12;
    std::uint64_t seed = 2024;
    int threads = 1;
};

namespace detail {

// R checkpoints for the 1/R fit. The fit needs at least three; when the
// requested list is shorter, midpoints of the longest run are added (all
// checkpoints are read off a single run of the maximal length).
inline std::vector<int> expand_checkpoints(std::vector<int> rs) {
    std::sort(rs.begin(), rs.end());
    rs.erase(std::unique(rs.begin(), rs.end()), rs.end());
    if (rs.empty()) throw std::invalid_argument("threshold_cavity: empty sweep list");
    while (rs.size() < 3) {
        std::vector<int> next = rs;
        for (std::size_t i = 0; i + 1 < rs.size(); ++i) next.push_back((rs[i] + rs[i + 1]) / 2);
        if (rs.size() == 1) next.push_back(rs[0] / 2 > 10 ? rs[0] / 2 : rs[0] * 2);
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        if (next.size() == rs.size()) throw std::invalid_argument("threshold_cavity: cannot build 3 checkpoints");
        rs = std::move(next);
    }
    return rs;
}

struct CavityPhiEstimate {
    double mean = 0.0;
    double se = 0.0;
};

// phi^{(inf,inf)}(g): per seed, fit 1/R over checkpoints for every N, then
// extrapolate in N (full 3-term basis when >= 4 sizes, else the reduced
// 1/(log N)^2 form); mean and standard error across seeds.
inline CavityPhiEstimate cavity_phi_inf(const DisorderDensity& d, int K, double E, double g,
                                        const CavityThresholdOptions& opts, int seeds) {
    const std::vector<int> checkpoints = expand_checkpoints(opts.sweep_lengths);
    const int R_max = checkpoints.back();
    std::vector<double> per_seed;
    for (int k = 0; k < seeds; ++k) {
        std::vector<std::pair<double, double>> phi_n;
        for (std::size_t ni = 0; ni < opts.pool_sizes.size(); ++ni) {
            const std::size_t N = opts.pool_sizes[ni];
            const ModelParams params = ModelParams::from_g(K, g, E, 1.0);
            const std::uint64_t rseed = mix_key(opts.seed, static_cast<std::uint64_t>(k),
                                                static_cast<std::uint64_t>(N));
            const FreeEnergyRun run =
                free_energy_run(d, params, N, R_max, rseed, opts.burn_frac, opts.threads);
            std::vector<std::pair<double, double>> phi_r;
            for (int Rp : checkpoints)
                phi_r.push_back({static_cast<double>(Rp), phi_at_checkpoint(run, Rp, opts.burn_frac)});
            phi_n.push_back({static_cast<double>(N), fit_R(phi_r).phi_inf});
        }
        double phi_inf;
        if (phi_n.size() >= 4) phi_inf = fit_N(phi_n).phi_inf;
        else if (phi_n.size() >= 2) phi_inf = fit_N_reduced(phi_n).phi_inf;
        else phi_inf = phi_n.front().second;
        per_seed.push_back(phi_inf);
    }
    CavityPhiEstimate est;
    for (double v : per_seed) est.mean += v;
    est.mean /= static_cast<double>(per_seed.size());
    if (per_seed.size() > 1) {
        double ss = 0.0;
        for (double v : per_seed) ss += (v - est.mean) * (v - est.mean);
        est.se = std::sqrt(ss / static_cast<double>(per_seed.size() - 1) /
                           static_cast<double>(per_seed.size()));
    }
    return est;
}

} // namespace detail

inline ThresholdResult threshold_cavity(const DisorderDensity& d, int K, double E,
                                        const CavityThresholdOptions& opts = {}) {
    if (K < 2) throw std::invalid_argument("threshold_cavity: K must be >= 2");
    if (!(d.density(E) > 0.0))
        throw std::invalid_argument("threshold_cavity: rho(E) must be positive");
    if (opts.pool_sizes.empty()) throw std::invalid_argument("threshold_cavity: empty pool-size list");

    // the reported phi crosses -log K where the extrapolated increments
    // cross zero
    auto sign_fn = [&](double g, int seeds) { return detail::cavity_phi_inf(d, K, E, g, opts, seeds); };

    // coarse scan (single seed) to bracket the sign change of
    // phi^{(inf,inf)} + log K
    const int sp = std::max(2, opts.scan_points);
    double lo = opts.bracket_lo, hi = opts.bracket_hi;
    double prev_g = lo;
    detail::CavityPhiEstimate prev = sign_fn(lo, 1);
    bool bracketed = false;
    int scan_evals = 1;
    const double lk = std::log(static_cast<double>(K));
    for (int i = 1; i < sp && !bracketed; ++i) {
        const double g = opts.bracket_lo *
                         std::pow(opts.bracket_hi / opts.bracket_lo, static_cast<double>(i) / (sp - 1));
        const detail::CavityPhiEstimate cur = sign_fn(g, 1);
        ++scan_evals;
        if ((prev.mean + lk) < 0.0 && (cur.mean + lk) >= 0.0) {
            lo = prev_g;
            hi = g;
            bracketed = true;
        }
        prev = cur;
        prev_g = g;
    }

    ThresholdResult res;
    res.method = Method::C;
    res.K = K;
    res.E = E;
    res.diagnostics["scan_evals"] = std::to_string(scan_evals);
    res.diagnostics["seeds"] = std::to_string(opts.n_seeds);
    res.diagnostics["r_max"] = std::to_string(detail::expand_checkpoints(opts.sweep_lengths).back());
    if (!bracketed) {
        res.g_c.reset();
        res.uncertainty = 0.5 * (opts.bracket_hi - opts.bracket_lo);
        res.diagnostics["status"] = "not-bracketed";
        return res;
    }

    double last_se = 0.0;
    int bisections = 0;
    bool resolved = true;
    for (; bisections < opts.max_bisections && (hi - lo) > opts.g_tol; ++bisections) {
        const double mid = 0.5 * (lo + hi);
        const detail::CavityPhiEstimate est = sign_fn(mid, opts.n_seeds);
        last_se = est.se;
        const double off = est.mean + lk;
        if (std::abs(off) < 2.0 * est.se) { resolved = false; break; }
        if (off < 0.0) lo = mid; else hi = mid;
    }
    res.g_c = 0.5 * (lo + hi);
    res.t_c = *res.g_c / (K * lk);
    res.uncertainty = 0.5 * (hi - lo);
    res.diagnostics["bisections"] = std::to_string(bisections);
    res.diagnostics["phi_se"] = detail::fmt_diag(last_se);
    res.diagnostics["status"] = resolved ? "converged" : "sign-unresolved-at-2se";
    return res;
}

// ---------------------------------------------------------------------------
// methods D and E: closed-form large-K root equations
// ---------------------------------------------------------------------------

namespace detail {

// Smallest root of fn on (1e-6, g_max): scan 1e4 log-spaced steps for the
// first upward sign change, then bisect to 1e-12.
inline std::optional<double> smallest_root(const std::function<double(double)>& fn, double g_max) {
    const int steps = 10000;
    const double g0 = 1e-6;
    double prev_g = g0;
    double prev_f = fn(g0);
    for (int i = 1; i <= steps; ++i) {
        const double g = g0 * std::pow(g_max * 0.999999 / g0, static_cast<double>(i) / steps);
        const double f = fn(g);
        if (std::isfinite(prev_f) && std::isfinite(f) && prev_f < 0.0 && f >= 0.0) {
            double lo = prev_g, hi = g;
            while (hi - lo > 1e-12) {
                const double mid = 0.5 * (lo + hi);
                const double fm = fn(mid);
                if (!std::isfinite(fm)) break;
                if (fm < 0.0) lo = mid; else hi = mid;
            }
            return 0.5 * (lo + hi);
        }
        prev_g = g;
        prev_f = f;
    }
    return std::nullopt;
}

} // namespace detail

// Smallest root in g of  log g - log log K + log[-4 rho(E) (log g - log(K log K))].
inline std::optional<double> gc_formula_D(const DisorderDensity& d, int K, double E) {
    if (K < 2) throw std::invalid_argument("gc_formula_D: K must be >= 2");
    if (!(d.density(E) > 0.0)) throw std::invalid_argument("gc_formula_D: rho(E) must be positive");
    const double rho = d.density(E);
    const double lgK = std::log(static_cast<double>(K));
    const double g_max = K * lgK;
    auto fn = [&](double g) {
        const double L = std::log(g) - std::log(g_max);
        const double arg = -4.0 * rho * L;
        if (!(arg > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        return std::log(g) - std::log(lgK) + std::log(arg);
    };
    return detail::smallest_root(fn, g_max);
}

// Large-K expansion with the Abou-Chacra-Anderson-Thouless subleading
// correction. The correction factor carries pi^2/48: with pi^2/24 the root
// equation does not reproduce the reference critical values, while this
// form matches them for every K and both disorder families (it is the
// first-order expansion of the square-root form of the same correction).
inline std::optional<double> gc_formula_E(const DisorderDensity& d, int K) {
    if (K < 2) throw std::invalid_argument("gc_formula_E: K must be >= 2");
    const double rho0 = d.density(0.0);
    if (!(rho0 > 0.0)) throw std::invalid_argument("gc_formula_E: rho(0) must be positive");
    const double lgK = std::log(static_cast<double>(K));
    const double g_max = K * lgK;
    auto fn = [&](double g) {
        const double L = std::log(g) - std::log(g_max);
        const double corr = 1.0 + (M_PI * M_PI / 48.0) / (L * L);
        const double arg = -4.0 * rho0 * corr * L;
        if (!(arg > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        return std::log(g) - std::log(lgK) + std::log(arg);
    };
    return detail::smallest_root(fn, g_max);
}

// ---------------------------------------------------------------------------
// asymptotics and rigorous bounds
// ---------------------------------------------------------------------------

// g_c(E) = 1 / (4 rho(E)), the K -> infinity mobility edge
inline double gc_asymptotic(const DisorderDensity& d, double E) {
    const double rho = d.density(E);
    if (!(rho > 0.0))
        throw std::invalid_argument("gc_asymptotic: rho(E) = 0 (Lifshitz-tail regime out of scope)");
    return 1.0 / (4.0 * rho);
}

// (1 -/+ epsilon) / (K log K) / (4 ||rho||_inf): two-sided asymptotic bounds
// on the critical hopping t_c(K)
inline std::pair<double, double> corollary_bounds(const DisorderDensity& d, int K, double eps) {
    if (K < 2) throw std::invalid_argument("corollary_bounds: K must be >= 2");
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("corollary_bounds: eps must lie in (0,1)");
    const double base = 1.0 / (K * std::log(static_cast<double>(K)) * 4.0 * d.sup_norm());
    return {(1.0 - eps) * base, (1.0 + eps) * base};
}

// Variational lower bound on the free energy at s -> 1 with window width
// alpha:  log t + log[ -4 m log t + 2 M log alpha - 2 C ]_+  ( log 0 -> -inf )
inline double free_energy_lower_bound(const DisorderDensity& d, const ModelParams& params,
                                      double alpha) {
    if (!(params.t > 0.0 && params.t < 1.0))
        throw std::invalid_argument("free_energy_lower_bound: t must lie in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("free_energy_lower_bound: alpha must lie in (0,1)");
    const auto [m, M] = d.window_extrema(params.E, alpha);
    const double inner = -4.0 * m * std::log(params.t) + 2.0 * M * std::log(alpha) - 2.0 * d.lipschitz();
    if (!(inner > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(params.t) + std::log(inner);
}

// Evaluable envelope constants of the appendix tail lemma:
//   C1 = 8^{1+sigma} C_sigma + 4 G^2 ||rho||_inf^2   (|z| >= 2 part)
//   small-z bound = 2^{1+sigma} ||rho||_inf          (|z| <= 2 part)
inline std::pair<double, double> appendix_constants(const DisorderDensity& d, double G) {
    if (!(G > 0.0)) throw std::invalid_argument("appendix_constants: G must be > 0");
    const double s = d.tail_sigma();
    const double c1 = std::pow(8.0, 1.0 + s) * d.tail_amp() + 4.0 * G * G * d.sup_norm() * d.sup_norm();
    const double small_z = std::pow(2.0, 1.0 + s) * d.sup_norm();
    return {c1, small_z};
}

} // namespace treeloc
