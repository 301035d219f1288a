#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "treeloc/disorder.hpp"
#include "treeloc/rng.hpp"

namespace treeloc {

// Model parameters. Exactly one of t/g is primary; the other follows from
// t = g / (K log K).
struct ModelParams {
    int K = 2;
    double t = 0.0;
    double g = 0.0;
    double E = 0.0;
    double s = 1.0;

    static ModelParams from_g(int K, double g, double E, double s = 1.0) {
        ModelParams p;
        p.K = K; p.g = g; p.E = E; p.s = s;
        p.t = g / (K * std::log(static_cast<double>(K)));
        p.validate();
        return p;
    }
    static ModelParams from_t(int K, double t, double E, double s = 1.0) {
        ModelParams p;
        p.K = K; p.t = t; p.E = E; p.s = s;
        p.g = t * K * std::log(static_cast<double>(K));
        p.validate();
        return p;
    }
    // t = 0 is admitted as the degenerate decoupled limit used by several
    // consistency checks
    void validate() const {
        if (K < 2) throw std::invalid_argument("ModelParams: K must be >= 2");
        if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("ModelParams: t must be >= 0");
        if (!(s > 0.0 && s <= 2.0)) throw std::invalid_argument("ModelParams: s must lie in (0,2]");
    }
};

// Population of real cavity resolvent samples. depth counts RDE iterations
// applied; depth 1 means samples of 1/(V-E).
struct ResolventPool {
    std::vector<double> samples;
    int depth = 0;
    ModelParams params;
    std::uint64_t seed = 0;
};

namespace detail {

inline void parallel_for(std::size_t n, int threads, const auto& body) {
    if (threads <= 1 || n < 4096) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (int th = 0; th < threads; ++th) {
        const std::size_t lo = std::min(n, th * chunk), hi = std::min(n, lo + chunk);
        if (lo < hi) pool.emplace_back([&, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace detail

inline ResolventPool init_pool(const DisorderDensity& d, const ModelParams& params,
                               std::size_t N, std::uint64_t seed) {
    if (N < 1000) throw std::invalid_argument("init_pool: N must be >= 1000");
    ResolventPool pool;
    pool.params = params;
    pool.seed = seed;
    pool.depth = 1;
    pool.samples.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        Rng rng(mix_key(seed, 0, i));
        double den;
        do { den = d.sample(rng) - params.E; } while (std::abs(den) < 1e-300);
        pool.samples[i] = 1.0 / den;
    }
    return pool;
}

// One population-dynamics sweep: each new element is 1/(V - E - t^2 sum of K
// pool draws) with fresh V. Near-zero denominators redraw V (clipping would
// bias the heavy tail). Element streams are keyed by (seed, depth, index) so
// the result is independent of the thread partition.
inline ResolventPool sweep_pool(const ResolventPool& pool, const DisorderDensity& d,
                                int threads = 1) {
    const std::size_t N = pool.samples.size();
    if (N == 0) throw std::invalid_argument("sweep_pool: empty pool");
    const ModelParams& p = pool.params;
    const double t2 = p.t * p.t;
    ResolventPool out;
    out.params = p;
    out.seed = pool.seed;
    out.depth = pool.depth + 1;
    out.samples.resize(N);
    detail::parallel_for(N, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng(mix_key(pool.seed, static_cast<std::uint64_t>(out.depth), i));
            double acc = 0.0;
            for (int a = 0; a < p.K; ++a) acc += pool.samples[rng.index(N)];
            double den;
            do { den = d.sample(rng) - p.E - t2 * acc; } while (std::abs(den) < 1e-300);
            out.samples[i] = 1.0 / den;
        }
    });
    return out;
}

// Two-sample Kolmogorov-Smirnov distance; both inputs must be sorted.
inline double ks_distance_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    double dmax = 0.0;
    std::size_t ia = 0, ib = 0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] <= b[ib]) ++ia; else ++ib;
        dmax = std::fmax(dmax, std::abs(ia / na - ib / nb));
    }
    return dmax;
}

struct PoolConvergence {
    int sweeps = 0;
    double last_ks = 0.0;
    bool converged = false;
};

// Iterate sweeps until the KS distance between pools 10 sweeps apart drops
// below 2/sqrt(N) for 3 consecutive checks (hard cap: max_sweeps).
inline ResolventPool converge_pool(const DisorderDensity& d, const ModelParams& params,
                                   std::size_t N, std::uint64_t seed,
                                   PoolConvergence* diag = nullptr, int max_sweeps = 500,
                                   int threads = 1) {
    ResolventPool pool = init_pool(d, params, N, seed);
    std::vector<double> prev = pool.samples;
    std::sort(prev.begin(), prev.end());
    const double thresh = 2.0 / std::sqrt(static_cast<double>(N));
    int consecutive = 0;
    double last_ks = 1.0;
    int sw = 0;
    while (sw < max_sweeps) {
        pool = sweep_pool(pool, d, threads);
        ++sw;
        if (sw % 10 == 0) {
            std::vector<double> cur = pool.samples;
            std::sort(cur.begin(), cur.end());
            last_ks = ks_distance_sorted(cur, prev);
            prev = std::move(cur);
            consecutive = (last_ks < thresh) ? consecutive + 1 : 0;
            if (consecutive >= 3) break;
        }
    }
    if (diag) {
        diag->sweeps = sw;
        diag->last_ks = last_ks;
        diag->converged = consecutive >= 3;
    }
    return pool;
}

// Grid-tabulated estimate of the density of V - E - t^2 sum_{i<K} Gamma_i,
// with a fitted power-law tail outside [-z_max, z_max]. The grid is uniform
// on [-z_linear, z_linear] and log-spaced beyond, so the kernel can evaluate
// it in O(1) without searches.
struct EffectiveDensity {
    std::vector<double> grid;
    std::vector<double> values;
    double tail_amp = 0.0;
    double tail_exp = 2.0;
    double z_max = 20.0;
    double z_linear = 2.0;
    double normalization = 1.0;
    double bandwidth = 0.0;
    double peak_se = 0.0;      // KDE standard error at the density peak
    std::size_t m_samples = 0;

    std::size_t n_linear = 0;  // points in the uniform center section
    std::size_t n_log = 0;     // points per log side
    double lin_step = 0.0;
    double log_step = 0.0;

    // grid index layout: [0 .. n_log] negative log section, then n_linear
    // uniform steps across [-z_linear, z_linear], then n_log positive log
    // steps up to z_max
    double eval(double z) const {
        const double az = std::abs(z);
        if (az > z_max) return tail_amp / std::pow(az, tail_exp);
        double pos;
        if (az <= z_linear)
            pos = static_cast<double>(n_log) + (z + z_linear) / lin_step;
        else if (z > 0.0)
            pos = static_cast<double>(n_log + n_linear) + std::log(az / z_linear) / log_step;
        else
            pos = static_cast<double>(n_log) - std::log(az / z_linear) / log_step;
        pos = std::fmax(0.0, std::fmin(pos, static_cast<double>(grid.size() - 1)));
        const std::size_t j = std::min(grid.size() - 2, static_cast<std::size_t>(pos));
        const double f = std::fmax(0.0, std::fmin(1.0, (z - grid[j]) / (grid[j + 1] - grid[j])));
        return values[j] + f * (values[j + 1] - values[j]);
    }
};

struct EffectiveGridSpec {
    double z_max = 20.0;
    double z_linear = 2.0;
    std::size_t n_linear = 1600;   // intervals in the uniform section
    std::size_t n_log = 200;       // intervals per log side
    std::size_t m_samples = 1000000;
};

class TailUnfittable : public std::runtime_error {
public:
    explicit TailUnfittable(const std::string& what) : std::runtime_error(what) {}
};

// Gaussian KDE with Silverman-style bandwidth h = 1.06 sigma M^{-1/5}
// (sigma robustified as min(sd inside the window, IQR/1.349)), clipped to
// [1e-4, 0.1]. Evaluation uses fine binning plus windowed convolution.
inline EffectiveDensity effective_density(const ResolventPool& pool, const DisorderDensity& d,
                                          const ModelParams& params,
                                          const EffectiveGridSpec& spec = {},
                                          int threads = 1) {
    if (pool.depth < 2)
        throw std::invalid_argument("effective_density: pool depth must be >= 2");
    if (spec.m_samples < 1000000)
        throw std::invalid_argument("effective_density: need at least 1e6 composite samples");
    const std::size_t N = pool.samples.size();
    const std::size_t M = spec.m_samples;
    const double t2 = params.t * params.t;
    const std::uint64_t skey = mix_key(pool.seed, 0x7effec71ull);

    std::vector<double> z(M);
    detail::parallel_for(M, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t m = lo; m < hi; ++m) {
            Rng rng(mix_key(skey, m));
            double acc = 0.0;
            for (int a = 0; a + 1 < params.K; ++a) acc += pool.samples[rng.index(N)];
            z[m] = d.sample(rng) - params.E - t2 * acc;
        }
    });

    // bandwidth
    std::vector<double> inside;
    inside.reserve(M);
    for (double v : z)
        if (std::abs(v) <= spec.z_max) inside.push_back(v);
    if (inside.size() < 100) throw TailUnfittable("effective_density: window nearly empty");
    double mean = 0.0;
    for (double v : inside) mean += v;
    mean /= static_cast<double>(inside.size());
    double var = 0.0;
    for (double v : inside) var += (v - mean) * (v - mean);
    var /= static_cast<double>(inside.size());
    std::vector<double> tmp = inside;
    const std::size_t q1 = tmp.size() / 4, q3 = (3 * tmp.size()) / 4;
    std::nth_element(tmp.begin(), tmp.begin() + q1, tmp.end());
    const double vq1 = tmp[q1];
    std::nth_element(tmp.begin(), tmp.begin() + q3, tmp.end());
    const double vq3 = tmp[q3];
    const double sigma = std::fmin(std::sqrt(var), (vq3 - vq1) / 1.349);
    double h = 1.06 * sigma * std::pow(static_cast<double>(M), -0.2);
    h = std::fmax(1e-4, std::fmin(0.1, h));

    // fine histogram for the windowed Gaussian convolution
    const double delta = h / 4.0;
    const double lo_edge = -spec.z_max - 6.0 * h;
    const std::size_t nbins = static_cast<std::size_t>(std::ceil(2.0 * (spec.z_max + 6.0 * h) / delta)) + 1;
    std::vector<double> counts(nbins, 0.0);
    for (double v : z) {
        const double f = (v - lo_edge) / delta;
        if (f < 0.0 || f >= static_cast<double>(nbins)) continue;
        counts[static_cast<std::size_t>(f)] += 1.0;
    }

    EffectiveDensity eff;
    eff.z_max = spec.z_max;
    eff.z_linear = spec.z_linear;
    eff.bandwidth = h;
    eff.m_samples = M;
    eff.n_linear = spec.n_linear;
    eff.n_log = spec.n_log;

    // hybrid abscissas: [-z_max .. -z_linear] log, [-z_linear .. z_linear]
    // uniform, [z_linear .. z_max] log
    eff.log_step = std::log(spec.z_max / spec.z_linear) / static_cast<double>(spec.n_log);
    eff.lin_step = 2.0 * spec.z_linear / static_cast<double>(spec.n_linear);
    for (std::size_t i = 0; i <= spec.n_log; ++i)
        eff.grid.push_back(-spec.z_max * std::exp(-eff.log_step * static_cast<double>(i)));
    for (std::size_t i = 1; i <= spec.n_linear; ++i)
        eff.grid.push_back(-spec.z_linear + eff.lin_step * static_cast<double>(i));
    for (std::size_t i = 1; i <= spec.n_log; ++i)
        eff.grid.push_back(spec.z_linear * std::exp(eff.log_step * static_cast<double>(i)));

    const int halfwin = static_cast<int>(std::ceil(6.0 * h / delta));
    const double norm = 1.0 / (static_cast<double>(M) * h * std::sqrt(2.0 * M_PI));
    eff.values.resize(eff.grid.size());
    detail::parallel_for(eff.grid.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t gi = lo; gi < hi; ++gi) {
            const double zg = eff.grid[gi];
            const int c = static_cast<int>((zg - lo_edge) / delta);
            const int j0 = std::max(0, c - halfwin);
            const int j1 = std::min(static_cast<int>(nbins) - 1, c + halfwin);
            double acc = 0.0;
            for (int j = j0; j <= j1; ++j) {
                const double center = lo_edge + (static_cast<double>(j) + 0.5) * delta;
                const double u = (zg - center) / h;
                acc += counts[j] * std::exp(-0.5 * u * u);
            }
            eff.values[gi] = acc * norm;
        }
    });

    // power-law tail fit on |z| in [z_max/2, z_max]
    std::vector<double> band;
    for (double v : z) {
        const double av = std::abs(v);
        if (av >= spec.z_max / 2.0 && av <= spec.z_max) band.push_back(av);
    }
    if (band.size() < 100)
        throw TailUnfittable("effective_density: fewer than 100 samples in the tail band; adjust z_max");
    const int nb = 16;
    const double lrat = std::log(2.0) / nb;
    std::vector<double> cnt(nb, 0.0);
    for (double av : band) {
        int b = static_cast<int>(std::log(av / (spec.z_max / 2.0)) / lrat);
        b = std::max(0, std::min(nb - 1, b));
        cnt[b] += 1.0;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int used = 0;
    for (int b = 0; b < nb; ++b) {
        if (cnt[b] <= 0.0) continue;
        const double e0 = (spec.z_max / 2.0) * std::exp(lrat * b);
        const double e1 = (spec.z_max / 2.0) * std::exp(lrat * (b + 1));
        const double dens = cnt[b] / (static_cast<double>(M) * (e1 - e0)) / 2.0; // per side
        const double X = 0.5 * (std::log(e0) + std::log(e1));
        const double Y = std::log(dens);
        sx += X; sy += Y; sxx += X * X; sxy += X * Y;
        ++used;
    }
    if (used < 3) throw TailUnfittable("effective_density: too few populated tail bins");
    const double denom = used * sxx - sx * sx;
    const double slope = (used * sxy - sx * sy) / denom;
    const double icept = (sy - slope * sx) / used;
    eff.tail_exp = -slope;
    eff.tail_amp = std::exp(icept);
    if (!(eff.tail_exp > 1.05))
        throw TailUnfittable("effective_density: fitted tail exponent <= 1.05; adjust z_max");

    // normalize: trapezoid over the grid plus the analytic tail mass
    double mass = 0.0;
    for (std::size_t i = 1; i < eff.grid.size(); ++i)
        mass += 0.5 * (eff.values[i] + eff.values[i - 1]) * (eff.grid[i] - eff.grid[i - 1]);
    const double tail_mass = 2.0 * eff.tail_amp * std::pow(spec.z_max, 1.0 - eff.tail_exp) /
                             (eff.tail_exp - 1.0);
    eff.normalization = mass + tail_mass;
    for (auto& v : eff.values) v /= eff.normalization;
    eff.tail_amp /= eff.normalization;

    const double peak = *std::max_element(eff.values.begin(), eff.values.end());
    eff.peak_se = std::sqrt(peak / (2.0 * std::sqrt(M_PI) * static_cast<double>(M) * h));
    return eff;
}

// Closed-form solution of the RDE for Cauchy disorder: the Cauchy family is
// stable under the map, so the law of Gamma is tracked by (location, scale).
struct CauchyParams {
    double location = 0.0;
    double scale = 1.0;
};

struct CauchyFixedPoint {
    CauchyParams gamma_pool;  // law of Gamma at the fixed point
    CauchyParams effective;   // law of V - E - t^2 sum_{i<K} Gamma_i
    int iterations = 0;
};

inline CauchyParams cauchy_reciprocal(const CauchyParams& c) {
    const double r = c.location * c.location + c.scale * c.scale;
    return {c.location / r, c.scale / r};
}

inline CauchyFixedPoint cauchy_fixed_point(const ModelParams& params, double gamma_scale) {
    if (!(gamma_scale > 0.0)) throw std::invalid_argument("cauchy_fixed_point: scale must be > 0");
    const double t2 = params.t * params.t;
    const double K = static_cast<double>(params.K);
    // start from the law of 1/(V-E)
    CauchyParams cur = cauchy_reciprocal({-params.E, gamma_scale});
    const int max_iter = 100000;
    int it = 0;
    for (; it < max_iter; ++it) {
        const CauchyParams den{-params.E - t2 * K * cur.location, gamma_scale + t2 * K * cur.scale};
        const CauchyParams next = cauchy_reciprocal(den);
        const bool done = std::abs(next.location - cur.location) < 1e-12 &&
                          std::abs(next.scale - cur.scale) < 1e-12;
        cur = next;
        if (done) break;
    }
    if (it >= max_iter)
        throw std::runtime_error("cauchy_fixed_point: no convergence after 1e5 iterations");
    CauchyFixedPoint out;
    out.gamma_pool = cur;
    out.effective = {-params.E - t2 * (K - 1.0) * cur.location,
                     gamma_scale + t2 * (K - 1.0) * cur.scale};
    out.iterations = it + 1;
    return out;
}

inline double cauchy_pdf(const CauchyParams& c, double x) {
    const double dx = x - c.location;
    return c.scale / (M_PI * (dx * dx + c.scale * c.scale));
}

inline double cauchy_cdf(const CauchyParams& c, double x) {
    return 0.5 + std::atan((x - c.location) / c.scale) / M_PI;
}

} // namespace treeloc
