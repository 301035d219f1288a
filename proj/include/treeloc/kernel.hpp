#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "treeloc/disorder.hpp"
#include "treeloc/rde.hpp"

namespace treeloc {

// Symmetric log-spaced quadrature grid, n abscissas per sign, none at 0.
// Midpoint rule: abscissas are cell midpoints, weights are cell widths.
struct KernelGrid {
    std::vector<double> abscissas;  // strictly increasing, -x_max .. x_max
    std::vector<double> weights;
    double x_min = 0.0, x_max = 0.0;
    int n_per_sign = 0;

    std::size_t size() const { return abscissas.size(); }
};

inline KernelGrid build_grid(double x_min, double x_max, int n) {
    if (!(x_min > 0.0)) throw std::invalid_argument("build_grid: x_min must be > 0");
    if (!(x_max > x_min)) throw std::invalid_argument("build_grid: x_max must exceed x_min");
    if (n < 64) throw std::invalid_argument("build_grid: need n >= 64 points per sign");
    std::vector<double> edges(n + 1);
    const double lr = std::log(x_max / x_min) / n;
    for (int i = 0; i <= n; ++i) edges[i] = x_min * std::exp(lr * i);
    edges[n] = x_max;
    KernelGrid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.n_per_sign = n;
    g.abscissas.resize(2 * n);
    g.weights.resize(2 * n);
    for (int i = 0; i < n; ++i) {
        const double mid = 0.5 * (edges[i] + edges[i + 1]);
        const double w = edges[i + 1] - edges[i];
        g.abscissas[n + i] = mid;          // positive side ascending
        g.weights[n + i] = w;
        g.abscissas[n - 1 - i] = -mid;     // mirrored negative side
        g.weights[n - 1 - i] = w;
    }
    return g;
}

// Density source feeding the kernel: the bare disorder (method A), a
// population-dynamics effective density (method B), or the closed-form
// Cauchy effective density.
class DensitySource {
public:
    enum class Kind { bare, effective, cauchy_closed };

    static DensitySource bare(DisorderDensity d) {
        DensitySource s;
        s.kind_ = Kind::bare;
        s.disorder_ = std::make_shared<DisorderDensity>(std::move(d));
        return s;
    }
    static DensitySource effective(EffectiveDensity e) {
        DensitySource s;
        s.kind_ = Kind::effective;
        s.effective_ = std::make_shared<EffectiveDensity>(std::move(e));
        return s;
    }
    static DensitySource cauchy_closed(CauchyParams p) {
        DensitySource s;
        s.kind_ = Kind::cauchy_closed;
        s.cauchy_ = p;
        return s;
    }

    Kind kind() const { return kind_; }
    const DisorderDensity& disorder() const { return *disorder_; }
    const EffectiveDensity& effective_density_ref() const { return *effective_; }
    const CauchyParams& cauchy_params() const { return cauchy_; }

    double eval(double z) const {
        switch (kind_) {
            case Kind::bare: return disorder_->density(z);
            case Kind::effective: return effective_->eval(z);
            case Kind::cauchy_closed: return cauchy_pdf(cauchy_, z);
        }
        return 0.0;
    }

private:
    Kind kind_ = Kind::bare;
    std::shared_ptr<const DisorderDensity> disorder_;
    std::shared_ptr<const EffectiveDensity> effective_;
    CauchyParams cauchy_{};
};

// Discretization of the transfer operator with kernel
//   K(x,y) = t^{2-s} / |x|^{2-s} * rho_eff(-t^2/x - y).
// Entries are evaluated on the fly; matvec exploits structure per source.
struct DiscreteKernel {
    KernelGrid grid;
    ModelParams params;
    DensitySource source;
    std::vector<double> row_prefactor;  // t^{2-s} / |x_i|^{2-s}
    std::vector<double> row_shift;      // u_i = -t^2 / x_i

    double entry(std::size_t i, std::size_t j) const {
        return row_prefactor[i] * source.eval(row_shift[i] - grid.abscissas[j]) * grid.weights[j];
    }

    std::size_t size() const { return grid.size(); }

    // out = M * a with M_ij = entry(i, j). Row sums are accumulated in fixed
    // j-order, so results do not depend on the thread partition.
    void matvec(const std::vector<double>& a, std::vector<double>& out, int threads = 1) const {
        const std::size_t n = grid.size();
        std::vector<double> scaled(n);
        for (std::size_t j = 0; j < n; ++j) scaled[j] = a[j] * grid.weights[j];

        if (source.kind() == DensitySource::Kind::bare &&
            source.disorder().kind() == DisorderKind::uniform) {
            // uniform density: each row integrates a contiguous window of y;
            // use prefix sums
            const double w = source.disorder().uniform_halfwidth();
            const double h = source.disorder().sup_norm();
            std::vector<double> prefix(n + 1, 0.0);
            for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + scaled[j];
            const auto& ys = grid.abscissas;
            detail::parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    const double ylo = row_shift[i] - w, yhi = row_shift[i] + w;
                    const std::size_t jlo = std::lower_bound(ys.begin(), ys.end(), ylo) - ys.begin();
                    const std::size_t jhi = std::upper_bound(ys.begin(), ys.end(), yhi) - ys.begin();
                    out[i] = row_prefactor[i] * h * (prefix[jhi] - prefix[jlo]);
                }
            });
            return;
        }

        if (source.kind() == DensitySource::Kind::bare ||
            source.kind() == DensitySource::Kind::cauchy_closed) {
            // closed-form density: direct row sums
            detail::parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    const double u = row_shift[i];
                    double acc = 0.0;
                    if (source.kind() == DensitySource::Kind::cauchy_closed) {
                        const CauchyParams c = source.cauchy_params();
                        const double c2 = c.scale * c.scale;
                        for (std::size_t j = 0; j < n; ++j) {
                            const double dz = u - grid.abscissas[j] - c.location;
                            acc += scaled[j] / (dz * dz + c2);
                        }
                        acc *= c.scale / M_PI;
                    } else {
                        for (std::size_t j = 0; j < n; ++j)
                            acc += source.eval(u - grid.abscissas[j]) * scaled[j];
                    }
                    out[i] = row_prefactor[i] * acc;
                }
            });
            return;
        }

        // tabulated effective density: z = u_i - y_j decreases monotonically
        // in j, so a cursor walks the density grid once per row
        const EffectiveDensity& eff = source.effective_density_ref();
        const auto& eg = eff.grid;
        detail::parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const double u = row_shift[i];
                double acc = 0.0;
                // start cursor at the rightmost cell
                std::size_t cur = eg.size() - 2;
                for (std::size_t j = 0; j < n; ++j) {
                    const double zv = u - grid.abscissas[j];
                    double dval;
                    const double az = std::abs(zv);
                    if (az > eff.z_max) {
                        dval = eff.tail_amp / std::pow(az, eff.tail_exp);
                    } else {
                        while (cur > 0 && zv < eg[cur]) --cur;
                        const double f = (zv - eg[cur]) / (eg[cur + 1] - eg[cur]);
                        const double fc = std::fmax(0.0, std::fmin(1.0, f));
                        dval = eff.values[cur] + fc * (eff.values[cur + 1] - eff.values[cur]);
                    }
                    acc += dval * scaled[j];
                }
                out[i] = row_prefactor[i] * acc;
            }
        });
    }
};

inline DiscreteKernel assemble_kernel(DensitySource source, const ModelParams& params,
                                      KernelGrid grid) {
    if (!(params.s > 0.0 && params.s <= 1.0))
        throw std::invalid_argument("assemble_kernel: kernel moment exponent s must lie in (0,1]");
    DiscreteKernel k;
    k.params = params;
    k.source = std::move(source);
    const std::size_t n = grid.size();
    k.row_prefactor.resize(n);
    k.row_shift.resize(n);
    const double t2 = params.t * params.t;
    const double ex = 2.0 - params.s;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = grid.abscissas[i];
        k.row_prefactor[i] = std::pow(params.t, ex) / std::pow(std::abs(x), ex);
        k.row_shift[i] = -t2 / x;
        if (!std::isfinite(k.row_prefactor[i]) || !std::isfinite(k.row_shift[i]))
            throw std::runtime_error("assemble_kernel: non-finite row coefficients");
    }
    k.grid = std::move(grid);
    // finiteness sweep over all entries via one probe matvec
    std::vector<double> ones(n, 1.0), probe(n);
    k.matvec(ones, probe, 1);
    for (double v : probe)
        if (!std::isfinite(v)) throw std::runtime_error("assemble_kernel: non-finite kernel entry");
    return k;
}

struct EigenResult {
    double lambda = 0.0;
    std::vector<double> eigenvector;  // unit L1 quadrature norm, entries >= 0
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

// Power iteration on a nonnegative operator given as a matvec. Weights
// define the L1 quadrature norm used for normalization and the stopping
// test.
inline EigenResult power_iteration(const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply,
                                   std::size_t n, const std::vector<double>& weights,
                                   double tol, int max_iter) {
    if (!(tol > 0.0)) throw std::invalid_argument("power_iteration: tol must be > 0");
    EigenResult res;
    std::vector<double> a(n, 1.0), b(n);
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += std::abs(a[i]) * weights[i];
    for (auto& v : a) v /= nrm;
    double lambda = 0.0, resid = 0.0;
    int it = 0;
    for (it = 1; it <= max_iter; ++it) {
        apply(a, b);
        double growth = 0.0;
        for (std::size_t i = 0; i < n; ++i) growth += std::abs(b[i]) * weights[i];
        if (!(growth > 0.0) || !std::isfinite(growth))
            throw std::runtime_error("power_iteration: iterate collapsed to zero");
        for (auto& v : b) v /= growth;
        resid = 0.0;
        for (std::size_t i = 0; i < n; ++i) resid += std::abs(b[i] - a[i]) * weights[i];
        a.swap(b);
        lambda = growth;
        if (resid < tol) { res.converged = true; break; }
    }
    res.lambda = lambda;
    res.eigenvector = std::move(a);
    res.iterations = std::min(it, max_iter);
    res.residual = resid;
    return res;
}

inline EigenResult leading_eigen(const DiscreteKernel& kernel, double tol = 1e-10,
                                 int max_iter = 500, int threads = 1) {
    return power_iteration(
        [&](const std::vector<double>& in, std::vector<double>& out) {
            out.resize(kernel.size());
            kernel.matvec(in, out, threads);
        },
        kernel.size(), kernel.grid.weights, tol, max_iter);
}

// Fig.-style profile |x| a(x), normalized so its median over x in [0.05,
// 0.5] equals 1.
inline std::vector<std::pair<double, double>> eigenvector_profile(const EigenResult& res,
                                                                  const KernelGrid& grid) {
    if (!res.converged) throw std::invalid_argument("eigenvector_profile: eigensolve did not converge");
    std::vector<double> band;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.abscissas[i];
        if (x >= 0.05 && x <= 0.5) band.push_back(std::abs(x) * res.eigenvector[i]);
    }
    if (band.empty()) throw std::runtime_error("eigenvector_profile: grid has no points in [0.05, 0.5]");
    std::sort(band.begin(), band.end());
    const double med = band[band.size() / 2];
    if (!(med > 0.0)) throw std::runtime_error("eigenvector_profile: degenerate profile normalization");
    std::vector<std::pair<double, double>> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.abscissas[i];
        out[i] = {x, std::abs(x) * res.eigenvector[i] / med};
    }
    return out;
}

} // namespace treeloc
