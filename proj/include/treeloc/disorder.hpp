#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "treeloc/rng.hpp"

namespace treeloc {

enum class DisorderKind { uniform, cauchy, tabulated };

// A disorder density rho with the scalar functionals the bounds need:
// sup norm, (interior) Lipschitz constant and a power-law tail envelope
// rho(v) <= tail_amp / |v|^{1+tail_sigma}. Immutable after construction.
class DisorderDensity {
public:
    static DisorderDensity uniform(double halfwidth) {
        if (!(halfwidth > 0.0)) throw std::invalid_argument("uniform disorder: halfwidth must be > 0");
        DisorderDensity d;
        d.kind_ = DisorderKind::uniform;
        d.halfwidth_ = halfwidth;
        d.sup_norm_ = 0.5 / halfwidth;
        // flat inside the support; the density is not Lipschitz across the
        // edge, so the stored constant is the interior one
        d.lipschitz_ = 0.0;
        d.tail_sigma_ = 0.5;
        d.tail_amp_ = d.sup_norm_ * std::pow(halfwidth, 1.5);
        return d;
    }

    static DisorderDensity cauchy(double scale) {
        if (!(scale > 0.0)) throw std::invalid_argument("cauchy disorder: scale must be > 0");
        DisorderDensity d;
        d.kind_ = DisorderKind::cauchy;
        d.scale_ = scale;
        d.sup_norm_ = 1.0 / (M_PI * scale);
        // max |rho'| is at v = scale/sqrt(3)
        d.lipschitz_ = 9.0 / (8.0 * std::sqrt(3.0) * M_PI * scale * scale);
        d.tail_sigma_ = 0.5;
        d.tail_amp_ = d.numeric_tail_amp(0.5);
        return d;
    }

    // Two-column whitespace-separated file (v, rho(v)), strictly increasing
    // v, at least 64 rows. Optional "# key value" comment lines may override
    // sup_norm / lipschitz / tail_sigma / tail_amp; anything not supplied is
    // estimated by grid scan (a warning notes the approximation).
    static DisorderDensity tabulated_from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open disorder file: " + path);
        DisorderDensity d;
        d.kind_ = DisorderKind::tabulated;
        double o_sup = -1.0, o_lip = -1.0, o_sigma = -1.0, o_amp = -1.0;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                std::istringstream hs(line.substr(1));
                std::string key; double val;
                if (hs >> key >> val) {
                    if (key == "sup_norm") o_sup = val;
                    else if (key == "lipschitz") o_lip = val;
                    else if (key == "tail_sigma") o_sigma = val;
                    else if (key == "tail_amp") o_amp = val;
                }
                continue;
            }
            std::istringstream ls(line);
            double v, p;
            if (!(ls >> v >> p)) throw std::runtime_error("disorder file: malformed row: " + line);
            if (p < 0.0) throw std::runtime_error("disorder file: negative density");
            if (!d.tab_v_.empty() && v <= d.tab_v_.back())
                throw std::runtime_error("disorder file: abscissas must be strictly increasing");
            d.tab_v_.push_back(v);
            d.tab_p_.push_back(p);
        }
        if (d.tab_v_.size() < 64) throw std::runtime_error("disorder file: need at least 64 rows");

        d.tail_sigma_ = (o_sigma > 0.0) ? o_sigma : 0.5;
        if (!(d.tail_sigma_ > 0.0 && d.tail_sigma_ < 1.0))
            throw std::runtime_error("disorder file: tail_sigma must lie in (0,1)");
        // match the tail envelope to the outermost tabulated values
        d.tab_tail_amp_left_ = d.tab_p_.front() * std::pow(std::abs(d.tab_v_.front()), 1.0 + d.tail_sigma_);
        d.tab_tail_amp_right_ = d.tab_p_.back() * std::pow(std::abs(d.tab_v_.back()), 1.0 + d.tail_sigma_);
        if (d.tab_v_.front() > 0.0 || d.tab_v_.back() < 0.0)
            throw std::runtime_error("disorder file: grid must straddle v = 0");
        d.normalize_tabulated();

        if (o_sup > 0.0) d.sup_norm_ = o_sup;
        else d.sup_norm_ = *std::max_element(d.tab_p_.begin(), d.tab_p_.end());
        if (o_lip >= 0.0) d.lipschitz_ = o_lip;
        else {
            double lip = 0.0;
            for (std::size_t i = 1; i < d.tab_v_.size(); ++i)
                lip = std::fmax(lip, std::abs(d.tab_p_[i] - d.tab_p_[i - 1]) /
                                         (d.tab_v_[i] - d.tab_v_[i - 1]));
            d.lipschitz_ = lip;
        }
        if (o_amp > 0.0) d.tail_amp_ = o_amp;
        else d.tail_amp_ = d.numeric_tail_amp(d.tail_sigma_);
        if (o_sup <= 0.0 || o_lip < 0.0 || o_amp <= 0.0)
            std::cerr << "warning: disorder file " << path
                      << ": sup_norm/lipschitz/tail estimated by grid scan (approximate)\n";
        return d;
    }

    DisorderKind kind() const { return kind_; }
    double sup_norm() const { return sup_norm_; }
    double lipschitz() const { return lipschitz_; }
    double tail_sigma() const { return tail_sigma_; }
    double tail_amp() const { return tail_amp_; }
    double uniform_halfwidth() const { return halfwidth_; }
    double cauchy_scale() const { return scale_; }

    // rho(v); total function
    double density(double v) const {
        switch (kind_) {
            case DisorderKind::uniform:
                return (std::abs(v) <= halfwidth_) ? 0.5 / halfwidth_ : 0.0;
            case DisorderKind::cauchy:
                return scale_ / (M_PI * (v * v + scale_ * scale_));
            case DisorderKind::tabulated: {
                if (v < tab_v_.front())
                    return tab_tail_amp_left_ / std::pow(std::abs(v), 1.0 + tail_sigma_);
                if (v > tab_v_.back())
                    return tab_tail_amp_right_ / std::pow(std::abs(v), 1.0 + tail_sigma_);
                const auto it = std::upper_bound(tab_v_.begin(), tab_v_.end(), v);
                const std::size_t j = std::min(tab_v_.size() - 1,
                                               static_cast<std::size_t>(it - tab_v_.begin()));
                if (j == 0) return tab_p_.front();
                const double f = (v - tab_v_[j - 1]) / (tab_v_[j] - tab_v_[j - 1]);
                return tab_p_[j - 1] + f * (tab_p_[j] - tab_p_[j - 1]);
            }
        }
        return 0.0;
    }

    double cdf(double v) const {
        switch (kind_) {
            case DisorderKind::uniform:
                if (v <= -halfwidth_) return 0.0;
                if (v >= halfwidth_) return 1.0;
                return (v + halfwidth_) / (2.0 * halfwidth_);
            case DisorderKind::cauchy:
                return 0.5 + std::atan(v / scale_) / M_PI;
            case DisorderKind::tabulated: {
                if (v <= tab_v_.front())
                    return tab_mass_left_ * std::pow(tab_v_.front() / v, tail_sigma_);
                if (v >= tab_v_.back())
                    return 1.0 - tab_mass_right_ * std::pow(tab_v_.back() / v, tail_sigma_);
                const auto it = std::upper_bound(tab_v_.begin(), tab_v_.end(), v);
                const std::size_t j = static_cast<std::size_t>(it - tab_v_.begin());
                const double f = (v - tab_v_[j - 1]) / (tab_v_[j] - tab_v_[j - 1]);
                const double pj = tab_p_[j - 1] + f * (tab_p_[j] - tab_p_[j - 1]);
                return tab_cdf_[j - 1] + 0.5 * (tab_p_[j - 1] + pj) * (v - tab_v_[j - 1]);
            }
        }
        return 0.0;
    }

    // inverse-CDF draw
    double sample(Rng& rng) const {
        const double u = rng.uniform01_open();
        switch (kind_) {
            case DisorderKind::uniform:
                return (2.0 * u - 1.0) * halfwidth_;
            case DisorderKind::cauchy:
                return scale_ * std::tan(M_PI * (u - 0.5));
            case DisorderKind::tabulated:
                return tabulated_quantile(u);
        }
        return 0.0;
    }

    // (m, M) = (inf, sup) of rho over the window [E-alpha, E+alpha]
    std::pair<double, double> window_extrema(double E, double alpha) const {
        if (!(alpha > 0.0)) throw std::invalid_argument("window_extrema: alpha must be > 0");
        const double lo = E - alpha, hi = E + alpha;
        switch (kind_) {
            case DisorderKind::uniform: {
                const double h = sup_norm_;
                const double M = (lo <= halfwidth_ && hi >= -halfwidth_) ? h : 0.0;
                const double m = (lo >= -halfwidth_ && hi <= halfwidth_) ? h : 0.0;
                return {m, M};
            }
            case DisorderKind::cauchy: {
                // density is decreasing in |v|
                const double far = std::fmax(std::abs(lo), std::abs(hi));
                const double near = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::fmin(std::abs(lo), std::abs(hi));
                return {density(far), density(near)};
            }
            case DisorderKind::tabulated: {
                double m = std::numeric_limits<double>::infinity(), M = 0.0;
                const int steps = 4096;
                for (int i = 0; i <= steps; ++i) {
                    const double v = lo + (hi - lo) * static_cast<double>(i) / steps;
                    const double p = density(v);
                    m = std::fmin(m, p);
                    M = std::fmax(M, p);
                }
                return {m, M};
            }
        }
        return {0.0, 0.0};
    }

private:
    DisorderDensity() = default;

    double numeric_tail_amp(double sigma) const {
        // sup_v rho(v) |v|^{1+sigma} by coarse log scan plus local refinement
        double best = 0.0, best_v = 1.0;
        for (int i = 0; i <= 4000; ++i) {
            const double v = std::pow(10.0, -3.0 + 9.0 * i / 4000.0);
            const double f = density(v) * std::pow(v, 1.0 + sigma);
            const double fm = density(-v) * std::pow(v, 1.0 + sigma);
            if (f > best) { best = f; best_v = v; }
            if (fm > best) { best = fm; best_v = -v; }
        }
        for (int r = 0; r < 60; ++r) {
            const double step = std::abs(best_v) * 2e-3;
            for (double v : {best_v - step, best_v + step}) {
                const double f = density(v) * std::pow(std::abs(v), 1.0 + sigma);
                if (f > best) { best = f; best_v = v; }
            }
        }
        return best;
    }

    void normalize_tabulated() {
        // trapezoid over the grid + analytic tails, then rescale so the
        // total integrates to exactly 1
        double grid_mass = 0.0;
        for (std::size_t i = 1; i < tab_v_.size(); ++i)
            grid_mass += 0.5 * (tab_p_[i] + tab_p_[i - 1]) * (tab_v_[i] - tab_v_[i - 1]);
        const double s = tail_sigma_;
        double left = tab_tail_amp_left_ * std::pow(std::abs(tab_v_.front()), -s) / s;
        double right = tab_tail_amp_right_ * std::pow(std::abs(tab_v_.back()), -s) / s;
        const double total = grid_mass + left + right;
        if (!(total > 0.0)) throw std::runtime_error("disorder file: zero total mass");
        for (auto& p : tab_p_) p /= total;
        tab_tail_amp_left_ /= total;
        tab_tail_amp_right_ /= total;
        tab_mass_left_ = left / total;
        tab_mass_right_ = right / total;
        tab_cdf_.assign(tab_v_.size(), 0.0);
        tab_cdf_[0] = tab_mass_left_;
        for (std::size_t i = 1; i < tab_v_.size(); ++i)
            tab_cdf_[i] = tab_cdf_[i - 1] + 0.5 * (tab_p_[i] + tab_p_[i - 1]) * (tab_v_[i] - tab_v_[i - 1]);
    }

    double tabulated_quantile(double u) const {
        const double s = tail_sigma_;
        if (u <= tab_mass_left_)
            return tab_v_.front() * std::pow(tab_mass_left_ / u, 1.0 / s);
        if (u >= 1.0 - tab_mass_right_)
            return tab_v_.back() * std::pow(tab_mass_right_ / (1.0 - u), 1.0 / s);
        const auto it = std::upper_bound(tab_cdf_.begin(), tab_cdf_.end(), u);
        std::size_t j = std::min(tab_cdf_.size() - 1, static_cast<std::size_t>(it - tab_cdf_.begin()));
        if (j == 0) j = 1;
        // invert the trapezoid segment (quadratic in the offset)
        const double c0 = tab_cdf_[j - 1], dv = tab_v_[j] - tab_v_[j - 1];
        const double p0 = tab_p_[j - 1], p1 = tab_p_[j];
        const double du = u - c0;
        const double slope = (p1 - p0) / dv;
        double x;
        if (std::abs(slope) < 1e-14 * std::fmax(p0, 1e-300)) {
            x = (p0 > 0.0) ? du / p0 : 0.5 * dv;
        } else {
            const double disc = p0 * p0 + 2.0 * slope * du;
            x = (std::sqrt(std::fmax(disc, 0.0)) - p0) / slope;
        }
        return tab_v_[j - 1] + std::fmin(std::fmax(x, 0.0), dv);
    }

    DisorderKind kind_ = DisorderKind::uniform;
    double halfwidth_ = 1.0;
    double scale_ = 1.0;
    double sup_norm_ = 0.5;
    double lipschitz_ = 0.0;
    double tail_sigma_ = 0.5;
    double tail_amp_ = 0.5;
    std::vector<double> tab_v_, tab_p_, tab_cdf_;
    double tab_tail_amp_left_ = 0.0, tab_tail_amp_right_ = 0.0;
    double tab_mass_left_ = 0.0, tab_mass_right_ = 0.0;
};

} // namespace treeloc
