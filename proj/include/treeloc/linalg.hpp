#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace treeloc {

// Ordinary least squares for a small number of basis columns.
// Solves min ||X c - y||_2 via normal equations + Gaussian elimination with
// partial pivoting; p is at most 3 here so this is adequate.
struct LeastSquaresResult {
    std::vector<double> coeffs;
    double residual_rms = 0.0;
    double condition = 0.0;       // 2-norm condition estimate of X^T X
    // diagonal of (X^T X)^{-1}, for error propagation tests
    std::vector<double> inv_gram_diag;
};

namespace detail {

// Eigenvalues of a symmetric 3x3 (or smaller, padded) matrix by the
// trigonometric solution of the characteristic cubic.
inline std::array<double, 3> sym3_eigenvalues(const std::array<std::array<double, 3>, 3>& a) {
    const double p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if (p1 == 0.0) return {a[0][0], a[1][1], a[2][2]};
    const double d0 = a[0][0] - q, d1 = a[1][1] - q, d2 = a[2][2] - q;
    const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    std::array<std::array<double, 3>, 3> b{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) b[i][j] = (a[i][j] - (i == j ? q : 0.0)) / p;
    const double detb =
        b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
        b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
        b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    double r = detb / 2.0;
    r = std::fmax(-1.0, std::fmin(1.0, r));
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    return {e1, e2, e3};
}

} // namespace detail

inline LeastSquaresResult least_squares(const std::vector<std::vector<double>>& columns,
                                        const std::vector<double>& y) {
    const std::size_t p = columns.size();
    if (p == 0 || p > 3) throw std::invalid_argument("least_squares: need 1..3 columns");
    const std::size_t n = y.size();
    for (const auto& c : columns)
        if (c.size() != n) throw std::invalid_argument("least_squares: column size mismatch");
    if (n < p) throw std::invalid_argument("least_squares: underdetermined system");

    // Gram matrix and right-hand side
    std::array<std::array<double, 3>, 3> g{};
    std::array<double, 3> rhs{};
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += columns[i][k] * columns[j][k];
            g[i][j] = s;
        }
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += columns[i][k] * y[k];
        rhs[i] = s;
    }

    // condition number of the (padded) Gram matrix
    std::array<std::array<double, 3>, 3> gp = g;
    for (std::size_t i = p; i < 3; ++i) gp[i][i] = 1.0;
    auto ev = detail::sym3_eigenvalues(gp);
    double emax = 0.0, emin = std::abs(ev[0]);
    for (double e : ev) {
        emax = std::fmax(emax, std::abs(e));
        emin = std::fmin(emin, std::abs(e));
    }
    const double cond = (emin > 0.0) ? emax / emin : std::numeric_limits<double>::infinity();

    // invert Gram (Gauss-Jordan on the small padded matrix)
    std::array<std::array<double, 6>, 3> aug{};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) aug[i][j] = gp[i][j];
        aug[i][3 + i] = 1.0;
    }
    for (std::size_t col = 0; col < 3; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < 3; ++r)
            if (std::abs(aug[r][col]) > std::abs(aug[piv][col])) piv = r;
        if (aug[piv][col] == 0.0) throw std::runtime_error("least_squares: singular design");
        std::swap(aug[col], aug[piv]);
        const double d = aug[col][col];
        for (std::size_t j = 0; j < 6; ++j) aug[col][j] /= d;
        for (std::size_t r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = aug[r][col];
            for (std::size_t j = 0; j < 6; ++j) aug[r][j] -= f * aug[col][j];
        }
    }

    LeastSquaresResult out;
    out.condition = cond;
    out.coeffs.assign(p, 0.0);
    out.inv_gram_diag.assign(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p; ++j) s += aug[i][3 + j] * rhs[j];
        out.coeffs[i] = s;
        out.inv_gram_diag[i] = aug[i][3 + i];
    }
    double rss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double fit = 0.0;
        for (std::size_t i = 0; i < p; ++i) fit += out.coeffs[i] * columns[i][k];
        rss += (y[k] - fit) * (y[k] - fit);
    }
    out.residual_rms = std::sqrt(rss / static_cast<double>(n));
    return out;
}

} // namespace treeloc
