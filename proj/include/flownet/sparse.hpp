#pragma once

// Compressed-row symmetric matrix and a Jacobi-preconditioned conjugate
// gradient for singular graph Laplacians.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "flownet/error.hpp"

namespace flownet {

struct CsrMatrix {
    std::size_t rows = 0;
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> values;

    std::size_t nonzeros() const noexcept { return values.size(); }

    // y = A x
    void multiply(std::span<const double> x, std::span<double> y) const {
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) acc += values[k] * x[cols[k]];
            y[r] = acc;
        }
    }

    double at(std::size_t r, std::size_t c) const {
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k)
            if (cols[k] == c) return values[k];
        return 0.0;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r) d[r] = at(r, r);
        return d;
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void remove_mean(std::span<double> v) {
    if (v.empty()) return;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (auto& x : v) x -= mean;
}

struct CgResult {
    std::vector<double> x;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

// Solves A x = b for a connected graph Laplacian A (positive semidefinite,
// one-dimensional kernel spanned by the all-ones vector). b is projected onto
// the range first; the returned x has zero mean.
inline CgResult laplacian_pcg(const CsrMatrix& a, std::span<const double> b, double rel_tol, std::size_t max_iter) {
    const auto n = a.rows;
    CgResult res;
    res.x.assign(n, 0.0);
    std::vector<double> r(b.begin(), b.end());
    remove_mean(r);
    const double bnorm = norm2(r);
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    auto inv_diag = a.diagonal();
    for (auto& d : inv_diag) d = d > 0.0 ? 1.0 / d : 1.0;

    std::vector<double> z(n), p(n), ap(n);
    for (std::size_t k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
    p = z;
    double rz = dot(r, z);
    while (res.iterations < max_iter) {
        a.multiply(p, ap);
        const double pap = dot(p, ap);
        if (pap <= 0.0) break;
        const double alpha = rz / pap;
        for (std::size_t k = 0; k < n; ++k) {
            res.x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        ++res.iterations;
        if (norm2(r) <= rel_tol * bnorm) {
            res.converged = true;
            break;
        }
        for (std::size_t k = 0; k < n; ++k) z[k] = inv_diag[k] * r[k];
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    }
    remove_mean(res.x);

    // report the true residual, not the recurrence one
    std::vector<double> b_proj(b.begin(), b.end());
    remove_mean(b_proj);
    a.multiply(res.x, ap);
    for (std::size_t k = 0; k < n; ++k) ap[k] = b_proj[k] - ap[k];
    res.relative_residual = norm2(ap) / bnorm;
    return res;
}

}  // namespace flownet
