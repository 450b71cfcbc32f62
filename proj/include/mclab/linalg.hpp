#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mclab/common.hpp"

namespace mclab::linalg {

// Dense symmetric r x r systems, r small (the model rank). Row-major storage.

// Cholesky factorization A = L L^T in place; returns false if a pivot falls
// below tol * max-diagonal (A not safely positive definite).
inline bool cholesky(std::vector<double>& a, std::size_t r, double tol = 1e-12) {
    double scale = 0.0;
    for (std::size_t i = 0; i < r; ++i) scale = std::max(scale, std::abs(a[i * r + i]));
    if (scale == 0.0) return false;
    for (std::size_t j = 0; j < r; ++j) {
        double d = a[j * r + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * r + k] * a[j * r + k];
        if (d <= tol * scale) return false;
        double root = std::sqrt(d);
        a[j * r + j] = root;
        for (std::size_t i = j + 1; i < r; ++i) {
            double s = a[i * r + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * r + k] * a[j * r + k];
            a[i * r + j] = s / root;
        }
    }
    return true;
}

inline void cholesky_solve(const std::vector<double>& l, std::size_t r, std::vector<double>& b) {
    for (std::size_t i = 0; i < r; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * r + k] * b[k];
        b[i] = s / l[i * r + i];
    }
    for (std::size_t ii = r; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < r; ++k) s -= l[k * r + ii] * b[k];
        b[ii] = s / l[ii * r + ii];
    }
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. On return `a` holds
// the eigenvalues on its diagonal and `v` the eigenvectors (columns).
inline void jacobi_eigen(std::vector<double>& a, std::size_t r, std::vector<double>& v) {
    v.assign(r * r, 0.0);
    for (std::size_t i = 0; i < r; ++i) v[i * r + i] = 1.0;
    if (r < 2) return;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < r; ++p)
            for (std::size_t q = p + 1; q < r; ++q) off += a[p * r + q] * a[p * r + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < r; ++p) {
            for (std::size_t q = p + 1; q < r; ++q) {
                double apq = a[p * r + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a[q * r + q] - a[p * r + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t k = 0; k < r; ++k) {
                    double akp = a[k * r + p], akq = a[k * r + q];
                    a[k * r + p] = c * akp - s * akq;
                    a[k * r + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < r; ++k) {
                    double apk = a[p * r + k], aqk = a[q * r + k];
                    a[p * r + k] = c * apk - s * aqk;
                    a[q * r + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < r; ++k) {
                    double vkp = v[k * r + p], vkq = v[k * r + q];
                    v[k * r + p] = c * vkp - s * vkq;
                    v[k * r + q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

// Solves the symmetric PSD system A x = b. Uses Cholesky when A is positive
// definite; otherwise returns the minimal-norm least-squares solution via the
// eigendecomposition pseudo-inverse.
inline std::vector<double> solve_spsd(std::vector<double> a, std::size_t r,
                                      const std::vector<double>& b) {
    std::vector<double> chol = a;
    if (cholesky(chol, r)) {
        std::vector<double> x = b;
        cholesky_solve(chol, r, x);
        return x;
    }
    std::vector<double> vecs;
    jacobi_eigen(a, r, vecs);
    double max_eig = 0.0;
    for (std::size_t i = 0; i < r; ++i) max_eig = std::max(max_eig, std::abs(a[i * r + i]));
    double cutoff = max_eig * 1e-12;
    std::vector<double> x(r, 0.0);
    for (std::size_t j = 0; j < r; ++j) {
        double lambda = a[j * r + j];
        if (std::abs(lambda) <= cutoff) continue;
        double proj = 0.0;
        for (std::size_t i = 0; i < r; ++i) proj += vecs[i * r + j] * b[i];
        proj /= lambda;
        for (std::size_t i = 0; i < r; ++i) x[i] += proj * vecs[i * r + j];
    }
    return x;
}

}  // namespace mclab::linalg
