#pragma once

#include <cmath>
#include <vector>

#include "nmqsd/core.hpp"

namespace nmqsd {

// ---------------------------------------------------------------------------
// States.
//
// Basis conventions: spin index 0 = |up>, index 1 = |down>; oscillator
// index n = Fock state |n>.
// ---------------------------------------------------------------------------

inline double norm_of(const ComplexVector& psi) { return psi.norm(); }

inline ComplexVector normalize(const ComplexVector& psi) {
    const double n = psi.norm();
    if (n <= 1e-14)
        throw ZeroNormError("normalize: state norm " + std::to_string(n) + " below 1e-14");
    return psi / n;
}

inline bool is_normalized(const ComplexVector& psi, double tol = 1e-12) {
    return std::abs(psi.norm() - 1.0) <= tol;
}

inline Complex expectation(const ComplexVector& psi, const ComplexMatrix& A) {
    require_same_dim(psi.size(), A.rows(), "expectation");
    require_same_dim(A.rows(), A.cols(), "expectation");
    return psi.dot(A * psi);  // Eigen's dot conjugates the first argument
}

// Kronecker product, first factor = slow index.
inline ComplexMatrix tensor_product(const ComplexMatrix& A, const ComplexMatrix& B) {
    ComplexMatrix out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return out;
}

inline ComplexVector tensor_product(const ComplexVector& a, const ComplexVector& b) {
    ComplexVector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a(i) * b;
    return out;
}

// Partial trace of a (d1*d2)-dimensional density matrix; keep = 1 keeps the
// slow (first) factor, keep = 2 the fast one. Trace is preserved.
inline ComplexMatrix partial_trace(const ComplexMatrix& rho, Eigen::Index d1, Eigen::Index d2,
                                   int keep) {
    require_same_dim(rho.rows(), d1 * d2, "partial_trace");
    require_same_dim(rho.rows(), rho.cols(), "partial_trace");
    if (keep == 1) {
        ComplexMatrix out = ComplexMatrix::Zero(d1, d1);
        for (Eigen::Index i = 0; i < d1; ++i)
            for (Eigen::Index j = 0; j < d1; ++j)
                for (Eigen::Index k = 0; k < d2; ++k)
                    out(i, j) += rho(i * d2 + k, j * d2 + k);
        return out;
    }
    if (keep == 2) {
        ComplexMatrix out = ComplexMatrix::Zero(d2, d2);
        for (Eigen::Index i = 0; i < d2; ++i)
            for (Eigen::Index j = 0; j < d2; ++j)
                for (Eigen::Index k = 0; k < d1; ++k)
                    out(i, j) += rho(k * d2 + i, k * d2 + j);
        return out;
    }
    throw DimensionMismatchError("partial_trace: keep must be 1 or 2");
}

// Reduced state of a pure joint state without forming the joint projector:
// Tr_2 |psi><psi| = A A^dag with A = reshape(psi, d1 x d2).
inline ComplexMatrix reduced_density_from_pure(const ComplexVector& psi, Eigen::Index d1,
                                               Eigen::Index d2, int keep) {
    require_same_dim(psi.size(), d1 * d2, "reduced_density_from_pure");
    Eigen::Map<const ComplexMatrix> A(psi.data(), d2, d1);  // column-major: (fast, slow)
    if (keep == 1) return (A.adjoint() * A).transpose().eval();
    if (keep == 2) return (A * A.adjoint()).eval();
    throw DimensionMismatchError("reduced_density_from_pure: keep must be 1 or 2");
}

// ---------------------------------------------------------------------------
// Operators.
// ---------------------------------------------------------------------------

inline ComplexMatrix identity_op(Eigen::Index dim) { return ComplexMatrix::Identity(dim, dim); }

inline ComplexMatrix sigma_x() {
    ComplexMatrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}
inline ComplexMatrix sigma_y() {
    ComplexMatrix m(2, 2);
    m << 0, -kI, kI, 0;
    return m;
}
inline ComplexMatrix sigma_z() {
    ComplexMatrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}
// sigma_minus |up> = |down>
inline ComplexMatrix sigma_minus() {
    ComplexMatrix m = ComplexMatrix::Zero(2, 2);
    m(1, 0) = 1;
    return m;
}
inline ComplexMatrix sigma_plus() {
    ComplexMatrix m = ComplexMatrix::Zero(2, 2);
    m(0, 1) = 1;
    return m;
}

// Annihilation operator on a Fock space truncated at `dim` levels.
inline ComplexMatrix annihilation_op(Eigen::Index dim) {
    ComplexMatrix a = ComplexMatrix::Zero(dim, dim);
    for (Eigen::Index n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
}

inline ComplexMatrix number_op(Eigen::Index dim) {
    ComplexMatrix n = ComplexMatrix::Zero(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) n(k, k) = double(k);
    return n;
}

inline bool is_hermitian(const ComplexMatrix& A, double tol = 1e-12) {
    return (A - A.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

// ---------------------------------------------------------------------------
// Density-matrix utilities.
// ---------------------------------------------------------------------------

inline ComplexMatrix hermitize(const ComplexMatrix& rho) { return 0.5 * (rho + rho.adjoint()); }

inline double purity(const ComplexMatrix& rho) { return (rho * rho).trace().real(); }

inline double min_eigenvalue(const ComplexMatrix& herm) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(herm, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Trace distance (1/2)||rho1 - rho2||_1 between Hermitian matrices.
inline double trace_distance(const ComplexMatrix& rho1, const ComplexMatrix& rho2) {
    require_same_dim(rho1.rows(), rho2.rows(), "trace_distance");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitize(rho1 - rho2), Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline bool is_valid_density(const ComplexMatrix& rho, double herm_tol = 1e-10,
                             double trace_tol = 1e-10, double eig_tol = -1e-8) {
    if (rho.rows() != rho.cols()) return false;
    if (!is_hermitian(rho, herm_tol)) return false;
    if (std::abs(rho.trace().real() - 1.0) > trace_tol) return false;
    return min_eigenvalue(hermitize(rho)) >= eig_tol;
}

// ---------------------------------------------------------------------------
// Special states.
// ---------------------------------------------------------------------------

inline ComplexVector fock_state(Eigen::Index n, Eigen::Index dim) {
    ComplexVector v = ComplexVector::Zero(dim);
    v(n) = 1.0;
    return v;
}

// Coherent state |beta>: amplitudes beta^n / sqrt(n!), normalized. Throws
// if the truncation leaves more than 1e-8 weight at the top level.
inline ComplexVector coherent_state(Complex beta, Eigen::Index dim) {
    ComplexVector v(dim);
    v(0) = 1.0;
    for (Eigen::Index n = 1; n < dim; ++n) v(n) = v(n - 1) * beta / std::sqrt(double(n));
    v *= std::exp(-0.5 * std::norm(beta));
    if (std::norm(v(dim - 1)) >= 1e-8)
        throw TruncationTooSmallError("coherent_state: top-level weight " +
                                      std::to_string(std::norm(v(dim - 1))) + " at dim " +
                                      std::to_string(dim));
    return v / v.norm();
}

// Symmetric cat state ~ |alpha> + |-alpha>, normalized including the
// <alpha|-alpha> = exp(-2|alpha|^2) overlap.
inline ComplexVector cat_state(Complex alpha, Eigen::Index dim) {
    ComplexVector v = coherent_state(alpha, dim) + coherent_state(-alpha, dim);
    return v / v.norm();
}

// ---------------------------------------------------------------------------
// Q-function.
// ---------------------------------------------------------------------------

struct QGrid {
    double re_min = -4.5, re_max = 4.5;
    double im_min = -4.5, im_max = 4.5;
    int n_re = 81, n_im = 81;

    double re_at(int i) const { return re_min + (re_max - re_min) * i / double(n_re - 1); }
    double im_at(int j) const { return im_min + (im_max - im_min) * j / double(n_im - 1); }
    double cell_area() const {
        return (re_max - re_min) / double(n_re - 1) * (im_max - im_min) / double(n_im - 1);
    }
};

// Q(beta) = |<beta|psi>|^2 / pi on the grid, row-major over (i, j) =
// (re index, im index). <beta|psi> = exp(-|beta|^2/2) sum_n conj(beta)^n /
// sqrt(n!) psi_n.
inline RealMatrix q_function(const ComplexVector& psi, const QGrid& grid = {}) {
    const Eigen::Index dim = psi.size();
    RealMatrix q(grid.n_re, grid.n_im);
    for (int i = 0; i < grid.n_re; ++i) {
        for (int j = 0; j < grid.n_im; ++j) {
            const Complex beta(grid.re_at(i), grid.im_at(j));
            Complex coeff = 1.0;  // conj(beta)^n / sqrt(n!)
            Complex overlap = psi(0);
            for (Eigen::Index n = 1; n < dim; ++n) {
                coeff *= std::conj(beta) / std::sqrt(double(n));
                overlap += coeff * psi(n);
            }
            q(i, j) = std::norm(overlap) * std::exp(-std::norm(beta)) / kPi;
        }
    }
    return q;
}

inline double q_total_mass(const RealMatrix& q, const QGrid& grid) {
    return q.sum() * grid.cell_area();
}

// Count connected regions (4-neighbour) above `frac` of the field maximum.
// Used for the two-peak / merged / two-peak structure checks.
inline int count_peaks(const RealMatrix& q, double frac = 0.5) {
    const double thr = frac * q.maxCoeff();
    const int nr = int(q.rows()), ni = int(q.cols());
    std::vector<char> seen(size_t(nr) * ni, 0);
    auto idx = [&](int i, int j) { return size_t(i) * ni + j; };
    int count = 0;
    std::vector<std::pair<int, int>> stack;
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < ni; ++j) {
            if (q(i, j) < thr || seen[idx(i, j)]) continue;
            ++count;
            stack.push_back({i, j});
            seen[idx(i, j)] = 1;
            while (!stack.empty()) {
                auto [a, b] = stack.back();
                stack.pop_back();
                const int da[4] = {1, -1, 0, 0}, db[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int na = a + da[k], nb = b + db[k];
                    if (na < 0 || na >= nr || nb < 0 || nb >= ni) continue;
                    if (q(na, nb) < thr || seen[idx(na, nb)]) continue;
                    seen[idx(na, nb)] = 1;
                    stack.push_back({na, nb});
                }
            }
        }
    }
    return count;
}

}  // namespace nmqsd
