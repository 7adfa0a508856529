#pragma once

#include <cmath>

#include "nmqsd/core.hpp"
#include "nmqsd/kernel.hpp"
#include "nmqsd/rng.hpp"

namespace nmqsd {

// One realization of the complex Gaussian process z_t on a uniform grid.
struct NoisePath {
    RealVector times;
    ComplexVector values;
    std::uint64_t stream_id = 0;
};

inline RealVector uniform_grid(double T, double dt) {
    const double steps = T / dt;
    const auto n = static_cast<Eigen::Index>(std::llround(steps));
    if (std::abs(steps - double(n)) > 1e-9)
        throw ConfigError("uniform_grid: T/dt not integral");
    RealVector g(n + 1);
    for (Eigen::Index i = 0; i <= n; ++i) g(i) = i * dt;
    return g;
}

// Factor C = M M^dag (Cholesky, with diagonal regularization
// 1e-12 * trace/n for rank-deficient kernels such as the single mode).
inline ComplexMatrix covariance_factor(const ComplexMatrix& C) {
    const Eigen::Index n = C.rows();
    const double reg = 1e-12 * C.real().trace() / double(n);
    ComplexMatrix Creg = C + reg * ComplexMatrix::Identity(n, n);
    Eigen::LLT<ComplexMatrix> llt(Creg);
    if (llt.info() != Eigen::Success)
        throw NotPositiveSemidefiniteError("covariance_factor: Cholesky failed");
    return llt.matrixL();
}

// Draw z with M[z_i^* z_j] = C(i,j) and M[z_i z_j] = 0.
//
// With circular w (M[w w^dag] = I, M[w w^T] = 0) and z = conj(M) w:
//   M[z_i^* z_j] = sum_k M_ik conj(M_jk) = (M M^dag)_ij = C_ij,
// and the relation function M[z z^T] vanishes identically.
inline NoisePath sample_path_factorized(const ComplexMatrix& factor, const RealVector& grid,
                                        std::uint64_t global_seed, std::uint64_t stream_id) {
    const Eigen::Index n = grid.size();
    require_same_dim(factor.rows(), n, "sample_path_factorized");
    RngStream rng(global_seed, stream_id);
    ComplexVector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = rng.next_complex_normal();
    NoisePath p;
    p.times = grid;
    p.values = factor.conjugate() * w;
    p.stream_id = stream_id;
    return p;
}

inline NoisePath sample_path_cholesky(const CorrelationKernel& k, const RealVector& grid,
                                      std::uint64_t global_seed, std::uint64_t stream_id) {
    return sample_path_factorized(covariance_factor(build_covariance(k, grid)), grid, global_seed,
                                  stream_id);
}

// Stationary complex Ornstein-Uhlenbeck recursion for the exponential kernel:
//   z_{n+1} = exp(-(gamma - i Omega) dt) z_n + xi_n,
// Var(z_0) = weight, Var(xi_n) = weight (1 - exp(-2 gamma dt)).
// The update phase rotates as exp(+i Omega dt) so that for t > s
//   M[z_t^* z_s] = weight exp(-(gamma + i Omega)(t-s)) = alpha(t,s).
struct OuNoiseGen {
    Complex phi;
    double sig0, sig;

    OuNoiseGen(const ExponentialKernel& k, double dt)
        : phi(std::exp(Complex(-k.gamma * dt, k.Omega * dt))),
          sig0(std::sqrt(k.weight)),
          sig(std::sqrt(k.weight * (1.0 - std::exp(-2.0 * k.gamma * dt)))) {}

    Complex init(RngStream& rng) const { return sig0 * rng.next_complex_normal(); }
    Complex next(Complex z, RngStream& rng) const { return phi * z + sig * rng.next_complex_normal(); }
};

// Single mode: z_t = w exp(+i Omega t) with M[|w|^2] = g2, giving
//   M[z_t^* z_s] = g2 exp(-i Omega (t-s)).
struct SingleModeNoiseGen {
    double Omega;
    double amp;

    explicit SingleModeNoiseGen(const SingleModeKernel& k) : Omega(k.Omega), amp(std::sqrt(k.g2)) {}

    Complex init(RngStream& rng) const { return amp * rng.next_complex_normal(); }
    Complex at(Complex w, double t) const { return w * std::exp(Complex(0.0, Omega * t)); }
};

// O(n) closed-form samplers for the two analytic kernels.
inline NoisePath sample_path_recursive(const CorrelationKernel& k, const RealVector& grid,
                                       std::uint64_t global_seed, std::uint64_t stream_id) {
    const Eigen::Index n = grid.size();
    NoisePath p;
    p.times = grid;
    p.values.resize(n);
    p.stream_id = stream_id;
    RngStream rng(global_seed, stream_id);
    if (auto* e = std::get_if<ExponentialKernel>(&k)) {
        const double dt = n > 1 ? grid(1) - grid(0) : 0.0;
        const OuNoiseGen gen(*e, dt);
        Complex z = gen.init(rng);
        p.values(0) = z;
        for (Eigen::Index i = 1; i < n; ++i) {
            z = gen.next(z, rng);
            p.values(i) = z;
        }
        return p;
    }
    if (auto* m = std::get_if<SingleModeKernel>(&k)) {
        const SingleModeNoiseGen gen(*m);
        const Complex w = gen.init(rng);
        for (Eigen::Index i = 0; i < n; ++i) p.values(i) = gen.at(w, grid(i));
        return p;
    }
    throw UnsupportedKernelError("sample_path_recursive: exponential or single-mode kernel required");
}

}  // namespace nmqsd
