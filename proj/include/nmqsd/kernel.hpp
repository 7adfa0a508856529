#pragma once

#include <cmath>
#include <variant>

#include "nmqsd/core.hpp"

namespace nmqsd {

// Environment correlation function alpha(t,s) = M[z_t^* z_s], Hermitian:
// alpha(t,s) = conj(alpha(s,t)).

// White noise, alpha(t,s) = delta(t-s). Has no pointwise value; only its
// grid discretization (covariance I/dt) is defined.
struct DeltaKernel {};

// alpha(t,s) = weight * exp(-gamma|t-s| - i Omega (t-s)), memory time 1/gamma.
struct ExponentialKernel {
    double gamma;
    double Omega;
    double weight;  // defaults to gamma/2 so that the kernel integrates to 1

    explicit ExponentialKernel(double gamma_, double Omega_ = 0.0, double weight_ = -1.0)
        : gamma(gamma_), Omega(Omega_), weight(weight_ < 0 ? 0.5 * gamma_ : weight_) {}
};

// alpha(t,s) = g2 * exp(-i Omega (t-s)): a single undamped environment mode.
struct SingleModeKernel {
    double Omega;
    double g2 = 1.0;
};

// Arbitrary Hermitian kernel sampled on a fixed time grid.
struct SampledKernel {
    RealVector times;
    ComplexMatrix matrix;  // matrix(i,j) = alpha(times[i], times[j])
};

using CorrelationKernel = std::variant<DeltaKernel, ExponentialKernel, SingleModeKernel, SampledKernel>;

inline Complex kernel_eval(const CorrelationKernel& k, double t, double s) {
    return std::visit(
        [&](const auto& kk) -> Complex {
            using T = std::decay_t<decltype(kk)>;
            if constexpr (std::is_same_v<T, DeltaKernel>) {
                throw DeltaNotPointwiseError("kernel_eval: delta kernel has no pointwise value");
            } else if constexpr (std::is_same_v<T, ExponentialKernel>) {
                return kk.weight * std::exp(Complex(-kk.gamma * std::abs(t - s), -kk.Omega * (t - s)));
            } else if constexpr (std::is_same_v<T, SingleModeKernel>) {
                return kk.g2 * std::exp(Complex(0.0, -kk.Omega * (t - s)));
            } else {
                // nearest grid point lookup; the sampled kernel is grid-aligned by contract
                const auto& tv = kk.times;
                auto nearest = [&](double x) {
                    Eigen::Index best = 0;
                    double dbest = std::abs(tv(0) - x);
                    for (Eigen::Index i = 1; i < tv.size(); ++i)
                        if (std::abs(tv(i) - x) < dbest) { dbest = std::abs(tv(i) - x); best = i; }
                    return best;
                };
                return kk.matrix(nearest(t), nearest(s));
            }
        },
        k);
}

// Zero-lag variance alpha(t,t) for the analytic stationary kernels.
inline double kernel_zero_lag(const CorrelationKernel& k) {
    if (auto* e = std::get_if<ExponentialKernel>(&k)) return e->weight;
    if (auto* m = std::get_if<SingleModeKernel>(&k)) return m->g2;
    throw UnsupportedKernelError("kernel_zero_lag: analytic stationary kernel required");
}

// Decay constant kappa with alpha(t,s) = alpha0 * exp(-kappa (t-s)) for t>=s;
// kappa = gamma + i*Omega (single mode: i*Omega).
inline Complex kernel_decay_constant(const CorrelationKernel& k) {
    if (auto* e = std::get_if<ExponentialKernel>(&k)) return {e->gamma, e->Omega};
    if (auto* m = std::get_if<SingleModeKernel>(&k)) return {0.0, m->Omega};
    throw UnsupportedKernelError("kernel_decay_constant: analytic stationary kernel required");
}

// A(t) = int_0^t alpha(t,s) ds, closed form for the analytic kernels:
// alpha0 * (1 - exp(-kappa t)) / kappa.
inline Complex kernel_integral(const CorrelationKernel& k, double t) {
    const Complex kappa = kernel_decay_constant(k);
    const double alpha0 = kernel_zero_lag(k);
    if (std::abs(kappa) * t < 1e-12) return alpha0 * t;
    return alpha0 * (1.0 - std::exp(-kappa * t)) / kappa;
}

// Discretized covariance C[i][j] = alpha(t_i, t_j); the delta kernel becomes
// I/dt so that piecewise-constant increments reproduce the delta correlation.
// Checked positive semidefinite (eigenvalues >= -1e-10 * max(1, lambda_max)).
inline ComplexMatrix build_covariance(const CorrelationKernel& k, const RealVector& grid) {
    const Eigen::Index n = grid.size();
    if (n < 1) throw DimensionMismatchError("build_covariance: empty grid");
    if (std::holds_alternative<DeltaKernel>(k)) {
        if (n < 2) throw DimensionMismatchError("build_covariance: delta kernel needs dt");
        const double dt = grid(1) - grid(0);
        return ComplexMatrix::Identity(n, n) / dt;
    }
    ComplexMatrix C(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        C(i, i) = kernel_eval(k, grid(i), grid(i));
        for (Eigen::Index j = 0; j < i; ++j) {
            C(i, j) = kernel_eval(k, grid(i), grid(j));
            C(j, i) = std::conj(C(i, j));
        }
    }
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(C, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, lmax))
        throw NotPositiveSemidefiniteError("build_covariance: covariance not PSD, min eigenvalue " +
                                           std::to_string(es.eigenvalues().minCoeff()));
    return C;
}

}  // namespace nmqsd
