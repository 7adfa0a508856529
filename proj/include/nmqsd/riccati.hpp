#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "nmqsd/core.hpp"
#include "nmqsd/kernel.hpp"

namespace nmqsd {

// Memory coefficient F(t) = int_0^t alpha(t,s) f(t,s) ds of the lowering-type
// memory operator, obeying the Riccati equation
//
//   dF/dt = lambda * alpha0 + (i (omega - Omega) - gamma) F + lambda F^2,
//
// with F(0) = 0. For the exponential kernel alpha0 = gamma/2; the single-mode
// kernel is the gamma -> 0 case with alpha0 = g2.
struct RiccatiParams {
    double gamma;   // kernel decay rate (0 for the single mode)
    double Omega;   // kernel central frequency
    double omega;   // system frequency
    double lambda;  // coupling strength
    double alpha0;  // kernel zero-lag variance

    Complex rhs(Complex F) const {
        return lambda * alpha0 + (Complex(0.0, omega - Omega) - gamma) * F + lambda * F * F;
    }
};

inline RiccatiParams riccati_params(double gamma, double Omega, double omega, double lambda) {
    return {gamma, Omega, omega, lambda, 0.5 * gamma};
}

inline RiccatiParams riccati_params(const CorrelationKernel& k, double omega, double lambda) {
    const Complex kappa = kernel_decay_constant(k);
    return {kappa.real(), kappa.imag(), omega, lambda, kernel_zero_lag(k)};
}

inline constexpr double kFOverflowGuard = 1e9;

// F on a uniform grid. diverged_from = first index with |F| past the overflow
// guard (or non-finite); npos if F stays finite. Values at and beyond
// diverged_from are frozen at the guard value.
struct FSeries {
    static constexpr Eigen::Index npos = std::numeric_limits<Eigen::Index>::max();
    RealVector times;
    ComplexVector values;
    Eigen::Index diverged_from = npos;

    bool diverged_at(Eigen::Index i) const { return i >= diverged_from; }
    double divergence_time() const {
        if (diverged_from == npos) throw FDivergedError("FSeries: no divergence detected");
        return times(diverged_from);
    }
};

// Classic 4-stage Runge-Kutta from F(0) = 0. Blow-up (supercritical regime)
// is legitimate: integration stops at the overflow guard and the tail of the
// series is frozen there.
inline FSeries solve_F(const RiccatiParams& p, const RealVector& grid) {
    FSeries out;
    out.times = grid;
    out.values.resize(grid.size());
    Complex F = 0.0;
    out.values(0) = F;
    for (Eigen::Index i = 0; i + 1 < grid.size(); ++i) {
        if (out.diverged_from != FSeries::npos) {
            out.values(i + 1) = out.values(i);
            continue;
        }
        const double dt = grid(i + 1) - grid(i);
        const Complex k1 = p.rhs(F);
        const Complex k2 = p.rhs(F + 0.5 * dt * k1);
        const Complex k3 = p.rhs(F + 0.5 * dt * k2);
        const Complex k4 = p.rhs(F + dt * k3);
        F += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(F.real()) || !std::isfinite(F.imag()) || std::abs(F) > kFOverflowGuard) {
            out.diverged_from = i + 1;
            F = kFOverflowGuard;
        }
        out.values(i + 1) = F;
    }
    return out;
}

// Closed-form solution on resonance (omega == Omega), where the Riccati
// coefficients are real constants:
//
//   dF/dt = lambda (F - r+)(F - r-),   r+- = (gamma +- sqrt(gamma^2 - 4 lambda^2 alpha0)) / (2 lambda)
//   F(t)  = r+ r- (1 - exp(-D t)) / (r+ - r- exp(-D t)),   D = lambda (r+ - r-).
//
// Subcritical (real roots): F rises monotonically to r-. Supercritical
// (complex roots): F blows up at finite t_c; the formula remains valid (real
// valued) through complex intermediates until the pole.
inline Complex resonant_F_closed_form(const RiccatiParams& p, double t) {
    const Complex disc = std::sqrt(Complex(p.gamma * p.gamma - 4.0 * p.lambda * p.lambda * p.alpha0, 0.0));
    const Complex rp = (p.gamma + disc) / (2.0 * p.lambda);
    const Complex rm = (p.gamma - disc) / (2.0 * p.lambda);
    const Complex D = p.lambda * (rp - rm);
    const Complex e = std::exp(-D * t);
    return rp * rm * (1.0 - e) / (rp - rm * e);
}

// Finite absorption time in the supercritical resonant regime
// (gamma < 2 lambda^2):
//   t_c = (pi + 2 arctan(gamma / sqrt(2 lambda^2 gamma - gamma^2)))
//         / sqrt(2 lambda^2 gamma - gamma^2).
inline double critical_time(double gamma, double lambda) {
    const double disc = 2.0 * lambda * lambda * gamma - gamma * gamma;
    if (!(gamma > 0.0) || !(disc > 0.0))
        throw NotSupercriticalError("critical_time: requires gamma < 2 lambda^2 with gamma > 0");
    const double mu = std::sqrt(disc);
    return (kPi + 2.0 * std::atan(gamma / mu)) / mu;
}

// ---------------------------------------------------------------------------
// Running memory integrals.
// ---------------------------------------------------------------------------

// Accumulates S(t) = int_0^t alpha^*(t,s) u(s) ds (shifted-noise convolution,
// u = <L^dag>_s) and A(t) = int_0^t alpha(t,s) ds. For the analytic kernels
// both updates are O(1) recursions: with alpha^*(t,s) = alpha0 e^{-kappa^*(t-s)},
//
//   S(t+dt) = e^{-kappa^* dt} ( S(t) + dt/2 alpha0 u(t) ) + dt/2 alpha0 u(t+dt),
//
// which reproduces the trapezoid rule over the whole history exactly. The
// sampled kernel re-sums its stored history with trapezoid weights each step.
class MemoryAccumulator {
  public:
    MemoryAccumulator() = default;

    MemoryAccumulator(const CorrelationKernel& k, double dt, Complex u0 = 0.0)
        : dt_(dt), prev_u_(u0) {
        if (std::holds_alternative<DeltaKernel>(k))
            throw UnsupportedKernelError(
                "MemoryAccumulator: delta kernel has no shift integral (instantaneous term)");
        if (auto* s = std::get_if<SampledKernel>(&k)) {
            sampled_ = true;
            kernel_matrix_ = s->matrix;
            history_.push_back(u0);
        } else {
            const Complex kappa = kernel_decay_constant(k);
            alpha0_ = kernel_zero_lag(k);
            decay_ = std::exp(-std::conj(kappa) * dt);
            kernel_decay_ = std::exp(-kappa * dt);
        }
    }

    Complex shift_integral() const { return shift_; }
    Complex kernel_integral() const { return kernel_int_; }

    // Advance both integrals from t_n to t_{n+1}; u_next is the integrand
    // sample at t_{n+1} (the t_n sample is remembered from the last call).
    void advance(Complex u_next) {
        if (sampled_) {
            history_.push_back(u_next);
            const Eigen::Index n = Eigen::Index(history_.size()) - 1;  // current grid index
            Complex s = 0.0, a = 0.0;
            for (Eigen::Index j = 0; j <= n; ++j) {
                const double w = (j == 0 || j == n) ? 0.5 : 1.0;
                s += w * std::conj(kernel_matrix_(n, j)) * history_[size_t(j)];
                a += w * kernel_matrix_(n, j);
            }
            shift_ = s * dt_;
            kernel_int_ = a * dt_;
            return;
        }
        shift_ = decay_ * (shift_ + 0.5 * dt_ * alpha0_ * prev_u_) + 0.5 * dt_ * alpha0_ * u_next;
        kernel_int_ = kernel_decay_ * (kernel_int_ + 0.5 * dt_ * alpha0_) + 0.5 * dt_ * alpha0_;
        prev_u_ = u_next;
    }

  private:
    double dt_ = 0.0;
    bool sampled_ = false;
    double alpha0_ = 0.0;
    Complex decay_ = 1.0;
    Complex kernel_decay_ = 1.0;
    Complex shift_ = 0.0;
    Complex kernel_int_ = 0.0;
    Complex prev_u_ = 0.0;
    ComplexMatrix kernel_matrix_;
    std::vector<Complex> history_;
};

}  // namespace nmqsd
