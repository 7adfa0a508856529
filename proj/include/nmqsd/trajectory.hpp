#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "nmqsd/core.hpp"
#include "nmqsd/hilbert.hpp"
#include "nmqsd/kernel.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/riccati.hpp"

namespace nmqsd {

enum class StepVariant { EulerHeun, Euler };

struct StepScheme {
    StepVariant variant = StepVariant::EulerHeun;
    double dt = 1e-3;
};

// Returns the norm it scaled away (drift diagnostics).
template <class State>
inline double renormalize(State& psi) {
    const double n = psi.norm();
    if (n <= 1e-14) throw ZeroNormError("trajectory step: state norm collapsed (dt too large?)");
    psi /= n;
    return n;
}

// ---------------------------------------------------------------------------
// Operator sets. The steppers only need a few applications per step; dense
// matrices cover the generic case, the ladder form keeps oscillator systems
// at O(dim) per application.
// ---------------------------------------------------------------------------

// H, lowering operator B and P = B^dag B as dense matrices.
template <int Dim>
struct DenseLoweringOps {
    using State = StateVec<Dim>;
    OpMat<Dim> H, B, P;
    Eigen::Index dark = 0;  // basis state annihilated by B

    Eigen::Index dim() const { return H.rows(); }
    void apply_H(const State& in, State& out) const { out.noalias() = H * in; }
    void apply_B(const State& in, State& out) const { out.noalias() = B * in; }
    void apply_P(const State& in, State& out) const { out.noalias() = P * in; }
    State dark_state() const {
        State s = State::Zero(dim());
        s(dark) = 1.0;
        return s;
    }
};

template <int Dim>
DenseLoweringOps<Dim> make_lowering_ops(const OpMat<Dim>& H, const OpMat<Dim>& B,
                                        Eigen::Index dark) {
    require_same_dim(H.rows(), B.rows(), "make_lowering_ops");
    return {H, B, (B.adjoint() * B).eval(), dark};
}

// Harmonic oscillator with H = omega a^dag a and B = a on a truncated Fock
// ladder; every application is O(dim).
struct BosonLadderOps {
    using State = ComplexVector;
    double omega = 1.0;
    Eigen::Index dim_ = 2;

    Eigen::Index dim() const { return dim_; }
    void apply_H(const State& in, State& out) const {
        for (Eigen::Index n = 0; n < dim_; ++n) out(n) = omega * double(n) * in(n);
    }
    void apply_B(const State& in, State& out) const {
        for (Eigen::Index n = 0; n + 1 < dim_; ++n) out(n) = std::sqrt(double(n + 1)) * in(n + 1);
        out(dim_ - 1) = 0.0;
    }
    void apply_P(const State& in, State& out) const {
        for (Eigen::Index n = 0; n < dim_; ++n) out(n) = double(n) * in(n);
    }
    State dark_state() const {
        State s = State::Zero(dim_);
        s(0) = 1.0;
        return s;
    }
};

namespace detail {

template <class Op>
void require_lowering_eigenop(const Op& H, const Op& B, double omega, const char* where) {
    // [H, B] = -omega B is what makes the f(t,s)*B ansatz close.
    const double scale = std::max(1.0, B.cwiseAbs().maxCoeff() * omega);
    if (((H * B - B * H) + omega * B).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw InvalidAnsatzError(std::string(where) + ": [H, B] != -omega B");
}

template <class Op>
void require_measurement_pair(const Op& H, const Op& L, const char* where) {
    if (!is_hermitian(L, 1e-12))
        throw InvalidAnsatzError(std::string(where) + ": L must be Hermitian");
    const double scale = std::max(1.0, (H.cwiseAbs().maxCoeff() * L.cwiseAbs().maxCoeff()));
    if ((H * L - L * H).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw InvalidAnsatzError(std::string(where) + ": [H, L] != 0");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Markov quantum state diffusion (nonlinear, normalized states):
//
//   dpsi/dt = -i H psi + (L - <L>) psi o (z + <L^dag>) - 1/2 (L^dag L - <L^dag L>) psi
//
// driven by white complex noise; the Stratonovich product is realized by the
// Heun midpoint scheme. Expectations are evaluated as <psi|A|psi>/<psi|psi>,
// which makes the right-hand side scale invariant.
// ---------------------------------------------------------------------------

template <int Dim>
class MarkovQsdDynamics {
  public:
    using State = StateVec<Dim>;
    struct Work {
        State tH, tL, tP, k1, k2, pred;
    };

    MarkovQsdDynamics(const OpMat<Dim>& H, const OpMat<Dim>& L, StepScheme scheme)
        : H_(H), L_(L), P_((L.adjoint() * L).eval()), scheme_(scheme) {
        require_same_dim(H.rows(), L.rows(), "MarkovQsdDynamics");
    }

    Work make_work() const {
        const Eigen::Index d = H_.rows();
        Work w;
        for (State* v : {&w.tH, &w.tL, &w.tP, &w.k1, &w.k2, &w.pred}) v->resize(d);
        return w;
    }

    double dt() const { return scheme_.dt; }

    // dz is the noise increment over the step, M[|dz|^2] = dt. Returns the
    // pre-renormalization norm of the updated state.
    double step(State& psi, Complex dz, Work& w) const {
        const double dt = scheme_.dt;
        const Complex z = dz / dt;
        rhs(psi, z, w.k1, w);
        if (scheme_.variant == StepVariant::Euler) {
            psi += dt * w.k1;
            return renormalize(psi);
        }
        w.pred = psi + dt * w.k1;
        rhs(w.pred, z, w.k2, w);
        psi += (0.5 * dt) * (w.k1 + w.k2);
        return renormalize(psi);
    }

  private:
    void rhs(const State& psi, Complex z, State& dpsi, Work& w) const {
        w.tH.noalias() = H_ * psi;
        w.tL.noalias() = L_ * psi;
        w.tP.noalias() = P_ * psi;
        const double nrm2 = psi.squaredNorm();
        const Complex eL = psi.dot(w.tL) / nrm2;
        const Complex eP = psi.dot(w.tP) / nrm2;
        dpsi = -kI * w.tH + (z + std::conj(eL)) * (w.tL - eL * psi) - 0.5 * (w.tP - eP * psi);
    }

    OpMat<Dim> H_, L_, P_;
    StepScheme scheme_;
};

// ---------------------------------------------------------------------------
// Measurement-like non-Markovian QSD (L = L^dag, [H, L] = 0, so the memory
// operator is L itself):
//
//   dpsi/dt = -i H psi - (L^2 - <L^2>) psi A(t)
//             + (L - <L>) psi (z_t + S(t) + A(t) <L>_t),
//
// A(t) = int_0^t alpha(t,s) ds, S(t) = int_0^t alpha^*(t,s) <L>_s ds. For the
// analytic kernels S is integrated alongside psi as the exact auxiliary ODE
// dS/dt = alpha0 <L> - kappa^* S; for sampled kernels both integrals come
// from the trapezoid accumulator (held per path).
// ---------------------------------------------------------------------------

struct MeasurementMemory {
    Complex S = 0.0;
    std::optional<MemoryAccumulator> acc;  // engaged for sampled kernels
};

template <int Dim>
class MeasurementDynamics {
  public:
    using State = StateVec<Dim>;
    struct Work {
        State tH, tL, tL2, k1, k2, pred;
    };

    MeasurementDynamics(const OpMat<Dim>& H, const OpMat<Dim>& L, const CorrelationKernel& kernel,
                        StepScheme scheme, Eigen::Index n_steps)
        : H_(H), L_(L), L2_((L * L).eval()), kernel_(kernel), scheme_(scheme) {
        detail::require_measurement_pair(H_, L_, "MeasurementDynamics");
        if (std::holds_alternative<DeltaKernel>(kernel))
            throw UnsupportedKernelError(
                "MeasurementDynamics: use MarkovQsdDynamics for the delta kernel");
        sampled_ = std::holds_alternative<SampledKernel>(kernel);
        if (!sampled_) {
            alpha0_ = kernel_zero_lag(kernel);
            kappa_conj_ = std::conj(kernel_decay_constant(kernel));
            A_.resize(n_steps + 1);
            for (Eigen::Index n = 0; n <= n_steps; ++n)
                A_(n) = kernel_integral(kernel, n * scheme.dt);
        }
    }

    Work make_work() const {
        const Eigen::Index d = H_.rows();
        Work w;
        for (State* v : {&w.tH, &w.tL, &w.tL2, &w.k1, &w.k2, &w.pred}) v->resize(d);
        return w;
    }

    MeasurementMemory make_memory(const State& psi0) const {
        MeasurementMemory m;
        if (sampled_) m.acc.emplace(kernel_, scheme_.dt, expect_L(psi0));
        return m;
    }

    double dt() const { return scheme_.dt; }

    double step(State& psi, MeasurementMemory& mem, Eigen::Index n, Complex z_n, Complex z_np1,
                Work& w) const {
        const double dt = scheme_.dt;
        if (sampled_) {
            const Complex S = mem.acc->shift_integral();
            const Complex A = mem.acc->kernel_integral();
            rhs(psi, S, A, z_n, w.k1, w);
            if (scheme_.variant == StepVariant::Euler) {
                psi += dt * w.k1;
            } else {
                w.pred = psi + dt * w.k1;
                rhs(w.pred, S, A, z_np1, w.k2, w);
                psi += (0.5 * dt) * (w.k1 + w.k2);
            }
            const double prenorm = renormalize(psi);
            mem.acc->advance(expect_L(psi));
            mem.S = mem.acc->shift_integral();
            return prenorm;
        }
        Complex kS1, kS2;
        rhs_with_shift(psi, mem.S, A_(n), z_n, w.k1, kS1, w);
        if (scheme_.variant == StepVariant::Euler) {
            psi += dt * w.k1;
            mem.S += dt * kS1;
            return renormalize(psi);
        }
        w.pred = psi + dt * w.k1;
        const Complex Spred = mem.S + dt * kS1;
        rhs_with_shift(w.pred, Spred, A_(n + 1), z_np1, w.k2, kS2, w);
        psi += (0.5 * dt) * (w.k1 + w.k2);
        mem.S += (0.5 * dt) * (kS1 + kS2);
        return renormalize(psi);
    }

    Complex expect_L(const State& psi) const {
        return psi.dot(L_ * psi) / psi.squaredNorm();
    }

  private:
    void rhs_with_shift(const State& psi, Complex S, Complex A, Complex z, State& dpsi,
                        Complex& dS, Work& w) const {
        const Complex eL = rhs(psi, S, A, z, dpsi, w);
        dS = alpha0_ * eL - kappa_conj_ * S;
    }

    // returns <L> for reuse in the shift ODE
    Complex rhs(const State& psi, Complex S, Complex A, Complex z, State& dpsi, Work& w) const {
        w.tH.noalias() = H_ * psi;
        w.tL.noalias() = L_ * psi;
        w.tL2.noalias() = L2_ * psi;
        const double nrm2 = psi.squaredNorm();
        const Complex eL = psi.dot(w.tL) / nrm2;
        const Complex eL2 = psi.dot(w.tL2) / nrm2;
        dpsi = -kI * w.tH - A * (w.tL2 - eL2 * psi) + (z + S + A * eL) * (w.tL - eL * psi);
        return eL;
    }

    OpMat<Dim> H_, L_, L2_;
    CorrelationKernel kernel_;
    StepScheme scheme_;
    bool sampled_ = false;
    double alpha0_ = 0.0;
    Complex kappa_conj_ = 0.0;
    ComplexVector A_;
};

// ---------------------------------------------------------------------------
// Dissipative non-Markovian QSD for L = lambda B with a lowering operator B
// ([H, B] = -omega B; spin sigma_- or oscillator a):
//
//   dpsi/dt = -i H psi - lambda F(t) (B^dag B - <B^dag B>) psi
//             + lambda (B - <B>) psi (z_t + lambda S(t) + <B^dag>_t F(t)),
//
// with F from the Riccati equation and S(t) = int_0^t alpha^*(t,s) <B^dag>_s ds
// integrated as dS/dt = alpha0 <B^dag> - kappa^* S.
//
// In the supercritical resonant regime F blows up at finite t_c; past the
// overflow guard (or once |F| dt is too stiff to resolve, where the state is
// within O(dt^2) of the dark state anyway) the trajectory is frozen in the
// dark state.
// ---------------------------------------------------------------------------

template <class Ops>
class DissipativeDynamics {
  public:
    using State = typename Ops::State;
    struct Work {
        State tH, tB, tP, k1, k2, pred;
    };

    DissipativeDynamics(Ops ops, double lambda, const CorrelationKernel& kernel, double omega,
                        StepScheme scheme, Eigen::Index n_steps)
        : ops_(std::move(ops)), lambda_(lambda), scheme_(scheme) {
        alpha0_ = kernel_zero_lag(kernel);
        kappa_conj_ = std::conj(kernel_decay_constant(kernel));
        if constexpr (requires { ops_.H; ops_.B; })
            detail::require_lowering_eigenop(ops_.H, ops_.B, omega, "DissipativeDynamics");
        RealVector grid(n_steps + 1);
        for (Eigen::Index i = 0; i <= n_steps; ++i) grid(i) = i * scheme.dt;
        F_ = solve_F(riccati_params(kernel, omega, lambda), grid);
        clamp_step_ = F_.diverged_from;
        if (clamp_step_ != FSeries::npos) {
            while (clamp_step_ > 0 &&
                   lambda_ * std::abs(F_.values(clamp_step_ - 1)) * scheme_.dt > 4.0)
                --clamp_step_;
        }
    }

    Work make_work() const {
        const Eigen::Index d = ops_.dim();
        Work w;
        for (State* v : {&w.tH, &w.tB, &w.tP, &w.k1, &w.k2, &w.pred}) v->resize(d);
        return w;
    }

    double dt() const { return scheme_.dt; }
    const FSeries& f_series() const { return F_; }
    Eigen::Index clamp_step() const { return clamp_step_; }
    const Ops& ops() const { return ops_; }

    double step(State& psi, Complex& S, Eigen::Index n, Complex z_n, Complex z_np1, Work& w) const {
        if (n + 1 >= clamp_step_) {
            psi = ops_.dark_state();
            S = 0.0;
            return 1.0;
        }
        const double dt = scheme_.dt;
        Complex kS1, kS2;
        rhs(psi, S, F_.values(n), z_n, w.k1, kS1, w);
        if (scheme_.variant == StepVariant::Euler) {
            psi += dt * w.k1;
            S += dt * kS1;
            return renormalize(psi);
        }
        w.pred = psi + dt * w.k1;
        const Complex Spred = S + dt * kS1;
        rhs(w.pred, Spred, F_.values(n + 1), z_np1, w.k2, kS2, w);
        psi += (0.5 * dt) * (w.k1 + w.k2);
        S += (0.5 * dt) * (kS1 + kS2);
        return renormalize(psi);
    }

  private:
    void rhs(const State& psi, Complex S, Complex F, Complex z, State& dpsi, Complex& dS,
             Work& w) const {
        ops_.apply_H(psi, w.tH);
        ops_.apply_B(psi, w.tB);
        ops_.apply_P(psi, w.tP);
        const double nrm2 = psi.squaredNorm();
        const Complex eB = psi.dot(w.tB) / nrm2;
        const double eP = (psi.dot(w.tP) / nrm2).real();
        const Complex wc = z + lambda_ * S + std::conj(eB) * F;
        dpsi = -kI * w.tH - (lambda_ * F) * (w.tP - eP * psi) + (lambda_ * wc) * (w.tB - eB * psi);
        dS = alpha0_ * std::conj(eB) - kappa_conj_ * S;
    }

    Ops ops_;
    double lambda_;
    StepScheme scheme_;
    double alpha0_ = 0.0;
    Complex kappa_conj_ = 0.0;
    FSeries F_;
    Eigen::Index clamp_step_ = FSeries::npos;
};

// ---------------------------------------------------------------------------
// Linear unravellings (unnormalized states), one equation per ansatz family:
//
//   measurement-like:  dpsi/dt = -i H psi + L psi z_t - A(t) L^2 psi
//   lowering-scaled:   dpsi/dt = -i H psi + L psi z_t - lambda F(t) B^dag B psi
//   delta (Markov):    dpsi/dt = -i H psi + L psi z_t - 1/2 L^dag L psi
// ---------------------------------------------------------------------------

enum class OAnsatzFamily { MeasurementLike, LoweringScaled, DeltaWhite };

template <int Dim>
class LinearDynamics {
  public:
    using State = StateVec<Dim>;
    struct Work {
        State tH, tL, tM, k1, k2, pred;
    };

    static LinearDynamics measurement_like(const OpMat<Dim>& H, const OpMat<Dim>& L,
                                           const CorrelationKernel& kernel, StepScheme scheme,
                                           Eigen::Index n_steps) {
        detail::require_measurement_pair(H, L, "LinearDynamics");
        if (std::holds_alternative<DeltaKernel>(kernel) ||
            std::holds_alternative<SampledKernel>(kernel))
            throw InvalidAnsatzError("LinearDynamics: measurement-like needs an analytic kernel");
        LinearDynamics d(H, L, (L * L).eval(), OAnsatzFamily::MeasurementLike, scheme);
        d.coeff_.resize(n_steps + 1);
        for (Eigen::Index n = 0; n <= n_steps; ++n)
            d.coeff_(n) = kernel_integral(kernel, n * scheme.dt);
        return d;
    }

    static LinearDynamics lowering_scaled(const OpMat<Dim>& H, const OpMat<Dim>& B, double lambda,
                                          double omega, const CorrelationKernel& kernel,
                                          StepScheme scheme, Eigen::Index n_steps) {
        detail::require_lowering_eigenop(H, B, omega, "LinearDynamics");
        if (std::holds_alternative<DeltaKernel>(kernel) ||
            std::holds_alternative<SampledKernel>(kernel))
            throw InvalidAnsatzError("LinearDynamics: lowering-scaled needs an analytic kernel");
        LinearDynamics d(H, (lambda * B).eval(), (lambda * (B.adjoint() * B)).eval(),
                         OAnsatzFamily::LoweringScaled, scheme);
        RealVector grid(n_steps + 1);
        for (Eigen::Index i = 0; i <= n_steps; ++i) grid(i) = i * scheme.dt;
        const FSeries F = solve_F(riccati_params(kernel, omega, lambda), grid);
        if (F.diverged_from != FSeries::npos)
            throw FDivergedError("LinearDynamics: F(t) diverges inside the requested horizon");
        d.coeff_ = F.values;
        return d;
    }

    static LinearDynamics delta_white(const OpMat<Dim>& H, const OpMat<Dim>& L, StepScheme scheme) {
        LinearDynamics d(H, L, (0.5 * (L.adjoint() * L)).eval(), OAnsatzFamily::DeltaWhite, scheme);
        return d;
    }

    Work make_work() const {
        const Eigen::Index d = H_.rows();
        Work w;
        for (State* v : {&w.tH, &w.tL, &w.tM, &w.k1, &w.k2, &w.pred}) v->resize(d);
        return w;
    }

    double dt() const { return scheme_.dt; }
    OAnsatzFamily family() const { return family_; }

    // For the delta family pass the per-step constant z (variance 1/dt) as
    // both z_n and z_np1.
    void step(State& psi, Eigen::Index n, Complex z_n, Complex z_np1, Work& w) const {
        const double dt = scheme_.dt;
        rhs(psi, coeff_at(n), z_n, w.k1, w);
        if (scheme_.variant == StepVariant::Euler) {
            psi += dt * w.k1;
            return;
        }
        w.pred = psi + dt * w.k1;
        rhs(w.pred, coeff_at(n + 1), z_np1, w.k2, w);
        psi += (0.5 * dt) * (w.k1 + w.k2);
    }

  private:
    LinearDynamics(const OpMat<Dim>& H, const OpMat<Dim>& L, const OpMat<Dim>& M,
                   OAnsatzFamily family, StepScheme scheme)
        : H_(H), L_(L), M_(M), family_(family), scheme_(scheme) {}

    Complex coeff_at(Eigen::Index n) const {
        if (family_ == OAnsatzFamily::DeltaWhite) return 1.0;
        return coeff_(n);
    }

    // memory operator: coeff * M psi, with M = L^2, lambda B^dag B, or L^dag L / 2
    void rhs(const State& psi, Complex coeff, Complex z, State& dpsi, Work& w) const {
        w.tH.noalias() = H_ * psi;
        w.tL.noalias() = L_ * psi;
        w.tM.noalias() = M_ * psi;
        dpsi = -kI * w.tH + z * w.tL - coeff * w.tM;
    }

    OpMat<Dim> H_, L_, M_;
    OAnsatzFamily family_;
    StepScheme scheme_;
    ComplexVector coeff_;
};

// ---------------------------------------------------------------------------
// Two-noise linear equation for a spin behind a movable system/environment
// cut: Markov bath (noise xi) plus a distinguished single mode (noise z,
// kernel exp(-i omega2 (t-s))):
//
//   dphi/dt = -i (omega1/2) sigma_z phi - (lambda^2/2) P phi + lambda B phi xi_t
//             + kappa B phi z_t - kappa F2(t) P phi,       P = sigma_+ sigma_-
//
// The memory coefficient F2 obeys the same Riccati structure as the
// single-channel F, with the Markov damping entering the linear term:
//
//   dF2/dt = kappa + (i (omega1 - omega2) + lambda^2/2) F2 + kappa F2^2.
// ---------------------------------------------------------------------------

class TwoChannelDynamics {
  public:
    using State = StateVec<2>;
    struct Work {
        State k1, k2, pred;
    };

    TwoChannelDynamics(double omega1, double omega2, double kappa, double lambda,
                       StepScheme scheme, Eigen::Index n_steps)
        : omega1_(omega1), kappa_(kappa), lambda_(lambda), scheme_(scheme) {
        RealVector grid(n_steps + 1);
        for (Eigen::Index i = 0; i <= n_steps; ++i) grid(i) = i * scheme.dt;
        F2_ = solve_F(RiccatiParams{-0.5 * lambda * lambda, omega2, omega1, kappa, 1.0}, grid);
        clamp_step_ = F2_.diverged_from;
        if (clamp_step_ != FSeries::npos) {
            while (clamp_step_ > 0 &&
                   kappa_ * std::abs(F2_.values(clamp_step_ - 1)) * scheme_.dt > 4.0)
                --clamp_step_;
        }
    }

    Work make_work() const { return {}; }
    double dt() const { return scheme_.dt; }
    const FSeries& f2_series() const { return F2_; }

    void step(State& phi, Eigen::Index n, Complex xi, Complex z_n, Complex z_np1, Work& w) const {
        const double dt = scheme_.dt;
        if (n + 1 >= clamp_step_) {
            // memory term has absorbed the up component; only the free phase
            // of the down component is left
            phi(0) = 0.0;
            phi(1) *= std::exp(Complex(0.0, 0.5 * omega1_ * dt));
            return;
        }
        rhs(phi, F2_.values(n), xi, z_n, w.k1);
        if (scheme_.variant == StepVariant::Euler) {
            phi += dt * w.k1;
            return;
        }
        w.pred = phi + dt * w.k1;
        rhs(w.pred, F2_.values(n + 1), xi, z_np1, w.k2);
        phi += (0.5 * dt) * (w.k1 + w.k2);
    }

  private:
    void rhs(const State& phi, Complex F2, Complex xi, Complex z, State& dphi) const {
        // spin basis: index 0 = up, 1 = down; B = sigma_-, P = diag(1, 0)
        const Complex up = phi(0), down = phi(1);
        const Complex damp = 0.5 * lambda_ * lambda_ + kappa_ * F2;
        dphi(0) = -kI * (0.5 * omega1_) * up - damp * up;
        dphi(1) = kI * (0.5 * omega1_) * down + (lambda_ * xi + kappa_ * z) * up;
    }

    double omega1_, kappa_, lambda_;
    StepScheme scheme_;
    FSeries F2_;
    Eigen::Index clamp_step_ = FSeries::npos;
};

}  // namespace nmqsd
