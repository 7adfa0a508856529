#pragma once

#include <cmath>
#include <optional>

#include "nmqsd/ensemble.hpp"
#include "nmqsd/hilbert.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/trajectory.hpp"

namespace nmqsd {

inline double sigma_z_value(const StateVec<2>& psi) {
    return (std::norm(psi(0)) - std::norm(psi(1))) / psi.squaredNorm();
}

// Per-path statistic recorded by the spin models.
enum class SpinPathStat {
    None,
    FinalSigmaZ,       // <sigma_z> at the last snapshot
    MaxSigmaZAfterT0,  // running max of <sigma_z> over snapshots with t > t0
};

// Incremental noise source for the analytic colored kernels.
class ColoredNoiseSource {
  public:
    struct State {
        Complex z = 0.0;
        Complex w = 0.0;  // single-mode amplitude
    };

    ColoredNoiseSource(const CorrelationKernel& k, double dt) : dt_(dt) {
        if (auto* e = std::get_if<ExponentialKernel>(&k))
            ou_.emplace(*e, dt);
        else if (auto* m = std::get_if<SingleModeKernel>(&k))
            sm_.emplace(*m);
        else
            throw UnsupportedKernelError("ColoredNoiseSource: analytic kernel required");
    }

    State init(RngStream& rng) const {
        State s;
        if (ou_) {
            s.z = ou_->init(rng);
        } else {
            s.w = sm_->init(rng);
            s.z = sm_->at(s.w, 0.0);
        }
        return s;
    }

    // Advances to t_{n+1} and returns the new value.
    Complex next(State& s, Eigen::Index n, RngStream& rng) const {
        s.z = ou_ ? ou_->next(s.z, rng) : sm_->at(s.w, double(n + 1) * dt_);
        return s.z;
    }

  private:
    double dt_;
    std::optional<OuNoiseGen> ou_;
    std::optional<SingleModeNoiseGen> sm_;
};

namespace detail {

inline void spin_stat_update(SpinPathStat kind, double stat_t0, double dt, double& st,
                             const StateVec<2>& psi, Eigen::Index step) {
    switch (kind) {
        case SpinPathStat::None:
            break;
        case SpinPathStat::FinalSigmaZ:
            st = sigma_z_value(psi);
            break;
        case SpinPathStat::MaxSigmaZAfterT0:
            if (double(step) * dt > stat_t0) st = std::max(st, sigma_z_value(psi));
            break;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Nonlinear measurement-like spin: H = (omega/2) sigma_z, L = lambda sigma_z.
// ---------------------------------------------------------------------------

class MeasurementSpinModel {
  public:
    using State = StateVec<2>;
    using Dynamics = MeasurementDynamics<2>;
    using Work = Dynamics::Work;
    struct PathContext {
        RngStream rng;
        ColoredNoiseSource::State noise;
        MeasurementMemory mem;
    };

    MeasurementSpinModel(double omega, double lambda, const CorrelationKernel& kernel,
                         const State& psi0, StepScheme scheme, Eigen::Index n_steps,
                         SpinPathStat stat = SpinPathStat::None, double stat_t0 = 0.0)
        : dynamics_((0.5 * omega * sigma_z()).eval(), (lambda * sigma_z()).eval(), kernel, scheme,
                    n_steps),
          noise_(kernel, scheme.dt),
          psi0_(psi0.normalized()),
          dt_(scheme.dt),
          stat_(stat),
          stat_t0_(stat_t0) {}

    EstimatorKind estimator() const { return EstimatorKind::NormalizedNonlinear; }
    Eigen::Index dim() const { return 2; }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        PathContext c{RngStream(seed, path), {}, {}};
        c.noise = noise_.init(c.rng);
        c.mem = dynamics_.make_memory(psi0_);
        return c;
    }

    void step(PathContext& c, State& psi, Eigen::Index n, Work& w) const {
        const Complex z_n = c.noise.z;
        const Complex z_np1 = noise_.next(c.noise, n, c.rng);
        dynamics_.step(psi, c.mem, n, z_n, z_np1, w);
    }

    double path_stat_init() const { return stat_ == SpinPathStat::MaxSigmaZAfterT0 ? -2.0 : 0.0; }
    void path_stat_update(double& st, const State& psi, Eigen::Index, Eigen::Index step) const {
        detail::spin_stat_update(stat_, stat_t0_, dt_, st, psi, step);
    }

  private:
    Dynamics dynamics_;
    ColoredNoiseSource noise_;
    State psi0_;
    double dt_;
    SpinPathStat stat_;
    double stat_t0_;
};

// ---------------------------------------------------------------------------
// Nonlinear dissipative spin: H = (omega/2) sigma_z, L = lambda sigma_-.
// ---------------------------------------------------------------------------

class DissipativeSpinModel {
  public:
    using State = StateVec<2>;
    using Dynamics = DissipativeDynamics<DenseLoweringOps<2>>;
    using Work = Dynamics::Work;
    struct PathContext {
        RngStream rng;
        ColoredNoiseSource::State noise;
        Complex S = 0.0;
    };

    DissipativeSpinModel(double omega, double lambda, const CorrelationKernel& kernel,
                         const State& psi0, StepScheme scheme, Eigen::Index n_steps,
                         SpinPathStat stat = SpinPathStat::None, double stat_t0 = 0.0)
        : dynamics_(make_lowering_ops<2>((0.5 * omega * sigma_z()).eval(), sigma_minus().eval(), 1),
                    lambda, kernel, omega, scheme, n_steps),
          noise_(kernel, scheme.dt),
          psi0_(psi0.normalized()),
          dt_(scheme.dt),
          stat_(stat),
          stat_t0_(stat_t0) {}

    EstimatorKind estimator() const { return EstimatorKind::NormalizedNonlinear; }
    Eigen::Index dim() const { return 2; }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }
    const Dynamics& dynamics() const { return dynamics_; }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        PathContext c{RngStream(seed, path), {}, 0.0};
        c.noise = noise_.init(c.rng);
        return c;
    }

    void step(PathContext& c, State& psi, Eigen::Index n, Work& w) const {
        const Complex z_n = c.noise.z;
        const Complex z_np1 = noise_.next(c.noise, n, c.rng);
        dynamics_.step(psi, c.S, n, z_n, z_np1, w);
    }

    double path_stat_init() const { return stat_ == SpinPathStat::MaxSigmaZAfterT0 ? -2.0 : 0.0; }
    void path_stat_update(double& st, const State& psi, Eigen::Index, Eigen::Index step) const {
        detail::spin_stat_update(stat_, stat_t0_, dt_, st, psi, step);
    }

  private:
    Dynamics dynamics_;
    ColoredNoiseSource noise_;
    State psi0_;
    double dt_;
    SpinPathStat stat_;
    double stat_t0_;
};

// ---------------------------------------------------------------------------
// Nonlinear dissipative oscillator: H = omega a^dag a, L = lambda a on a
// truncated Fock ladder.
// ---------------------------------------------------------------------------

class DissipativeBosonModel {
  public:
    using State = ComplexVector;
    using Dynamics = DissipativeDynamics<BosonLadderOps>;
    using Work = Dynamics::Work;
    struct PathContext {
        RngStream rng;
        ColoredNoiseSource::State noise;
        Complex S = 0.0;
    };

    DissipativeBosonModel(double omega, double lambda, const CorrelationKernel& kernel,
                          const State& psi0, StepScheme scheme, Eigen::Index n_steps)
        : dynamics_(BosonLadderOps{omega, psi0.size()}, lambda, kernel, omega, scheme, n_steps),
          noise_(kernel, scheme.dt),
          psi0_(psi0.normalized()) {}

    EstimatorKind estimator() const { return EstimatorKind::NormalizedNonlinear; }
    Eigen::Index dim() const { return psi0_.size(); }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        PathContext c{RngStream(seed, path), {}, 0.0};
        c.noise = noise_.init(c.rng);
        return c;
    }

    void step(PathContext& c, State& psi, Eigen::Index n, Work& w) const {
        const Complex z_n = c.noise.z;
        const Complex z_np1 = noise_.next(c.noise, n, c.rng);
        dynamics_.step(psi, c.S, n, z_n, z_np1, w);
    }

  private:
    Dynamics dynamics_;
    ColoredNoiseSource noise_;
    State psi0_;
};

// ---------------------------------------------------------------------------
// Linear unravelling of the damped spin with a colored analytic kernel
// (unnormalized states, raw-measure averaging).
// ---------------------------------------------------------------------------

class LinearLoweringSpinModel {
  public:
    using State = StateVec<2>;
    using Dynamics = LinearDynamics<2>;
    using Work = Dynamics::Work;
    struct PathContext {
        RngStream rng;
        ColoredNoiseSource::State noise;
    };

    LinearLoweringSpinModel(double omega, double lambda, const CorrelationKernel& kernel,
                            const State& psi0, StepScheme scheme, Eigen::Index n_steps)
        : dynamics_(Dynamics::lowering_scaled((0.5 * omega * sigma_z()).eval(),
                                              sigma_minus().eval(), lambda, omega, kernel, scheme,
                                              n_steps)),
          noise_(kernel, scheme.dt),
          psi0_(psi0.normalized()) {}

    EstimatorKind estimator() const { return EstimatorKind::RawLinear; }
    Eigen::Index dim() const { return 2; }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        PathContext c{RngStream(seed, path), {}};
        c.noise = noise_.init(c.rng);
        return c;
    }

    void step(PathContext& c, State& psi, Eigen::Index n, Work& w) const {
        const Complex z_n = c.noise.z;
        const Complex z_np1 = noise_.next(c.noise, n, c.rng);
        dynamics_.step(psi, n, z_n, z_np1, w);
    }

  private:
    Dynamics dynamics_;
    ColoredNoiseSource noise_;
    State psi0_;
};

// ---------------------------------------------------------------------------
// Linear Markov unravelling (delta kernel) for arbitrary dense (H, L).
// ---------------------------------------------------------------------------

template <int Dim>
class MarkovLinearModel {
  public:
    using State = StateVec<Dim>;
    using Dynamics = LinearDynamics<Dim>;
    using Work = typename Dynamics::Work;
    struct PathContext {
        RngStream rng;
    };

    MarkovLinearModel(const OpMat<Dim>& H, const OpMat<Dim>& L, const State& psi0,
                      StepScheme scheme)
        : dynamics_(Dynamics::delta_white(H, L, scheme)),
          psi0_(psi0.normalized()),
          inv_sqrt_dt_(1.0 / std::sqrt(scheme.dt)) {}

    EstimatorKind estimator() const { return EstimatorKind::RawLinear; }
    Eigen::Index dim() const { return psi0_.size(); }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        return {RngStream(seed, path)};
    }

    void step(PathContext& c, State& psi, Eigen::Index n, Work& w) const {
        const Complex z = inv_sqrt_dt_ * c.rng.next_complex_normal();
        dynamics_.step(psi, n, z, z, w);
    }

  private:
    Dynamics dynamics_;
    State psi0_;
    double inv_sqrt_dt_;
};

// ---------------------------------------------------------------------------
// Nonlinear Markov QSD for arbitrary dense (H, L).
// ---------------------------------------------------------------------------

template <int Dim>
class MarkovQsdModel {
  public:
    using State = StateVec<Dim>;
    using Dynamics = MarkovQsdDynamics<Dim>;
    using Work = typename Dynamics::Work;
    struct PathContext {
        RngStream rng;
    };

    MarkovQsdModel(const OpMat<Dim>& H, const OpMat<Dim>& L, const State& psi0, StepScheme scheme)
        : dynamics_(H, L, scheme), psi0_(psi0.normalized()), sqrt_dt_(std::sqrt(scheme.dt)) {}

    EstimatorKind estimator() const { return EstimatorKind::NormalizedNonlinear; }
    Eigen::Index dim() const { return psi0_.size(); }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        return {RngStream(seed, path)};
    }

    void step(PathContext& c, State& psi, Eigen::Index, Work& w) const {
        const Complex dz = sqrt_dt_ * c.rng.next_complex_normal();
        dynamics_.step(psi, dz, w);
    }

  private:
    Dynamics dynamics_;
    State psi0_;
    double sqrt_dt_;
};

// ---------------------------------------------------------------------------
// Two-noise linear spin unravelling for the movable-cut model (Markov bath
// noise xi plus single-mode noise z at omega2).
// ---------------------------------------------------------------------------

class TwoChannelSpinModel {
  public:
    using State = StateVec<2>;
    using Dynamics = TwoChannelDynamics;
    using Work = Dynamics::Work;
    struct PathContext {
        RngStream rng;
        Complex w = 0.0;  // single-mode amplitude
    };

    TwoChannelSpinModel(double omega1, double omega2, double kappa, double lambda,
                        const State& psi0, StepScheme scheme, Eigen::Index n_steps)
        : dynamics_(omega1, omega2, kappa, lambda, scheme, n_steps),
          psi0_(psi0.normalized()),
          omega2_(omega2),
          dt_(scheme.dt),
          inv_sqrt_dt_(1.0 / std::sqrt(scheme.dt)) {}

    EstimatorKind estimator() const { return EstimatorKind::RawLinear; }
    Eigen::Index dim() const { return 2; }
    State initial_state() const { return psi0_; }
    Work make_work() const { return dynamics_.make_work(); }
    const Dynamics& dynamics() const { return dynamics_; }

    PathContext make_path(std::uint64_t seed, std::uint64_t path) const {
        PathContext c{RngStream(seed, path), 0.0};
        c.w = c.rng.next_complex_normal();  // M[|w|^2] = 1
        return c;
    }

    void step(PathContext& c, State& phi, Eigen::Index n, Work& w) const {
        const Complex xi = inv_sqrt_dt_ * c.rng.next_complex_normal();
        const Complex z_n = c.w * std::exp(Complex(0.0, omega2_ * double(n) * dt_));
        const Complex z_np1 = c.w * std::exp(Complex(0.0, omega2_ * double(n + 1) * dt_));
        dynamics_.step(phi, n, xi, z_n, z_np1, w);
    }

  private:
    Dynamics dynamics_;
    State psi0_;
    double omega2_;
    double dt_;
    double inv_sqrt_dt_;
};

}  // namespace nmqsd
