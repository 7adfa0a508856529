#pragma once

#include <vector>

#include "nmqsd/core.hpp"
#include "nmqsd/ensemble.hpp"
#include "nmqsd/hilbert.hpp"
#include "nmqsd/kernel.hpp"
#include "nmqsd/models.hpp"

namespace nmqsd {

struct DensitySeries {
    RealVector times;
    std::vector<ComplexMatrix> rho;
};

struct StateSeries {
    RealVector times;
    std::vector<ComplexVector> psi;
};

inline std::vector<Eigen::Index> snapshot_steps(Eigen::Index n_steps, Eigen::Index stride) {
    std::vector<Eigen::Index> snaps;
    for (Eigen::Index n = 0; n <= n_steps; ++n)
        if (n % stride == 0 || n == n_steps) snaps.push_back(n);
    return snaps;
}

// ---------------------------------------------------------------------------
// Lindblad master equation, RK4 on
//   drho/dt = -i [H, rho] + sum_m ( L_m rho L_m^dag - 1/2 {L_m^dag L_m, rho} ),
// hermitized every step.
// ---------------------------------------------------------------------------

inline DensitySeries lindblad_evolve(const ComplexMatrix& rho0, const ComplexMatrix& H,
                                     const std::vector<ComplexMatrix>& Ls, double dt,
                                     Eigen::Index n_steps,
                                     const std::vector<Eigen::Index>& snaps) {
    const Eigen::Index d = rho0.rows();
    require_same_dim(rho0.cols(), d, "lindblad_evolve");
    require_same_dim(H.rows(), d, "lindblad_evolve");
    std::vector<ComplexMatrix> Ldag, LdagL;
    Ldag.reserve(Ls.size());
    LdagL.reserve(Ls.size());
    for (const auto& L : Ls) {
        require_same_dim(L.rows(), d, "lindblad_evolve");
        Ldag.push_back(L.adjoint());
        LdagL.push_back(L.adjoint() * L);
    }
    auto rhs = [&](const ComplexMatrix& r) {
        ComplexMatrix out = -kI * (H * r - r * H);
        for (size_t m = 0; m < Ls.size(); ++m) {
            out.noalias() += Ls[m] * r * Ldag[m];
            out.noalias() -= 0.5 * (LdagL[m] * r + r * LdagL[m]);
        }
        return out;
    };

    DensitySeries out;
    out.times.resize(Eigen::Index(snaps.size()));
    out.rho.reserve(snaps.size());
    ComplexMatrix rho = rho0;
    size_t si = 0;
    auto record = [&](Eigen::Index step) {
        if (si < snaps.size() && snaps[si] == step) {
            out.times(Eigen::Index(si)) = double(step) * dt;
            out.rho.push_back(rho);
            ++si;
        }
    };
    record(0);
    for (Eigen::Index n = 0; n < n_steps; ++n) {
        const ComplexMatrix k1 = rhs(rho);
        const ComplexMatrix k2 = rhs(rho + 0.5 * dt * k1);
        const ComplexMatrix k3 = rhs(rho + 0.5 * dt * k2);
        const ComplexMatrix k4 = rhs(rho + dt * k3);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rho = hermitize(rho);
        record(n + 1);
    }
    return out;
}

inline DensitySeries lindblad_evolve(const ComplexMatrix& rho0, const ComplexMatrix& H,
                                     const std::vector<ComplexMatrix>& Ls, double dt,
                                     Eigen::Index n_steps, Eigen::Index stride = 1) {
    return lindblad_evolve(rho0, H, Ls, dt, n_steps, snapshot_steps(n_steps, stride));
}

// ---------------------------------------------------------------------------
// Exact unitary evolution of system (x) single environment mode, the mode
// starting from vacuum:
//   H_tot = H_sys (x) 1 + 1 (x) Omega b^dag b + g (L (x) b^dag + L^dag (x) b),
// which induces the correlation alpha(t,s) = g^2 exp(-i Omega (t-s)) on the
// system coupling operator L. Propagation by eigendecomposition, so any grid
// time is exact.
// ---------------------------------------------------------------------------

struct SingleModeParams {
    double Omega;
    double g;
    Eigen::Index truncation;
};

inline ComplexMatrix joint_single_mode_hamiltonian(const ComplexMatrix& H_sys,
                                                   const ComplexMatrix& L,
                                                   const SingleModeParams& mode) {
    const Eigen::Index dsys = H_sys.rows();
    const ComplexMatrix Isys = identity_op(dsys);
    const ComplexMatrix Imode = identity_op(mode.truncation);
    const ComplexMatrix b = annihilation_op(mode.truncation);
    return tensor_product(H_sys, Imode) + tensor_product(Isys, (mode.Omega * number_op(mode.truncation)).eval()) +
           mode.g * (tensor_product(L, b.adjoint().eval()) + tensor_product(L.adjoint().eval(), b));
}

inline StateSeries joint_unitary_evolve(const ComplexVector& psi0_joint, const ComplexMatrix& H_sys,
                                        const ComplexMatrix& L, const SingleModeParams& mode,
                                        double dt, Eigen::Index n_steps,
                                        const std::vector<Eigen::Index>& snaps) {
    const Eigen::Index dsys = H_sys.rows();
    const Eigen::Index dim = dsys * mode.truncation;
    require_same_dim(psi0_joint.size(), dim, "joint_unitary_evolve");
    const ComplexMatrix Htot = joint_single_mode_hamiltonian(H_sys, L, mode);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(Htot);
    const ComplexVector coeffs = es.eigenvectors().adjoint() * psi0_joint;

    StateSeries out;
    out.times.resize(Eigen::Index(snaps.size()));
    out.psi.reserve(snaps.size());
    for (size_t si = 0; si < snaps.size(); ++si) {
        const double t = double(snaps[si]) * dt;
        ComplexVector phase(coeffs.size());
        for (Eigen::Index k = 0; k < coeffs.size(); ++k)
            phase(k) = std::exp(Complex(0.0, -es.eigenvalues()(k) * t)) * coeffs(k);
        out.times(Eigen::Index(si)) = t;
        out.psi.push_back(es.eigenvectors() * phase);
        // truncation adequacy: population of the top mode level
        double top = 0.0;
        for (Eigen::Index i = 0; i < dsys; ++i)
            top += std::norm(out.psi.back()(i * mode.truncation + mode.truncation - 1));
        if (top > 1e-8)
            throw TruncationTooSmallError("joint_unitary_evolve: top mode level population " +
                                          std::to_string(top));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pseudomode construction: the exact reduced dynamics of a system with the
// exponential kernel weight * exp(-gamma|t-s| - i Omega (t-s)) equals the
// reduced dynamics of system (x) one damped mode with
//   H = H_sys (x) 1 + 1 (x) Omega b^dag b + sqrt(weight) (L b^dag + L^dag b),
//   Lindblad operator sqrt(2 gamma) b,
// the mode starting from vacuum. Returns the system-reduced series.
// ---------------------------------------------------------------------------

inline DensitySeries pseudomode_evolve(const ComplexMatrix& rho0_sys, const ComplexMatrix& H_sys,
                                       const ComplexMatrix& L, const ExponentialKernel& kernel,
                                       double dt, Eigen::Index n_steps,
                                       const std::vector<Eigen::Index>& snaps,
                                       Eigen::Index truncation = 15) {
    const Eigen::Index dsys = H_sys.rows();
    const SingleModeParams mode{kernel.Omega, std::sqrt(kernel.weight), truncation};
    const ComplexMatrix Htot = joint_single_mode_hamiltonian(H_sys, L, mode);
    const ComplexMatrix Lmode =
        tensor_product(identity_op(dsys), (std::sqrt(2.0 * kernel.gamma) * annihilation_op(truncation)).eval());
    ComplexMatrix rho_joint0 = ComplexMatrix::Zero(dsys * truncation, dsys * truncation);
    // mode vacuum: joint(i*T, j*T) block structure
    for (Eigen::Index i = 0; i < dsys; ++i)
        for (Eigen::Index j = 0; j < dsys; ++j)
            rho_joint0(i * truncation, j * truncation) = rho0_sys(i, j);

    const DensitySeries joint = lindblad_evolve(rho_joint0, Htot, {Lmode}, dt, n_steps, snaps);
    DensitySeries out;
    out.times = joint.times;
    out.rho.reserve(joint.rho.size());
    for (const auto& rj : joint.rho) {
        double top = 0.0;
        for (Eigen::Index i = 0; i < dsys; ++i)
            top += rj(i * truncation + truncation - 1, i * truncation + truncation - 1).real();
        if (top > 1e-8)
            throw TruncationTooSmallError("pseudomode_evolve: top mode level population " +
                                          std::to_string(top));
        out.rho.push_back(partial_trace(rj, dsys, truncation, 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Movable-cut reference for the spin + distinguished oscillator + Markov
// bath model. Side A: Markov QSD ensemble on the joint spin-oscillator
// system, averaged and traced over the oscillator. Side B: deterministic
// joint Lindblad evolution, traced the same way.
// ---------------------------------------------------------------------------

struct CutModelParams {
    double omega1 = 1.0;   // spin frequency
    double omega2 = 1.0;   // distinguished oscillator frequency
    double kappa = 0.2;         // spin-oscillator coupling
    double lambda = 0.70710678118654752;  // spin-bath coupling amplitude, lambda^2 = 0.5
    Eigen::Index truncation = 3;
};

struct CutReference {
    RealVector times;
    std::vector<ComplexMatrix> qsd_spin;       // side A
    std::vector<ComplexMatrix> lindblad_spin;  // side B
    EnsembleResult joint_ensemble;             // side A statistics (SE bands)

    // standard error of the side-A spin Bloch vector length at a snapshot:
    // 3 "SE-equivalent" for a reduced trace distance means 1.5 * 3 * this
    double bloch_se(Eigen::Index snap) const {
        double acc = 0.0;
        for (Eigen::Index o = 0; o < 3; ++o)
            acc += joint_ensemble.observable_se(o, snap) * joint_ensemble.observable_se(o, snap);
        return std::sqrt(acc);
    }
};

inline ComplexMatrix cut_joint_hamiltonian(const CutModelParams& p) {
    const ComplexMatrix b = annihilation_op(p.truncation);
    return tensor_product((0.5 * p.omega1 * sigma_z()).eval(), identity_op(p.truncation)) +
           tensor_product(identity_op(2), (p.omega2 * number_op(p.truncation)).eval()) +
           p.kappa * (tensor_product(sigma_minus(), b.adjoint().eval()) +
                      tensor_product(sigma_plus(), b));
}

inline CutReference cut_reference(const CutModelParams& p, const StateVec<2>& psi0_spin, double dt,
                                  double T, Eigen::Index n_paths, std::uint64_t seed,
                                  Eigen::Index stride, int n_threads = 0) {
    const ComplexMatrix H = cut_joint_hamiltonian(p);
    const ComplexMatrix L =
        p.lambda * tensor_product(sigma_minus(), identity_op(p.truncation));
    ComplexVector psi0 = tensor_product(ComplexVector(psi0_spin.normalized()),
                                        fock_state(0, p.truncation));

    MarkovQsdModel<Eigen::Dynamic> model(H, L, psi0, StepScheme{StepVariant::EulerHeun, dt});
    EnsembleConfig cfg;
    cfg.n_paths = n_paths;
    cfg.dt = dt;
    cfg.T = T;
    cfg.global_seed = seed;
    cfg.estimator = EstimatorKind::NormalizedNonlinear;
    cfg.snapshot_stride = stride;
    cfg.n_threads = n_threads;
    // spin Bloch components; their standard errors give the trace-distance
    // bands for the reduced 2x2 comparisons (TD = |delta r| / 2)
    cfg.observable_names = {"sigma_x", "sigma_y", "sigma_z"};
    const ComplexMatrix Imode = identity_op(p.truncation);
    cfg.observables = {tensor_product(sigma_x(), Imode), tensor_product(sigma_y(), Imode),
                       tensor_product(sigma_z(), Imode)};
    EnsembleResult ens = run_ensemble(cfg, model);

    CutReference out;
    out.times = ens.times;
    out.qsd_spin.reserve(ens.mean_density.size());
    for (const auto& rho : ens.mean_density)
        out.qsd_spin.push_back(partial_trace(rho, 2, p.truncation, 1));

    const DensitySeries joint = lindblad_evolve(
        (psi0 * psi0.adjoint()).eval(), H, {L}, dt, cfg.n_steps(),
        std::vector<Eigen::Index>(ens.snapshot_steps.begin(), ens.snapshot_steps.end()));
    out.lindblad_spin.reserve(joint.rho.size());
    for (const auto& rho : joint.rho)
        out.lindblad_spin.push_back(partial_trace(rho, 2, p.truncation, 1));
    out.joint_ensemble = std::move(ens);
    return out;
}

}  // namespace nmqsd
