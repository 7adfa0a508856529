#include <catch2/catch_amalgamated.hpp>

#include "nmqsd/ensemble.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/oracle.hpp"
#include "nmqsd/trajectory.hpp"

using namespace nmqsd;

namespace {

StateVec<2> fig1_initial() {
    StateVec<2> v;
    v << 3.0, 2.0;
    return v.normalized();
}

// exact propagator via eigendecomposition
ComplexVector unitary_exact(const ComplexMatrix& H, const ComplexVector& psi0, double t) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(H);
    ComplexVector c = es.eigenvectors().adjoint() * psi0;
    for (Eigen::Index k = 0; k < c.size(); ++k)
        c(k) *= std::exp(Complex(0.0, -es.eigenvalues()(k) * t));
    return es.eigenvectors() * c;
}

}  // namespace

TEST_CASE("markov qsd: closed system is pure Schroedinger evolution") {
    const double dt = 1e-3;
    MarkovQsdDynamics<2> dyn((0.5 * sigma_z()).eval(), OpMat<2>::Zero().eval(),
                             {StepVariant::EulerHeun, dt});
    auto w = dyn.make_work();
    StateVec<2> psi;
    psi << 1, 0;
    RngStream rng(1, 0);
    for (int n = 0; n < 2000; ++n) {
        const Complex dz = std::sqrt(dt) * rng.next_complex_normal();
        dyn.step(psi, dz, w);
        REQUIRE(std::abs(sigma_z_value(psi) - 1.0) < 1e-12);
    }
}

TEST_CASE("markov qsd: eigenstate of L with H = 0 is a fixed point") {
    const double dt = 1e-3;
    MarkovQsdDynamics<2> dyn(OpMat<2>::Zero().eval(), sigma_z().eval(),
                             {StepVariant::EulerHeun, dt});
    auto w = dyn.make_work();
    StateVec<2> psi;
    psi << 1, 0;
    RngStream rng(2, 0);
    for (int n = 0; n < 1000; ++n) {
        const Complex dz = std::sqrt(dt) * rng.next_complex_normal();
        dyn.step(psi, dz, w);
    }
    REQUIRE(std::abs(std::abs(psi(0)) - 1.0) < 1e-12);  // fixed up to a phase
}

TEST_CASE("markov qsd: dephasing conserves the ensemble mean of sigma_z") {
    const double dt = 1e-3, T = 1.0;
    MarkovQsdModel<2> model((0.5 * sigma_z()).eval(), sigma_z().eval(), fig1_initial(),
                            {StepVariant::EulerHeun, dt});
    EnsembleConfig cfg;
    cfg.n_paths = 10000;
    cfg.dt = dt;
    cfg.T = T;
    cfg.global_seed = 71;
    cfg.snapshot_stride = 100;
    cfg.observable_names = {"sigma_z"};
    cfg.observables = {sigma_z()};
    const auto res = run_ensemble(cfg, model);
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s) {
        const double dev = std::abs(res.observable_means(0, s).real() - 5.0 / 13.0);
        REQUIRE(dev <= 3.0 * res.observable_se(0, s) + 1e-12);
    }
}

TEST_CASE("heun is second order in the deterministic limit") {
    ComplexMatrix H(2, 2);
    H << 0.3, Complex(0.5, -0.2), Complex(0.5, 0.2), -0.7;
    StateVec<2> psi0;
    psi0 << Complex(0.8, 0.1), Complex(0.3, -0.5);
    psi0.normalize();
    const double T = 1.0;
    auto global_err = [&](double dt) {
        MarkovQsdDynamics<2> dyn(OpMat<2>(H), OpMat<2>::Zero().eval(),
                                 {StepVariant::EulerHeun, dt});
        auto w = dyn.make_work();
        StateVec<2> psi = psi0;
        const auto n = Eigen::Index(std::llround(T / dt));
        for (Eigen::Index i = 0; i < n; ++i) dyn.step(psi, 0.0, w);
        const ComplexVector exact = unitary_exact(H, ComplexVector(psi0), T);
        return (ComplexVector(psi) - exact).norm();
    };
    const double e1 = global_err(2e-3), e2 = global_err(1e-3);
    REQUIRE(e1 / e2 > 3.0);
    REQUIRE(e1 / e2 < 5.0);
}

TEST_CASE("pre-renormalization norm drift shrinks at least as dt^{3/2}") {
    StateVec<2> psi0 = fig1_initial();
    auto mean_drift = [&](double dt) {
        MarkovQsdDynamics<2> dyn((0.5 * sigma_z()).eval(), sigma_minus().eval(),
                                 {StepVariant::EulerHeun, dt});
        auto w = dyn.make_work();
        RngStream rng(99, 1);
        double acc = 0.0;
        const int N = 50000;
        for (int i = 0; i < N; ++i) {
            StateVec<2> psi = psi0;
            const double pre = dyn.step(psi, std::sqrt(dt) * rng.next_complex_normal(), w);
            acc += std::abs(pre - 1.0);
        }
        return acc / N;
    };
    const double d1 = mean_drift(2e-3), d2 = mean_drift(1e-3);
    REQUIRE(d1 < 1e-5);
    REQUIRE(d1 / d2 >= std::pow(2.0, 1.5) * 0.8);  // at least 3/2 order (measured: 2nd)
}

TEST_CASE("measurement step: eigenstate of H is a fixed point up to phase") {
    const double dt = 1e-3;
    MeasurementDynamics<2> dyn((0.5 * sigma_z()).eval(), sigma_z().eval(),
                               ExponentialKernel(1.0, 0.0), {StepVariant::EulerHeun, dt}, 2000);
    auto w = dyn.make_work();
    StateVec<2> psi;
    psi << 0, 1;
    auto mem = dyn.make_memory(psi);
    OuNoiseGen gen(ExponentialKernel(1.0, 0.0), dt);
    RngStream rng(7, 3);
    Complex z = gen.init(rng);
    for (int n = 0; n < 2000; ++n) {
        const Complex znext = gen.next(z, rng);
        dyn.step(psi, mem, n, z, znext, w);
        z = znext;
    }
    REQUIRE(std::abs(std::abs(psi(1)) - 1.0) < 1e-12);
}

TEST_CASE("measurement step: invalid operator pairs are rejected") {
    const StepScheme s{StepVariant::EulerHeun, 1e-3};
    REQUIRE_THROWS_AS(MeasurementDynamics<2>((0.5 * sigma_z()).eval(), sigma_x().eval(),
                                             ExponentialKernel(1.0, 0.0), s, 10),
                      InvalidAnsatzError);
    REQUIRE_THROWS_AS(MeasurementDynamics<2>((0.5 * sigma_z()).eval(), sigma_minus().eval(),
                                             ExponentialKernel(1.0, 0.0), s, 10),
                      InvalidAnsatzError);
}

TEST_CASE("measurement step approaches markov qsd dephasing in the short-memory limit") {
    // gamma = 100, lambda^2 = omega: ensemble mean density vs the Lindblad
    // oracle with L = lambda sigma_z at omega t = 2
    const double dt = 1e-3, T = 2.0;
    const Eigen::Index n_steps = Eigen::Index(std::llround(T / dt));
    MeasurementSpinModel model(1.0, 1.0, ExponentialKernel(100.0, 0.0), fig1_initial(),
                               {StepVariant::EulerHeun, dt}, n_steps);
    EnsembleConfig cfg;
    cfg.n_paths = 10000;
    cfg.dt = dt;
    cfg.T = T;
    cfg.global_seed = 73;
    cfg.snapshot_stride = 200;
    const auto res = run_ensemble(cfg, model);

    const ComplexMatrix rho0 = fig1_initial() * fig1_initial().adjoint();
    const auto oracle =
        lindblad_evolve(rho0, (0.5 * sigma_z()).eval(), {sigma_z()}, dt, n_steps,
                        std::vector<Eigen::Index>(res.snapshot_steps.begin(),
                                                  res.snapshot_steps.end()));
    const double td = trace_distance(res.mean_density.back(), oracle.rho.back());
    REQUIRE(td < 0.03);

    // dephasing conserves populations: diagonal stays (9/13, 4/13)
    REQUIRE(std::abs(oracle.rho.back()(0, 0).real() - 9.0 / 13.0) < 1e-10);
}

TEST_CASE("dissipative step: dark state is a fixed point") {
    const double dt = 1e-3;
    DissipativeDynamics<DenseLoweringOps<2>> dyn(
        make_lowering_ops<2>((0.5 * sigma_z()).eval(), sigma_minus().eval(), 1), 1.0,
        ExponentialKernel(1.0, 1.0), 1.0, {StepVariant::EulerHeun, dt}, 2000);
    auto w = dyn.make_work();
    StateVec<2> psi;
    psi << 0, 1;
    Complex S = 0.0;
    OuNoiseGen gen(ExponentialKernel(1.0, 1.0), dt);
    RngStream rng(11, 5);
    Complex z = gen.init(rng);
    for (int n = 0; n < 2000; ++n) {
        const Complex znext = gen.next(z, rng);
        dyn.step(psi, S, n, z, znext, w);
        z = znext;
    }
    REQUIRE(std::abs(std::abs(psi(1)) - 1.0) < 1e-12);
}

TEST_CASE("dissipative step: supercritical resonant trajectories are absorbed by t_c") {
    const double dt = 5e-4, T = 6.0;
    const double tc = critical_time(1.0, 1.0);
    DissipativeSpinModel model(1.0, 1.0, ExponentialKernel(1.0, 1.0), fig1_initial(),
                               {StepVariant::EulerHeun, dt}, Eigen::Index(std::llround(T / dt)),
                               SpinPathStat::MaxSigmaZAfterT0, tc);
    EnsembleConfig cfg;
    cfg.n_paths = 300;
    cfg.dt = dt;
    cfg.T = T;
    cfg.global_seed = 17;
    cfg.snapshot_stride = 20;
    const auto res = run_ensemble(cfg, model);
    REQUIRE(res.path_stats.size() == 300);
    for (double worst : res.path_stats) REQUIRE(worst < -0.99);
}

TEST_CASE("dissipative step: oscillator with single-mode kernel preserves coherent states") {
    const double dt = 1e-3, T = 10.0;
    const Eigen::Index n_steps = Eigen::Index(std::llround(T / dt));
    const Eigen::Index dim = 20;
    const ComplexVector psi0 = coherent_state(1.0, dim);
    DissipativeBosonModel model(1.0, 0.1, SingleModeKernel{0.5, 1.0}, psi0,
                                {StepVariant::EulerHeun, dt}, n_steps);
    auto w = model.make_work();
    const ComplexMatrix a = annihilation_op(dim);
    for (std::uint64_t path = 0; path < 10; ++path) {
        auto ctx = model.make_path(12345, path);
        ComplexVector psi = psi0;
        double worst = 1.0;
        for (Eigen::Index n = 0; n < n_steps; ++n) {
            model.step(ctx, psi, n, w);
            if ((n + 1) % 100 == 0) {
                const Complex beta = expectation(psi, a);
                const double fid = std::norm(coherent_state(beta, dim).dot(psi));
                worst = std::min(worst, fid);
            }
        }
        REQUIRE(worst > 1.0 - 1e-5);  // loss below 1e-6 per unit time over T = 10
    }
}

TEST_CASE("linear step: zero noise and L = 0 is unitary to scheme order") {
    const double dt = 1e-3, T = 2.0;
    LinearDynamics<2> dyn = LinearDynamics<2>::delta_white(
        (0.5 * sigma_z()).eval(), OpMat<2>::Zero().eval(), {StepVariant::EulerHeun, dt});
    auto w = dyn.make_work();
    StateVec<2> psi = fig1_initial();
    for (Eigen::Index n = 0; n < Eigen::Index(std::llround(T / dt)); ++n)
        dyn.step(psi, n, 0.0, 0.0, w);
    REQUIRE(std::abs(psi.norm() - 1.0) < 1e-6);
}

TEST_CASE("linear step: ansatz validation") {
    const StepScheme s{StepVariant::EulerHeun, 1e-3};
    REQUIRE_THROWS_AS(LinearDynamics<2>::measurement_like((0.5 * sigma_z()).eval(),
                                                          sigma_x().eval(),
                                                          ExponentialKernel(1.0, 0.0), s, 10),
                      InvalidAnsatzError);
    REQUIRE_THROWS_AS(
        LinearDynamics<2>::lowering_scaled((0.5 * sigma_z()).eval(), sigma_minus().eval(), 1.0,
                                           2.0, ExponentialKernel(1.0, 0.0), s, 10),
        InvalidAnsatzError);  // wrong omega: [H, B] != -omega B
    SampledKernel sk;
    sk.times = RealVector::Zero(2);
    sk.matrix = ComplexMatrix::Identity(2, 2);
    REQUIRE_THROWS_AS(LinearDynamics<2>::lowering_scaled((0.5 * sigma_z()).eval(),
                                                         sigma_minus().eval(), 1.0, 1.0,
                                                         CorrelationKernel(sk), s, 10),
                      InvalidAnsatzError);
}

TEST_CASE("linear single-mode ensemble keeps the mean squared norm at one") {
    const double dt = 1e-3, T = 3.0;
    LinearLoweringSpinModel model(1.0, 1.0, SingleModeKernel{0.5, 1.0}, fig1_initial(),
                                  {StepVariant::EulerHeun, dt},
                                  Eigen::Index(std::llround(T / dt)));
    EnsembleConfig cfg;
    cfg.n_paths = 5000;
    cfg.dt = dt;
    cfg.T = T;
    cfg.global_seed = 29;
    cfg.estimator = EstimatorKind::RawLinear;
    cfg.snapshot_stride = 100;
    const auto res = run_ensemble(cfg, model);
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s)
        REQUIRE(std::abs(res.trace_mean(s) - 1.0) <= 3.0 * res.trace_se(s) + 1e-12);
}

TEST_CASE("two-channel step: kappa = 0 reduces to the Markov linear unravelling") {
    const double dt = 1e-3;
    const Eigen::Index n_steps = 3000;
    const double lambda = std::sqrt(0.5);
    TwoChannelDynamics two(1.0, 1.0, 0.0, lambda, {StepVariant::EulerHeun, dt}, n_steps);
    LinearDynamics<2> lin = LinearDynamics<2>::delta_white(
        (0.5 * sigma_z()).eval(), (lambda * sigma_minus()).eval(), {StepVariant::EulerHeun, dt});
    auto w2 = two.make_work();
    auto wl = lin.make_work();
    StateVec<2> a = fig1_initial(), b = fig1_initial();
    RngStream rng(3, 9);
    for (Eigen::Index n = 0; n < n_steps; ++n) {
        const Complex xi = rng.next_complex_normal() / std::sqrt(dt);
        two.step(a, n, xi, 0.0, 0.0, w2);
        lin.step(b, n, xi, xi, wl);
        REQUIRE((a - b).norm() < 1e-10);
    }
}

TEST_CASE("two-channel step: lambda = 0 reduces to the single-mode linear unravelling") {
    const double dt = 1e-3;
    const Eigen::Index n_steps = 3000;
    const double kappa = 0.2, omega2 = 0.8;
    TwoChannelDynamics two(1.0, omega2, kappa, 0.0, {StepVariant::EulerHeun, dt}, n_steps);
    LinearDynamics<2> lin = LinearDynamics<2>::lowering_scaled(
        (0.5 * sigma_z()).eval(), sigma_minus().eval(), kappa, 1.0, SingleModeKernel{omega2, 1.0},
        {StepVariant::EulerHeun, dt}, n_steps);
    auto w2 = two.make_work();
    auto wl = lin.make_work();
    StateVec<2> a = fig1_initial(), b = fig1_initial();
    RngStream rng(4, 9);
    const Complex wamp = rng.next_complex_normal();
    for (Eigen::Index n = 0; n < n_steps; ++n) {
        const Complex z_n = wamp * std::exp(Complex(0.0, omega2 * double(n) * dt));
        const Complex z_np1 = wamp * std::exp(Complex(0.0, omega2 * double(n + 1) * dt));
        two.step(a, n, 0.0, z_n, z_np1, w2);
        lin.step(b, n, z_n, z_np1, wl);
        REQUIRE((a - b).norm() < 1e-10);
    }
}
