#include <catch2/catch_amalgamated.hpp>

#include "nmqsd/ensemble.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/oracle.hpp"

using namespace nmqsd;

namespace {

StateVec<2> fig1_initial() {
    StateVec<2> v;
    v << 3.0, 2.0;
    return v.normalized();
}

EnsembleConfig damped_spin_cfg(Eigen::Index n_paths, std::uint64_t seed, EstimatorKind est) {
    EnsembleConfig cfg;
    cfg.n_paths = n_paths;
    cfg.dt = 1e-3;
    cfg.T = 2.0;
    cfg.global_seed = seed;
    cfg.estimator = est;
    cfg.snapshot_stride = 100;
    cfg.observable_names = {"sigma_x", "sigma_y", "sigma_z"};
    cfg.observables = {sigma_x(), sigma_y(), sigma_z()};
    return cfg;
}

bool results_identical(const EnsembleResult& a, const EnsembleResult& b) {
    if (a.n_paths != b.n_paths || a.times.size() != b.times.size()) return false;
    if ((a.times - b.times).cwiseAbs().maxCoeff() != 0.0) return false;
    for (size_t s = 0; s < a.mean_density.size(); ++s) {
        if ((a.mean_density[s] - b.mean_density[s]).cwiseAbs().maxCoeff() != 0.0) return false;
        if ((a.density_var[s] - b.density_var[s]).cwiseAbs().maxCoeff() != 0.0) return false;
    }
    if ((a.observable_means - b.observable_means).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.observable_se - b.observable_se).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.trace_mean - b.trace_mean).cwiseAbs().maxCoeff() != 0.0) return false;
    if (a.path_stats != b.path_stats) return false;
    return true;
}

}  // namespace

TEST_CASE("single nonlinear path gives a rank-one projector at every snapshot") {
    MarkovQsdModel<2> model((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                            {StepVariant::EulerHeun, 1e-3});
    EnsembleConfig cfg = damped_spin_cfg(1, 5, EstimatorKind::NormalizedNonlinear);
    const auto res = run_ensemble(cfg, model);
    for (const auto& rho : res.mean_density) {
        REQUIRE(std::abs(rho.trace().real() - 1.0) < 1e-12);
        REQUIRE(std::abs(purity(rho) - 1.0) < 1e-10);
    }
}

TEST_CASE("closed system ensemble equals the unitary projector") {
    MarkovQsdModel<2> model((0.5 * sigma_z()).eval(), OpMat<2>::Zero().eval(), fig1_initial(),
                            {StepVariant::EulerHeun, 1e-3});
    EnsembleConfig cfg = damped_spin_cfg(8, 6, EstimatorKind::NormalizedNonlinear);
    const auto res = run_ensemble(cfg, model);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es((0.5 * sigma_z()).eval());
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s) {
        ComplexVector c = es.eigenvectors().adjoint() * ComplexVector(fig1_initial());
        for (Eigen::Index k = 0; k < 2; ++k)
            c(k) *= std::exp(Complex(0.0, -es.eigenvalues()(k) * res.times(s)));
        const ComplexVector exact = es.eigenvectors() * c;
        REQUIRE(trace_distance(res.mean_density[size_t(s)], exact * exact.adjoint()) < 1e-6);
    }
}

TEST_CASE("mean_density operation") {
    ComplexVector up(2), down(2);
    up << 1, 0;
    down << 0, 1;

    SECTION("two orthogonal pure states average to the maximally mixed state") {
        const ComplexMatrix rho = mean_density({up, down}, EstimatorKind::NormalizedNonlinear);
        REQUIRE((rho - 0.5 * identity_op(2)).cwiseAbs().maxCoeff() < 1e-14);
    }

    SECTION("degenerate raw ensemble is the projector of the common state") {
        // all-zero-noise linear paths are identical: deterministically damped
        LinearDynamics<2> dyn = LinearDynamics<2>::delta_white(
            (0.5 * sigma_z()).eval(), sigma_minus().eval(), {StepVariant::EulerHeun, 1e-3});
        auto w = dyn.make_work();
        StateVec<2> psi = fig1_initial();
        for (Eigen::Index n = 0; n < 500; ++n) dyn.step(psi, n, 0.0, 0.0, w);
        const ComplexVector damped(psi);
        const ComplexMatrix rho =
            mean_density({damped, damped, damped}, EstimatorKind::RawLinear);
        REQUIRE((rho - damped * damped.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
        REQUIRE(rho.trace().real() < 1.0);  // unnormalized projector of a damped state
    }

    SECTION("empty ensemble is rejected") {
        REQUIRE_THROWS_AS(mean_density({}, EstimatorKind::RawLinear), EmptyEnsembleError);
    }
}

TEST_CASE("standard_error operation") {
    REQUIRE(standard_error({3.0, 3.0, 3.0, 3.0}) == 0.0);

    std::vector<double> bernoulli;
    for (int i = 0; i < 5000; ++i) bernoulli.push_back(0.0);
    for (int i = 0; i < 5000; ++i) bernoulli.push_back(1.0);
    REQUIRE(std::abs(standard_error(bernoulli) - 0.005) < 1e-6);

    REQUIRE_THROWS_AS(standard_error({1.0}), InsufficientSamplesError);

    // SE scales as 1/sqrt(N): quadrupling N halves SE within 20%
    RngStream rng(41, 0);
    std::vector<double> small, large;
    for (int i = 0; i < 2000; ++i) small.push_back(rng.next_normal());
    large = small;
    for (int i = 0; i < 6000; ++i) large.push_back(rng.next_normal());
    const double ratio = standard_error(large) / standard_error(small);
    REQUIRE(ratio > 0.5 * 0.8);
    REQUIRE(ratio < 0.5 * 1.2);
}

TEST_CASE("raw linear ensembles keep mean trace near one") {
    MarkovLinearModel<2> model((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                               {StepVariant::EulerHeun, 1e-3});
    EnsembleConfig cfg = damped_spin_cfg(5000, 31, EstimatorKind::RawLinear);
    const auto res = run_ensemble(cfg, model);
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s) {
        REQUIRE(std::abs(res.trace_mean(s) - 1.0) <= 3.0 * res.trace_se(s) + 1e-12);
        REQUIRE(std::abs(res.mean_density[size_t(s)].trace().real() - 1.0) <=
                5.0 * res.trace_se(s) + 1e-12);
    }
}

TEST_CASE("raw linear and normalized nonlinear estimators agree on the damped spin") {
    MarkovLinearModel<2> lin((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                             {StepVariant::EulerHeun, 1e-3});
    MarkovQsdModel<2> nonlin((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                             {StepVariant::EulerHeun, 1e-3});
    const auto a = run_ensemble(damped_spin_cfg(8000, 57, EstimatorKind::RawLinear), lin);
    const auto b =
        run_ensemble(damped_spin_cfg(8000, 58, EstimatorKind::NormalizedNonlinear), nonlin);
    for (Eigen::Index s = 0; s < a.n_snapshots(); ++s) {
        double band = 0.0;
        for (Eigen::Index o = 0; o < 3; ++o)
            band += a.observable_se(o, s) * a.observable_se(o, s) +
                    b.observable_se(o, s) * b.observable_se(o, s);
        // the raw estimator's trace fluctuation also moves the eigenvalues
        band = 0.5 * std::sqrt(band) + 0.5 * a.trace_se(s);
        REQUIRE(trace_distance(a.mean_density[size_t(s)], b.mean_density[size_t(s)]) <=
                5.0 * band + 1e-12);
    }
}

TEST_CASE("mean density stays positive within statistical tolerance") {
    MarkovQsdModel<2> model((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                            {StepVariant::EulerHeun, 1e-3});
    const auto res = run_ensemble(damped_spin_cfg(4000, 59, EstimatorKind::NormalizedNonlinear),
                                  model);
    for (Eigen::Index s = 0; s < res.n_snapshots(); ++s)
        REQUIRE(min_eigenvalue(res.mean_density[size_t(s)]) >=
                -5.0 * res.density_se_frobenius(s));
}

TEST_CASE("ensembles are reproducible across runs and worker counts") {
    DissipativeSpinModel model(1.0, 1.0, ExponentialKernel(1.0, 1.0), fig1_initial(),
                               {StepVariant::EulerHeun, 1e-3}, 2000, SpinPathStat::FinalSigmaZ);
    EnsembleConfig cfg = damped_spin_cfg(600, 91, EstimatorKind::NormalizedNonlinear);
    cfg.n_threads = 1;
    const auto a = run_ensemble(cfg, model);
    const auto b = run_ensemble(cfg, model);
    REQUIRE(results_identical(a, b));
    cfg.n_threads = 3;
    const auto c = run_ensemble(cfg, model);
    REQUIRE(results_identical(a, c));
}

TEST_CASE("estimator mismatch is rejected") {
    MarkovQsdModel<2> model((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                            {StepVariant::EulerHeun, 1e-3});
    EnsembleConfig cfg = damped_spin_cfg(10, 1, EstimatorKind::RawLinear);
    REQUIRE_THROWS_AS(run_ensemble(cfg, model), ModelEstimatorMismatchError);
}

TEST_CASE("config validation") {
    EnsembleConfig cfg;
    cfg.dt = 1e-3;
    cfg.T = 1.0005e-3 * 7;  // not an integer multiple
    REQUIRE_THROWS_AS(cfg.n_steps(), ConfigError);
    cfg.T = 1.0;
    REQUIRE(cfg.n_steps() == 1000);
    cfg.n_paths = 0;
    MarkovQsdModel<2> model((0.5 * sigma_z()).eval(), sigma_minus().eval(), fig1_initial(),
                            {StepVariant::EulerHeun, 1e-3});
    cfg.estimator = EstimatorKind::NormalizedNonlinear;
    REQUIRE_THROWS_AS(run_ensemble(cfg, model), ConfigError);
}
