#include <catch2/catch_amalgamated.hpp>

#include "nmqsd/hilbert.hpp"
#include "nmqsd/rng.hpp"

using namespace nmqsd;

namespace {

ComplexVector random_state(RngStream& rng, Eigen::Index dim) {
    ComplexVector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.next_complex_normal();
    return v;
}

ComplexMatrix random_density(RngStream& rng, Eigen::Index dim) {
    ComplexMatrix G(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) G(i, j) = rng.next_complex_normal();
    ComplexMatrix rho = G * G.adjoint();
    return rho / rho.trace().real();
}

// independent index-summation oracle for the partial trace
ComplexMatrix partial_trace_loop(const ComplexMatrix& rho, Eigen::Index d1, Eigen::Index d2,
                                 int keep) {
    if (keep == 1) {
        ComplexMatrix out = ComplexMatrix::Zero(d1, d1);
        for (Eigen::Index i = 0; i < d1; ++i)
            for (Eigen::Index j = 0; j < d1; ++j) {
                Complex acc = 0.0;
                for (Eigen::Index k = 0; k < d2; ++k) acc += rho(i * d2 + k, j * d2 + k);
                out(i, j) = acc;
            }
        return out;
    }
    ComplexMatrix out = ComplexMatrix::Zero(d2, d2);
    for (Eigen::Index i = 0; i < d2; ++i)
        for (Eigen::Index j = 0; j < d2; ++j) {
            Complex acc = 0.0;
            for (Eigen::Index k = 0; k < d1; ++k) acc += rho(k * d2 + i, k * d2 + j);
            out(i, j) = acc;
        }
    return out;
}

// <beta|alpha> for coherent states, evaluated from the closed form
Complex coherent_overlap(Complex beta, Complex alpha) {
    return std::exp(-0.5 * std::norm(beta) - 0.5 * std::norm(alpha) + std::conj(beta) * alpha);
}

}  // namespace

TEST_CASE("normalize basics") {
    ComplexVector up(2);
    up << 1, 0;
    REQUIRE((normalize(up) - up).norm() == 0.0);

    ComplexVector v(2);
    v << 3, 2;
    const ComplexVector n = normalize(v);
    REQUIRE(std::abs(n(0).real() - 3.0 / std::sqrt(13.0)) < 1e-15);
    REQUIRE(std::abs(n(1).real() - 2.0 / std::sqrt(13.0)) < 1e-15);

    ComplexVector zero = ComplexVector::Zero(2);
    REQUIRE_THROWS_AS(normalize(zero), ZeroNormError);
}

TEST_CASE("normalize is idempotent on random states") {
    RngStream rng(7, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const ComplexVector v = random_state(rng, 5);
        const ComplexVector n1 = normalize(v);
        const ComplexVector n2 = normalize(n1);
        REQUIRE((n2 - n1).norm() < 1e-14);
    }
}

TEST_CASE("expectation values") {
    ComplexVector up(2);
    up << 1, 0;
    REQUIRE(std::abs(expectation(up, sigma_z()) - Complex(1.0)) < 1e-15);

    ComplexVector v(2);
    v << 3, 2;
    REQUIRE(std::abs(expectation(normalize(v), sigma_z()).real() - 5.0 / 13.0) < 1e-14);

    const Complex beta(1.3, -0.4);
    const ComplexVector coh = coherent_state(beta, 40);
    REQUIRE(std::abs(expectation(coh, annihilation_op(40)) - beta) < 1e-10);

    ComplexVector bad(3);
    bad << 1, 0, 0;
    REQUIRE_THROWS_AS(expectation(bad, sigma_z()), DimensionMismatchError);
}

TEST_CASE("expectation of Hermitian operators is real and norm-bounded") {
    RngStream rng(11, 0);
    for (int rep = 0; rep < 30; ++rep) {
        ComplexMatrix A(4, 4);
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index j = 0; j < 4; ++j) A(i, j) = rng.next_complex_normal();
        A = hermitize(A).eval();
        const ComplexVector psi = normalize(random_state(rng, 4));
        const Complex e = expectation(psi, A);
        REQUIRE(std::abs(e.imag()) < 1e-12);
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(A, Eigen::EigenvaluesOnly);
        REQUIRE(std::abs(e) <= es.eigenvalues().cwiseAbs().maxCoeff() + 1e-12);
    }
}

TEST_CASE("tensor products") {
    ComplexVector up(2), down(2), vac(3), one(3);
    up << 1, 0;
    down << 0, 1;
    vac << 1, 0, 0;
    one << 0, 1, 0;

    const ComplexVector j = tensor_product(up, vac);
    REQUIRE(j.size() == 6);
    REQUIRE(std::abs(j(0) - Complex(1.0)) < 1e-15);
    REQUIRE(j.tail(5).norm() < 1e-15);

    REQUIRE((tensor_product(identity_op(2), identity_op(2)) - identity_op(4)).norm() == 0.0);

    const ComplexMatrix op = tensor_product(sigma_z(), identity_op(3));
    const ComplexVector v = tensor_product(down, one);
    REQUIRE((op * v + v).norm() < 1e-15);
}

TEST_CASE("partial trace") {
    RngStream rng(13, 0);

    SECTION("product state recovers the kept factor") {
        const ComplexMatrix r1 = random_density(rng, 3);
        const ComplexMatrix r2 = random_density(rng, 4);
        const ComplexMatrix joint = tensor_product(r1, r2);
        REQUIRE((partial_trace(joint, 3, 4, 1) - r1).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE((partial_trace(joint, 3, 4, 2) - r2).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("Bell projector reduces to the maximally mixed state") {
        ComplexVector bell(4);
        bell << 1, 0, 0, 1;
        bell /= std::sqrt(2.0);
        const ComplexMatrix rho = bell * bell.adjoint();
        const ComplexMatrix red = partial_trace(rho, 2, 2, 1);
        REQUIRE((red - 0.5 * identity_op(2)).cwiseAbs().maxCoeff() < 1e-14);
    }

    SECTION("random density matches the index-summation oracle") {
        for (int rep = 0; rep < 20; ++rep) {
            const ComplexMatrix rho = random_density(rng, 4);
            for (int keep : {1, 2}) {
                const ComplexMatrix a = partial_trace(rho, 2, 2, keep);
                const ComplexMatrix b = partial_trace_loop(rho, 2, 2, keep);
                REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-14);
                REQUIRE(is_hermitian(a, 1e-12));
                REQUIRE(std::abs(a.trace().real() - 1.0) < 1e-12);
            }
        }
    }

    SECTION("pure-state shortcut agrees with tracing the projector") {
        for (int rep = 0; rep < 10; ++rep) {
            const ComplexVector psi = normalize(random_state(rng, 12));
            const ComplexMatrix rho = psi * psi.adjoint();
            for (int keep : {1, 2}) {
                const ComplexMatrix a = reduced_density_from_pure(psi, 3, 4, keep);
                const ComplexMatrix b = partial_trace(rho, 3, 4, keep);
                REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }

    REQUIRE_THROWS_AS(partial_trace(ComplexMatrix::Identity(4, 4), 3, 2, 1),
                      DimensionMismatchError);
}

TEST_CASE("coherent and cat states") {
    const ComplexVector vac = coherent_state(0.0, 10);
    REQUIRE((vac - fock_state(0, 10)).norm() < 1e-15);

    const ComplexVector coh = coherent_state(2.0, 30);
    REQUIRE(std::abs(expectation(coh, number_op(30)).real() - 4.0) < 1e-9);
    REQUIRE(std::abs(coh.norm() - 1.0) < 1e-12);

    REQUIRE_THROWS_AS(coherent_state(2.0, 5), TruncationTooSmallError);

    // cat normalization against the direct overlap <alpha|-alpha> = e^{-2|alpha|^2}
    const double alpha = 2.0;
    const ComplexVector cat = cat_state(alpha, 30);
    const Complex overlap = coherent_state(alpha, 30).dot(coherent_state(-alpha, 30));
    REQUIRE(std::abs(overlap - std::exp(-2.0 * alpha * alpha)) < 1e-12);
    const double nf = 1.0 / std::sqrt(2.0 * (1.0 + std::exp(-2.0 * alpha * alpha)));
    const ComplexVector rebuilt =
        nf * (coherent_state(alpha, 30) + coherent_state(-alpha, 30));
    REQUIRE((cat - rebuilt).norm() < 1e-12);
}

TEST_CASE("q function") {
    const QGrid grid{};

    SECTION("vacuum is a unit Gaussian at the origin") {
        const RealMatrix q = q_function(fock_state(0, 20), grid);
        // peak 1/pi at beta = 0 (grid point 40,40)
        REQUIRE(std::abs(q(40, 40) - 1.0 / kPi) < 1e-12);
        const Complex beta(grid.re_at(50), grid.im_at(35));
        REQUIRE(std::abs(q(50, 35) - std::exp(-std::norm(beta)) / kPi) < 1e-12);
        REQUIRE(q.minCoeff() >= 0.0);
        const double mass = q_total_mass(q, grid);
        REQUIRE(mass > 0.99);
        REQUIRE(mass < 1.01);
    }

    SECTION("coherent state is a displaced Gaussian") {
        const RealMatrix q = q_function(coherent_state(2.0, 30), grid);
        Eigen::Index imax, jmax;
        q.maxCoeff(&imax, &jmax);
        REQUIRE(std::abs(grid.re_at(int(imax)) - 2.0) < 0.12);
        REQUIRE(std::abs(grid.im_at(int(jmax))) < 0.12);
        REQUIRE(count_peaks(q) == 1);
        const double mass = q_total_mass(q, grid);
        REQUIRE(mass > 0.99);
        REQUIRE(mass < 1.01);
    }

    SECTION("cat state matches the two-Gaussian closed form") {
        const double alpha = 2.0;
        const ComplexVector cat = cat_state(alpha, 30);
        const RealMatrix q = q_function(cat, grid);
        REQUIRE(count_peaks(q) == 2);
        const double nf = 1.0 / std::sqrt(2.0 * (1.0 + std::exp(-2.0 * alpha * alpha)));
        for (auto [i, j] : {std::pair{40, 40}, {60, 40}, {20, 40}, {50, 52}}) {
            const Complex beta(grid.re_at(i), grid.im_at(j));
            const Complex amp = coherent_overlap(beta, alpha) + coherent_overlap(beta, -alpha);
            const double expected = std::norm(nf * amp) / kPi;
            REQUIRE(std::abs(q(i, j) - expected) < 1e-10);
        }
        const double mass = q_total_mass(q, grid);
        REQUIRE(mass > 0.99);
        REQUIRE(mass < 1.01);
    }
}

TEST_CASE("density utilities") {
    RngStream rng(21, 0);
    const ComplexMatrix rho = random_density(rng, 4);
    REQUIRE(is_valid_density(rho));
    REQUIRE(purity(rho) <= 1.0 + 1e-12);
    REQUIRE(trace_distance(rho, rho) < 1e-14);

    const ComplexMatrix rho2 = random_density(rng, 4);
    const double td = trace_distance(rho, rho2);
    REQUIRE(td >= 0.0);
    REQUIRE(td <= 1.0 + 1e-12);
}
