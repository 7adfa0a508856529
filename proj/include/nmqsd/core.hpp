#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nmqsd {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr Complex kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

// Fixed-size state/operator aliases; Dim = Eigen::Dynamic is allowed.
template <int Dim>
using StateVec = Eigen::Matrix<Complex, Dim, 1>;
template <int Dim>
using OpMat = Eigen::Matrix<Complex, Dim, Dim>;

struct ZeroNormError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncationTooSmallError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DeltaNotPointwiseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotPositiveSemidefiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedKernelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FDivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotSupercriticalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidAnsatzError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ModelEstimatorMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyEnsembleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientSamplesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* where) {
    if (a != b)
        throw DimensionMismatchError(std::string(where) + ": dimension mismatch (" +
                                     std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace nmqsd
