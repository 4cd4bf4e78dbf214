#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <string_view>

namespace fehmm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

enum class ErrorKind {
  InvalidArgument,
  Unsupported,
  IncompressibleUnsupported,
  PairingFailure,
  NonPhysicalDeformation,
  DegenerateElement,
  SingularSystem,
  ConstraintRedundancy,
  NoConvergence,
  NonPhysicalAverage,
  InvalidPairing,
  InvalidComparison,
  Io,
  Internal,
};

std::string_view to_string(ErrorKind kind);

/// Exception type used throughout the library; `kind()` identifies the
/// failure class so callers (and the CLI) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::IncompressibleUnsupported: return "incompressible-unsupported";
    case ErrorKind::PairingFailure: return "pairing-failure";
    case ErrorKind::NonPhysicalDeformation: return "non-physical-deformation";
    case ErrorKind::DegenerateElement: return "degenerate-element";
    case ErrorKind::SingularSystem: return "singular-system";
    case ErrorKind::ConstraintRedundancy: return "constraint-redundancy";
    case ErrorKind::NoConvergence: return "no-convergence";
    case ErrorKind::NonPhysicalAverage: return "non-physical-average";
    case ErrorKind::InvalidPairing: return "invalid-pairing";
    case ErrorKind::InvalidComparison: return "invalid-comparison";
    case ErrorKind::Io: return "io";
    case ErrorKind::Internal: return "internal-error";
  }
  return "unknown";
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace fehmm
