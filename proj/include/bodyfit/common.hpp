#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace bodyfit {

/// Row-major n x 3 point set (meters unless noted otherwise).
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rotations = std::vector<Eigen::Matrix3d>;

enum class ErrorKind {
  Parse,
  Invariant,
  Dimension,
  Singular,
  Degenerate,
  OutOfRange,
  InvalidArgument,
  Convergence,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Invariant: return "invariant violation";
    case ErrorKind::Dimension: return "dimension mismatch";
    case ErrorKind::Singular: return "singular system";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Convergence: return "convergence failure";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) {
    throw Error(kind, what);
  }
}

/// sqrt(mean_i |a_i - b_i|^2) over rows.
inline double rmse(const Eigen::Ref<const Points>& a, const Eigen::Ref<const Points>& b) {
  if (a.rows() == 0) {
    return 0.0;
  }
  return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

}  // namespace bodyfit
