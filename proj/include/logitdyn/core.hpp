#ifndef LOGITDYN_CORE_HPP
#define LOGITDYN_CORE_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace logitdyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Semantic aliases. All share Eigen storage; the names document which
// invariants a value is expected to carry.
using LogitVector = Vector;      // z, length V
using ProbVector = Vector;       // p on the open simplex
using Residual = Vector;         // g = p - y, sums to zero
using LogitHessian = Matrix;     // Diag(p) - p p^T
using ParameterMatrix = Matrix;  // W, V x d

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DegenerateFeature : std::domain_error {
  using std::domain_error::domain_error;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OracleFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidInput(what);
}

}  // namespace logitdyn

#endif  // LOGITDYN_CORE_HPP
