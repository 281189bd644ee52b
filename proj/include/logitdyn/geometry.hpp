#ifndef LOGITDYN_GEOMETRY_HPP
#define LOGITDYN_GEOMETRY_HPP

// Geometry of the fixed-feature softmax classifier z = W phi.
//
// Everything here is a pure function of its arguments. The parameter-space
// Hessian is never materialized: H_W acts on a perturbation dW through the
// induced logit perturbation dW phi, i.e. H_W(dW) = H_z dW (phi phi^T).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "logitdyn/core.hpp"

namespace logitdyn {

/// Fixed feature phi of one example with its cached squared norm.
class FeatureVector {
 public:
  explicit FeatureVector(Vector phi) : phi_(std::move(phi)) {
    require(phi_.size() >= 1, "feature vector must have d >= 1");
    require(phi_.allFinite(), "feature vector has non-finite entries");
    mu_ = phi_.squaredNorm();
  }

  const Vector& phi() const { return phi_; }
  double mu() const { return mu_; }
  Eigen::Index dim() const { return phi_.size(); }

 private:
  Vector phi_;
  double mu_ = 0.0;
};

struct OneHotLabel {
  Eigen::Index index = 0;
  Eigen::Index classes = 0;

  OneHotLabel(Eigen::Index index_, Eigen::Index classes_) : index(index_), classes(classes_) {
    require(classes >= 2, "label needs at least two classes");
    require(index >= 0 && index < classes, "label index out of range");
  }

  Vector dense() const {
    Vector y = Vector::Zero(classes);
    y[index] = 1.0;
    return y;
  }
};

namespace detail {

// log sum_j exp(z_j) split as z_k + log1p(rest) around the largest logit, so
// log-probabilities close to zero keep their full relative precision.
struct LogPartition {
  double max_logit;
  double log1p_rest;
};

inline LogPartition log_partition(const LogitVector& z) {
  Eigen::Index k = 0;
  const double m = z.maxCoeff(&k);
  double rest = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (j != k) rest += std::exp(z[j] - m);
  }
  return {m, std::log1p(rest)};
}

}  // namespace detail

inline double log_sum_exp(const LogitVector& z) {
  const auto lp = detail::log_partition(z);
  return lp.max_logit + lp.log1p_rest;
}

inline ProbVector softmax(const LogitVector& z) {
  require(z.size() >= 1, "softmax of empty vector");
  require(z.allFinite(), "softmax input has non-finite entries");
  const double m = z.maxCoeff();
  const Vector e = z.unaryExpr([m](double v) { return std::exp(v - m); });
  return e / e.sum();
}

inline Vector log_softmax(const LogitVector& z) {
  require(z.allFinite(), "log_softmax input has non-finite entries");
  const auto lp = detail::log_partition(z);
  return (z.array() - lp.max_logit) - lp.log1p_rest;
}

/// -log p_y, evaluated as logsumexp(z) - z_y.
inline double cross_entropy(const LogitVector& z, const OneHotLabel& y) {
  require(z.size() == y.classes, "cross_entropy: label/logit size mismatch");
  require(z.allFinite(), "cross_entropy input has non-finite entries");
  const auto lp = detail::log_partition(z);
  return (lp.max_logit - z[y.index]) + lp.log1p_rest;
}

inline Residual logit_gradient(const ProbVector& p, const OneHotLabel& y) {
  require(p.size() == y.classes, "logit_gradient: label/probability size mismatch");
  Residual g = p;
  g[y.index] -= 1.0;
  return g;
}

inline LogitHessian logit_hessian(const ProbVector& p) {
  LogitHessian h = -p * p.transpose();
  h.diagonal() += p;
  return h;
}

/// (H_z g)_i = p_i (p_i - y_i - C) with C = sum_k p_k^2 - p_y.
inline Vector hessian_residual_product(const ProbVector& p, const OneHotLabel& y) {
  require(p.size() == y.classes, "hessian_residual_product: size mismatch");
  const double c = p.squaredNorm() - p[y.index];
  Vector out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double yi = i == y.index ? 1.0 : 0.0;
    out[i] = p[i] * (p[i] - yi - c);
  }
  return out;
}

/// T_phi(dW) = dW phi.
inline LogitVector logit_perturbation(const ParameterMatrix& dw, const FeatureVector& phi) {
  require(dw.cols() == phi.dim(), "logit_perturbation: column count must equal d");
  return dw * phi.phi();
}

/// Gradient of F(W) = f(W phi, y) given the logit gradient: the rank-one g phi^T.
inline ParameterMatrix parameter_gradient(const Residual& g, const FeatureVector& phi) {
  require(g.size() >= 1, "parameter_gradient: empty residual");
  return g * phi.phi().transpose();
}

inline ParameterMatrix apply_parameter_hessian(const LogitHessian& h, const ParameterMatrix& dw,
                                               const FeatureVector& phi) {
  require(h.rows() == h.cols(), "apply_parameter_hessian: Hessian must be square");
  require(dw.rows() == h.rows(), "apply_parameter_hessian: row count must equal V");
  require(dw.cols() == phi.dim(), "apply_parameter_hessian: column count must equal d");
  return (h * (dw * phi.phi())) * phi.phi().transpose();
}

/// Minimum-Frobenius-norm dW with dW phi = dz, namely dz phi^T / mu.
inline ParameterMatrix min_norm_preimage(const LogitVector& dz, const FeatureVector& phi) {
  if (!(phi.mu() > 0.0)) throw DegenerateFeature("min_norm_preimage: feature has zero norm");
  return dz * phi.phi().transpose() / phi.mu();
}

// ---------------------------------------------------------------------------
// Spectral decomposition

template <typename Scalar>
struct SymmetricEigen {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  // columns
  int sweeps = 0;
};

struct JacobiOptions {
  double off_tolerance = 1e-14;  // off-diagonal Frobenius mass
  int max_sweeps = 100;
};

/// Cyclic Jacobi rotations for a small dense symmetric matrix. Values are
/// returned unsorted, in diagonal order.
template <typename Scalar>
SymmetricEigen<Scalar> jacobi_eigen(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a,
                                    const JacobiOptions& opts = {}) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require(a.rows() == a.cols(), "jacobi_eigen: matrix must be square");
  const Eigen::Index n = a.rows();
  Mat v = Mat::Identity(n, n);

  auto off_norm = [&] {
    Scalar s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  Scalar off = off_norm();
  while (off >= Scalar(opts.off_tolerance)) {
    if (sweep == opts.max_sweeps) {
      throw NumericalFailure("jacobi_eigen: no convergence after " + std::to_string(sweep) +
                             " sweeps (off-diagonal norm " + std::to_string(double(off)) + ")");
    }
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p);
          const Scalar vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    ++sweep;
    off = off_norm();
  }
  return {a.diagonal(), v, sweep};
}

/// Orthonormal basis of the complement of the all-ones vector (Helmert
/// contrasts), V x (V-1).
inline Matrix ones_complement_basis(Eigen::Index classes) {
  Matrix q = Matrix::Zero(classes, classes - 1);
  for (Eigen::Index k = 1; k < classes; ++k) {
    const double scale = 1.0 / std::sqrt(double(k) * double(k + 1));
    for (Eigen::Index i = 0; i < k; ++i) q(i, k - 1) = scale;
    q(k, k - 1) = -double(k) * scale;
  }
  return q;
}

/// Nonzero spectrum of H_z restricted to 1-perp.
struct ModalBasis {
  Vector eigenvalues;  // descending
  Matrix eigenvectors;  // V x (V-1), columns orthonormal and orthogonal to 1
  int sweeps = 0;

  Eigen::Index modes() const { return eigenvalues.size(); }
};

namespace detail {

// Largest |entry| made positive; ties go to the lowest index.
inline void normalize_sign(Eigen::Ref<Vector> v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0) v = -v;
}

inline bool eigen_ties(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace detail

inline ModalBasis spectral_decompose(const LogitHessian& h, const JacobiOptions& opts = {}) {
  require(h.rows() == h.cols() && h.rows() >= 2, "spectral_decompose: need a square V x V, V >= 2");
  require(h.allFinite(), "spectral_decompose: non-finite Hessian");
  const Eigen::Index classes = h.rows();
  const Matrix q = ones_complement_basis(classes);
  Matrix restricted = q.transpose() * h * q;
  restricted = 0.5 * (restricted + restricted.transpose()).eval();
  const auto eig = jacobi_eigen<double>(restricted, opts);

  const Eigen::Index m = classes - 1;
  Matrix vecs = q * eig.vectors;
  for (Eigen::Index k = 0; k < m; ++k) detail::normalize_sign(vecs.col(k));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double la = eig.values[a];
    const double lb = eig.values[b];
    if (!detail::eigen_ties(la, lb)) return la > lb;
    for (Eigen::Index i = 0; i < classes; ++i) {
      if (vecs(i, a) != vecs(i, b)) return vecs(i, a) > vecs(i, b);
    }
    return false;
  });

  ModalBasis basis;
  basis.eigenvalues.resize(m);
  basis.eigenvectors.resize(classes, m);
  basis.sweeps = eig.sweeps;
  for (Eigen::Index k = 0; k < m; ++k) {
    basis.eigenvalues[k] = eig.values[order[static_cast<std::size_t>(k)]];
    basis.eigenvectors.col(k) = vecs.col(order[static_cast<std::size_t>(k)]);
  }
  return basis;
}

/// e_k = v_k^T g.
inline Vector modal_coefficients(const ModalBasis& basis, const Residual& g) {
  require(g.size() == basis.eigenvectors.rows(), "modal_coefficients: size mismatch");
  return basis.eigenvectors.transpose() * g;
}

}  // namespace logitdyn

#endif  // LOGITDYN_GEOMETRY_HPP
