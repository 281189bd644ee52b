#ifndef LOGITDYN_ORACLE_HPP
#define LOGITDYN_ORACLE_HPP

// Independent reference computations in extended precision.
//
// Nothing in this header calls into geometry/objectives/dynamics for the
// quantity it checks: softmax, losses, steps and Hessians are re-derived
// here over long double with plain loops. Callers convert main-path results
// to std::vector<double> and compare through OracleReport.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "logitdyn/core.hpp"

namespace logitdyn::oracle {

using Real = long double;
using RVec = std::vector<Real>;
using RMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

enum class TolerancePolicy { kAbsolute, kRelative, kEither };

struct OracleReport {
  std::string quantity;
  std::vector<double> main_value;
  std::vector<double> oracle_value;
  double abs_err = 0.0;
  double rel_err = 0.0;
  double tolerance = 0.0;
  TolerancePolicy policy = TolerancePolicy::kEither;
  bool pass = false;
  std::string note;
};

inline const char* to_string(TolerancePolicy p) {
  switch (p) {
    case TolerancePolicy::kAbsolute: return "absolute";
    case TolerancePolicy::kRelative: return "relative";
    case TolerancePolicy::kEither: return "either";
  }
  return "?";
}

inline void to_json(nlohmann::json& j, const OracleReport& r) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  };
  auto vec = [&](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(num(x));
    return a;
  };
  j = nlohmann::json{{"quantity", r.quantity},       {"main_value", vec(r.main_value)},
                     {"oracle_value", vec(r.oracle_value)}, {"abs_err", num(r.abs_err)},
                     {"rel_err", num(r.rel_err)},     {"tolerance", r.tolerance},
                     {"policy", to_string(r.policy)}, {"pass", r.pass}};
  if (!r.note.empty()) j["note"] = r.note;
}

/// Euclidean error between two vectors; rel is relative to the oracle norm.
inline OracleReport compare(std::string quantity, std::vector<double> main_value, std::vector<double> oracle_value,
                            double tolerance, TolerancePolicy policy) {
  OracleReport r;
  r.quantity = std::move(quantity);
  r.tolerance = tolerance;
  r.policy = policy;
  if (main_value.size() != oracle_value.size()) {
    r.abs_err = r.rel_err = std::numeric_limits<double>::infinity();
    r.note = "size mismatch";
  } else {
    Real diff = 0;
    Real ref = 0;
    for (std::size_t i = 0; i < main_value.size(); ++i) {
      const Real d = Real(main_value[i]) - Real(oracle_value[i]);
      diff += d * d;
      ref += Real(oracle_value[i]) * Real(oracle_value[i]);
    }
    r.abs_err = double(std::sqrt(diff));
    r.rel_err = ref > 0 ? double(std::sqrt(diff) / std::sqrt(ref)) : (diff == 0 ? 0.0 : double(INFINITY));
  }
  switch (policy) {
    case TolerancePolicy::kAbsolute: r.pass = r.abs_err <= tolerance; break;
    case TolerancePolicy::kRelative: r.pass = r.rel_err <= tolerance; break;
    case TolerancePolicy::kEither: r.pass = r.abs_err <= tolerance || r.rel_err <= tolerance; break;
  }
  r.main_value = std::move(main_value);
  r.oracle_value = std::move(oracle_value);
  return r;
}

/// Pass/fail report for a property with a single measured scalar (e.g. a
/// worst-case violation) against a bound.
inline OracleReport bound_report(std::string quantity, double measured, double bound, std::string note = {}) {
  OracleReport r;
  r.quantity = std::move(quantity);
  r.main_value = {measured};
  r.oracle_value = {bound};
  r.abs_err = measured;
  r.rel_err = std::numeric_limits<double>::quiet_NaN();
  r.tolerance = bound;
  r.policy = TolerancePolicy::kAbsolute;
  r.pass = measured <= bound;
  r.note = std::move(note);
  return r;
}

inline std::vector<double> to_double(const RVec& v) { return {v.begin(), v.end()}; }

template <typename Derived>
RVec to_real(const Eigen::MatrixBase<Derived>& m) {
  // Column-major flattening, which is vec() for matrices.
  RVec out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index c = 0, k = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(k++)] = Real(m(r, c));
  return out;
}

template <typename Derived>
std::vector<double> flatten(const Eigen::MatrixBase<Derived>& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index c = 0, k = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(k++)] = m(r, c);
  return out;
}

// ---------------------------------------------------------------------------
// Extended-precision primitives

inline Real kahan_sum(const RVec& xs) {
  Real s = 0;
  Real c = 0;
  for (Real x : xs) {
    const Real y = x - c;
    const Real t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

inline RVec softmax(const RVec& z) {
  Real m = z.at(0);
  for (Real v : z) m = std::max(m, v);
  RVec e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) e[i] = std::exp(z[i] - m);
  const Real s = kahan_sum(e);
  for (Real& v : e) v /= s;
  return e;
}

inline Real log_partition(const RVec& z) {
  Real m = z.at(0);
  for (Real v : z) m = std::max(m, v);
  RVec e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) e[i] = std::exp(z[i] - m);
  return m + std::log(kahan_sum(e));
}

inline Real log_prob(const RVec& z, std::size_t k) { return z.at(k) - log_partition(z); }

inline Real cross_entropy(const RVec& z, std::size_t y) { return -log_prob(z, y); }

/// z = W phi with W stored column-major (V x d) in a flat vector.
inline RVec logits(const RVec& w_flat, const RVec& phi, std::size_t classes) {
  const std::size_t d = phi.size();
  RVec z(classes, 0);
  for (std::size_t r = 0; r < classes; ++r) {
    RVec terms(d);
    for (std::size_t c = 0; c < d; ++c) terms[c] = w_flat[c * classes + r] * phi[c];
    z[r] = kahan_sum(terms);
  }
  return z;
}

/// Single-token DPO loss, computed from its definition.
inline Real dpo_loss(const RVec& w_flat, const RVec& phi, const RVec& ref_logits, std::size_t y_plus,
                     std::size_t y_minus, Real beta) {
  const RVec z = logits(w_flat, phi, ref_logits.size());
  const Real margin = beta * ((log_prob(z, y_plus) - log_prob(ref_logits, y_plus)) -
                              (log_prob(z, y_minus) - log_prob(ref_logits, y_minus)));
  // -log sigma(m) = log(1 + exp(-m))
  return margin >= 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central differences (f(x+he_i) - f(x-he_i)) / 2h in long double.
inline RVec fd_gradient(const std::function<Real(const RVec&)>& loss, const RVec& point, Real step) {
  if (!(step > 0)) throw InvalidInput("fd_gradient: step must be positive");
  RVec grad(point.size());
  RVec x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + step;
    const Real fp = loss(x);
    x[i] = point[i] - step;
    const Real fm = loss(x);
    x[i] = point[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw OracleFailure("fd_gradient: non-finite loss at coordinate " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (2 * step);
  }
  return grad;
}

/// Jacobian of a vector map by central differences; column i is d out / d x_i.
inline RMat fd_jacobian(const std::function<RVec(const RVec&)>& map, const RVec& point, Real step) {
  if (!(step > 0)) throw InvalidInput("fd_jacobian: step must be positive");
  RVec x = point;
  const std::size_t m = map(point).size();
  RMat jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(point.size()));
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + step;
    const RVec fp = map(x);
    x[i] = point[i] - step;
    const RVec fm = map(x);
    x[i] = point[i];
    for (std::size_t r = 0; r < m; ++r) {
      if (!std::isfinite(fp[r]) || !std::isfinite(fm[r])) throw OracleFailure("fd_jacobian: non-finite map value");
      jac(Eigen::Index(r), Eigen::Index(i)) = (fp[r] - fm[r]) / (2 * step);
    }
  }
  return jac;
}

struct CheckedGradient {
  RVec value;       // estimate at the primary step
  Real agreement;   // relative gap between the two step sizes
};

inline Real rel_gap(const RVec& a, const RVec& b) {
  Real diff = 0;
  Real ref = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return ref > 0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

/// FD gradient at step 1e-5 validated against step 1e-4. When the two
/// disagree by more than 10x the tolerance the oracle itself is unusable and
/// OracleFailure is thrown.
inline CheckedGradient fd_gradient_checked(const std::function<Real(const RVec&)>& loss, const RVec& point,
                                           double tolerance, Real step = 1e-5L, Real cross_step = 1e-4L) {
  const RVec fine = fd_gradient(loss, point, step);
  const RVec coarse = fd_gradient(loss, point, cross_step);
  const Real gap = rel_gap(coarse, fine);
  if (gap > 10 * Real(tolerance)) {
    throw OracleFailure("fd_gradient: step sizes disagree (relative gap " + std::to_string(double(gap)) + ")");
  }
  return {fine, gap};
}

// ---------------------------------------------------------------------------
// Dense Hessians

inline RMat logit_hessian(const RVec& p) {
  const auto n = static_cast<Eigen::Index>(p.size());
  RMat h(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) h(i, j) = (i == j ? p[i] : Real(0)) - p[i] * p[j];
  return h;
}

inline constexpr std::size_t kKroneckerCap = 4096;

/// (phi phi^T) kron H_z, acting on column-stacked vec(dW).
inline RMat dense_kronecker_hessian(const RVec& p, const RVec& phi) {
  const std::size_t v = p.size();
  const std::size_t d = phi.size();
  if (v * d > kKroneckerCap) throw InvalidInput("dense_kronecker_hessian: V*d exceeds 4096");
  const RMat h = logit_hessian(p);
  RMat out(static_cast<Eigen::Index>(v * d), static_cast<Eigen::Index>(v * d));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      out.block(Eigen::Index(a * v), Eigen::Index(b * v), Eigen::Index(v), Eigen::Index(v)) = phi[a] * phi[b] * h;
  return out;
}

inline RVec matvec(const RMat& m, const RVec& x) {
  RVec out(static_cast<std::size_t>(m.rows()), 0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    RVec terms(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) terms[c] = m(r, Eigen::Index(c)) * x[c];
    out[std::size_t(r)] = kahan_sum(terms);
  }
  return out;
}

/// Singular values below `threshold` count as zero.
inline Eigen::Index numerical_rank(const RMat& m, Real threshold) {
  Eigen::JacobiSVD<RMat> svd(m);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > threshold) ++rank;
  return rank;
}

inline Real spectral_norm(const RMat& m) {
  Eigen::JacobiSVD<RMat> svd(m);
  return svd.singularValues().size() ? svd.singularValues()[0] : Real(0);
}

// ---------------------------------------------------------------------------
// Reference update steps (THEORY frame: objective -log p_y)

inline RVec residual(const RVec& z, std::size_t y) {
  RVec g = softmax(z);
  g[y] -= 1;
  return g;
}

/// Gradient of -log p_y(W phi) in W, column-major.
inline RVec ce_parameter_gradient(const RVec& w_flat, const RVec& phi, std::size_t classes, std::size_t y) {
  const RVec g = residual(logits(w_flat, phi, classes), y);
  RVec out(w_flat.size());
  for (std::size_t c = 0; c < phi.size(); ++c)
    for (std::size_t r = 0; r < classes; ++r) out[c * classes + r] = g[r] * phi[c];
  return out;
}

inline Real norm(const RVec& v) {
  RVec sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
  return std::sqrt(kahan_sum(sq));
}

/// Two-pass SAM with an arbitrary parameter gradient; rho = 0 gives GD.
inline RVec two_pass_step(const RVec& w_flat, Real eta, Real rho, const std::function<RVec(const RVec&)>& grad) {
  const RVec g0 = grad(w_flat);
  const Real n = norm(g0);
  RVec perturbed = w_flat;
  if (n > 0 && rho != 0) {
    for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed[i] += rho * g0[i] / n;
  }
  const RVec g1 = grad(perturbed);
  RVec out = w_flat;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta * g1[i];
  return out;
}

inline RVec ce_two_pass_step(const RVec& w_flat, const RVec& phi, std::size_t classes, std::size_t y, Real eta,
                             Real rho) {
  return two_pass_step(w_flat, eta, rho,
                       [&](const RVec& w) { return ce_parameter_gradient(w, phi, classes, y); });
}

// ---------------------------------------------------------------------------
// Confidence ratios

/// Direct alpha_i recomputed from raw logits before and after a step,
/// compared against a factorized reconstruction supplied by the caller.
/// eta and rho are in the THEORY frame; rho = 0 means GD.
inline OracleReport exhaustive_ratio_check(const RVec& w_flat, const RVec& phi, std::size_t classes, std::size_t y,
                                           Real eta, Real rho, const std::vector<double>& factorized_alpha,
                                           double tolerance) {
  const RVec z0 = logits(w_flat, phi, classes);
  const RVec z1 = logits(ce_two_pass_step(w_flat, phi, classes, y, eta, rho), phi, classes);
  const RVec p0 = softmax(z0);
  const RVec p1 = softmax(z1);
  std::vector<double> direct(classes);
  for (std::size_t i = 0; i < classes; ++i) direct[i] = double(p1[i] / p0[i]);
  return compare("confidence_ratio_factorization", factorized_alpha, direct, tolerance, TolerancePolicy::kRelative);
}

}  // namespace logitdyn::oracle

#endif  // LOGITDYN_ORACLE_HPP
