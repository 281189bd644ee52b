#ifndef LOGITDYN_VERIFY_HPP
#define LOGITDYN_VERIFY_HPP

// Invariant and oracle batteries behind `verify --suite`. Each battery draws
// its states from the verify stream of a fixed seed and reports the worst
// case per quantity against a pinned tolerance.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logitdyn/dynamics.hpp"
#include "logitdyn/geometry.hpp"
#include "logitdyn/objectives.hpp"
#include "logitdyn/oracle.hpp"
#include "logitdyn/rng.hpp"

namespace logitdyn::verify {

using oracle::OracleReport;
using oracle::Real;
using oracle::RVec;

inline constexpr std::uint64_t kVerifySeed = 0x5eed'0001;

struct FaultInjection {
  bool hessian_sign = false;  // main path sees -H_z
};

namespace tol {
inline constexpr double kExactIdentity = 1e-10;
inline constexpr double kGradientFd = 1e-6;
inline constexpr double kHessianFd = 1e-5;
inline constexpr double kRatioLo = 3.0;
inline constexpr double kRatioHi = 5.0;
inline constexpr double kSignEquivalence = 1e-12;
inline constexpr double kStructural = 1e-15;
inline constexpr double kZetaSlack = 1e-12;
inline constexpr double kFactorGd = 1e-12;
inline constexpr double kFactorSam = 1e-9;
}  // namespace tol

/// Worst-case accumulator for one named quantity. NaN is sticky.
class Worst {
 public:
  Worst(std::string quantity, double tolerance) : quantity_(std::move(quantity)), tolerance_(tolerance) {}

  void add(double err) {
    ++cases_;
    if (std::isnan(err)) nan_ = true;
    else if (err > worst_) worst_ = err;
  }

  OracleReport report() const {
    return oracle::bound_report(quantity_, nan_ ? std::numeric_limits<double>::quiet_NaN() : worst_, tolerance_,
                                "worst case over " + std::to_string(cases_) + " cases");
  }

 private:
  std::string quantity_;
  double tolerance_;
  double worst_ = 0.0;
  bool nan_ = false;
  int cases_ = 0;
};

/// Counter of trials violating a property; passes only at zero.
class Violations {
 public:
  explicit Violations(std::string quantity) : quantity_(std::move(quantity)) {}
  void add(bool ok) {
    ++trials_;
    if (!ok) ++bad_;
  }
  int trials() const { return trials_; }
  OracleReport report() const {
    return oracle::bound_report(quantity_, bad_, 0.0,
                                std::to_string(bad_) + " violations in " + std::to_string(trials_) + " trials");
  }

 private:
  std::string quantity_;
  int trials_ = 0;
  int bad_ = 0;
};

namespace detail {

inline Vector normal_vector(CounterRng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline Matrix normal_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  return m;
}

template <typename T, std::size_t N>
T pick(CounterRng& rng, const T (&xs)[N]) {
  return xs[rng.below(N)];
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// Logits-level state with W = z phi^T / mu, so the logits are exactly
/// controlled while W stays the min-norm preimage.
struct LogitState {
  ParameterMatrix w;
  FeatureVector phi;
  OneHotLabel y;
};

inline LogitState logit_state(CounterRng& rng, Eigen::Index v, double logit_scale, double mu_lo, double mu_hi) {
  const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
  Vector phi = normal_vector(rng, d);
  while (phi.norm() == 0.0) phi = normal_vector(rng, d);
  const double mu = rng.uniform(mu_lo, mu_hi);
  phi *= std::sqrt(mu) / phi.norm();
  const FeatureVector f(phi);
  const Vector z = normal_vector(rng, v, logit_scale);
  const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
  return {min_norm_preimage(z, f), f, y};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Geometry

/// Pullback identity, Kronecker rank, kernel, norm bound and Hg closed form on
/// `cases` states with V in {2,3,5} and d in {1,2,5}.
inline std::vector<OracleReport> geometry_identities(int cases, const FaultInjection& fault = {}) {
  CounterRng rng(kVerifySeed, Stream::kVerifyStates);
  Worst pullback("pullback_identity", tol::kExactIdentity);
  Worst rank("kronecker_rank", 0.0);
  Worst kernel("hessian_kernel", tol::kExactIdentity);
  Violations positive("hessian_positive_on_complement");
  Worst norm("hessian_norm_excess", tol::kExactIdentity);
  Worst closed("hessian_residual_closed_form", tol::kExactIdentity);
  const Eigen::Index vs[] = {2, 3, 5};
  const Eigen::Index ds[] = {1, 2, 5};
  for (int c = 0; c < cases; ++c) {
    const Eigen::Index v = detail::pick(rng, vs);
    const Eigen::Index d = detail::pick(rng, ds);
    const ParameterMatrix w = detail::normal_matrix(rng, v, d);
    Vector phi_raw = detail::normal_vector(rng, d);
    const FeatureVector phi(phi_raw);
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    const ProbVector p = softmax(w * phi.phi());
    LogitHessian h = logit_hessian(p);
    if (fault.hessian_sign) h = -h;

    // <dW, H_W dW'>_F against the long-double H_z[dW phi, dW' phi].
    const Matrix dw = detail::normal_matrix(rng, v, d);
    const Matrix dw2 = detail::normal_matrix(rng, v, d);
    const double lhs = (dw.array() * apply_parameter_hessian(h, dw2, phi).array()).sum();
    const RVec p_ref = oracle::softmax(oracle::logits(oracle::to_real(w), oracle::to_real(phi.phi()), std::size_t(v)));
    const RVec a = oracle::to_real(Vector(dw * phi.phi()));
    const RVec b = oracle::to_real(Vector(dw2 * phi.phi()));
    const RVec hb = oracle::matvec(oracle::logit_hessian(p_ref), b);
    Real rhs = 0;
    for (std::size_t i = 0; i < a.size(); ++i) rhs += a[i] * hb[i];
    pullback.add(std::abs(double(Real(lhs) - rhs)));

    // Dense operator assembled column by column from the main action.
    oracle::RMat dense(v * d, v * d);
    for (Eigen::Index k = 0; k < v * d; ++k) {
      Matrix e = Matrix::Zero(v, d);
      e(k % v, k / v) = 1.0;
      const Matrix col = apply_parameter_hessian(h, e, phi);
      for (Eigen::Index i = 0; i < v * d; ++i) dense(i, k) = col(i % v, i / v);
    }
    const Real top = oracle::spectral_norm(dense);
    const Eigen::Index r = oracle::numerical_rank(dense, Real(1e-10) * std::max(Real(1), top));
    rank.add(std::abs(double(r - (v - 1))));

    kernel.add((h * Vector::Ones(v)).cwiseAbs().maxCoeff());
    if (p.minCoeff() >= 1e-3) {
      Vector u = detail::normal_vector(rng, v);
      u.array() -= u.mean();
      if (u.norm() > 0) {
        u /= u.norm();
        positive.add(u.dot(h * u) > 0.0);
      }
    }
    norm.add(std::max(0.0, double(oracle::spectral_norm(h.cast<Real>())) - 0.5));

    const Vector closed_form = hessian_residual_product(p, y);
    RVec g_ref = p_ref;
    g_ref[std::size_t(y.index)] -= 1;
    const RVec hg_ref = oracle::matvec(oracle::logit_hessian(p_ref), g_ref);
    double err = 0.0;
    for (Eigen::Index i = 0; i < v; ++i) err = std::max(err, std::abs(double(Real(closed_form[i]) - hg_ref[i])));
    closed.add(err);
  }
  return {pullback.report(), rank.report(), kernel.report(), positive.report(), norm.report(), closed.report()};
}

/// Logit gradient, logit Hessian and DPO parameter gradient against central
/// differences of independent long-double losses.
inline std::vector<OracleReport> derivative_oracles(int cases, const FaultInjection& fault = {}) {
  CounterRng rng(kVerifySeed + 1, Stream::kVerifyStates);
  Worst grad("logit_gradient_fd", tol::kGradientFd);
  Worst hess("logit_hessian_fd", tol::kHessianFd);
  Worst dpo("dpo_gradient_fd", tol::kGradientFd);
  for (int c = 0; c < cases; ++c) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(5));
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Vector z = detail::normal_vector(rng, v, 1.5);
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    const ProbVector p = softmax(z);
    const RVec zr = oracle::to_real(z);
    const auto yi = static_cast<std::size_t>(y.index);

    const auto fd_g = oracle::fd_gradient_checked([&](const RVec& x) { return oracle::cross_entropy(x, yi); }, zr,
                                                  tol::kGradientFd);
    grad.add(double(oracle::rel_gap(oracle::to_real(logit_gradient(p, y)), fd_g.value)));

    LogitHessian h = logit_hessian(p);
    if (fault.hessian_sign) h = -h;
    const oracle::RMat jac = oracle::fd_jacobian([&](const RVec& x) { return oracle::residual(x, yi); }, zr, 1e-5L);
    const oracle::RMat jac_coarse =
        oracle::fd_jacobian([&](const RVec& x) { return oracle::residual(x, yi); }, zr, 1e-4L);
    if ((jac - jac_coarse).norm() > 10 * Real(tol::kHessianFd) * jac.norm()) {
      throw OracleFailure("logit Hessian FD estimates disagree across step sizes");
    }
    hess.add(double((h.cast<Real>() - jac).norm() / jac.norm()));

    const PreferencePair pair(FeatureVector(detail::normal_vector(rng, d)), y,
                              OneHotLabel((y.index + 1 + static_cast<Eigen::Index>(rng.below(std::uint64_t(v - 1)))) % v, v),
                              detail::normal_vector(rng, v, 0.5));
    const ParameterMatrix w = detail::normal_matrix(rng, v, d, 0.5);
    const double beta = rng.uniform(0.05, 1.0);
    const RVec phi = oracle::to_real(pair.phi.phi());
    const RVec ref = oracle::to_real(pair.ref_logits);
    const auto fd_dpo = oracle::fd_gradient_checked(
        [&](const RVec& x) {
          return oracle::dpo_loss(x, phi, ref, std::size_t(pair.y_plus.index), std::size_t(pair.y_minus.index), beta);
        },
        oracle::to_real(w), tol::kGradientFd);
    dpo.add(double(oracle::rel_gap(oracle::to_real(dpo_parameter_gradient(w, pair, DPOConfig{beta})), fd_dpo.value)));
  }
  return {grad.report(), hess.report(), dpo.report()};
}

inline std::vector<OracleReport> operator_bounds(int cases) {
  CounterRng rng(kVerifySeed + 2, Stream::kVerifyStates);
  Worst h_norm("hessian_norm_bound_excess", tol::kExactIdentity);
  Worst g_norm("residual_norm_bound_excess", tol::kExactIdentity);
  for (int c = 0; c < cases; ++c) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(6));
    const ProbVector p = softmax(detail::normal_vector(rng, v, rng.uniform(0.1, 8.0)));
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    h_norm.add(std::max(0.0, double(oracle::spectral_norm(logit_hessian(p).cast<Real>())) - 0.5));
    g_norm.add(std::max(0.0, logit_gradient(p, y).norm() - std::sqrt(2.0)));
  }
  return {h_norm.report(), g_norm.report()};
}

// ---------------------------------------------------------------------------
// Dynamics

inline const std::vector<double>& remainder_eta_grid() {
  static const std::vector<double> grid{4e-3, 2e-3, 1e-3, 5e-4};
  return grid;
}

/// Consecutive prediction-error ratios over the eta grid for W, z, g and each
/// frozen-basis mode, rho = 0.1 sqrt(eta), on `seeds` interior states.
inline std::vector<OracleReport> remainder_scaling(int seeds, double kappa = 0.1) {
  CounterRng rng(kVerifySeed + 3, Stream::kVerifyStates);
  const auto& etas = remainder_eta_grid();
  Violations w_ok("remainder_ratio_w"), z_ok("remainder_ratio_z"), g_ok("remainder_ratio_g"),
      mode_ok("remainder_ratio_modes");
  auto in_band = [](const std::vector<double>& errs) {
    for (double r : consecutive_ratios(errs))
      if (!(r >= tol::kRatioLo && r <= tol::kRatioHi)) return false;
    return true;
  };
  int used = 0;
  while (used < seeds) {
    const auto v = 3 + static_cast<Eigen::Index>(rng.below(3));
    const auto d = 2 + static_cast<Eigen::Index>(rng.below(4));
    const ParameterMatrix w = detail::normal_matrix(rng, v, d, 0.5);
    const FeatureVector phi(detail::normal_vector(rng, d));
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    const ProbVector p = softmax(w * phi.phi());
    if (p.minCoeff() < 0.01) continue;
    ++used;
    const ModalBasis basis = spectral_decompose(logit_hessian(p));
    const Vector e = modal_coefficients(basis, logit_gradient(p, y));
    std::vector<double> ew, ez, eg;
    std::vector<std::vector<double>> em(static_cast<std::size_t>(basis.modes()));
    for (double eta : etas) {
      const auto cfg = UpdateConfig::kappa_scaled(Optimizer::kSamFull, eta, kappa, 1.0);
      const ParameterMatrix next = sam_full_step(w, phi, y, cfg);
      const Vector z_next = next * phi.phi();
      const Residual g_next = logit_gradient(softmax(z_next), y);
      const DynamicsPrediction pred = predict_step(w, phi, y, cfg);
      ew.push_back((next - pred.w_pred).norm());
      ez.push_back((z_next - pred.z_pred).norm());
      eg.push_back((g_next - pred.g_pred).norm());
      const Vector e_pred = modal_step_predict(basis, e, cfg, phi.mu());
      const Vector e_next = modal_coefficients(basis, g_next);
      for (Eigen::Index k = 0; k < basis.modes(); ++k) em[std::size_t(k)].push_back(std::abs(e_next[k] - e_pred[k]));
    }
    w_ok.add(in_band(ew));
    z_ok.add(in_band(ez));
    g_ok.add(in_band(eg));
    bool modes = true;
    for (const auto& m : em) modes = modes && in_band(m);
    mode_ok.add(modes);
  }
  return {w_ok.report(), z_ok.report(), g_ok.report(), mode_ok.report()};
}

/// With rho~ = 0 and eta mu lambda_k = 1 in floating point, the predicted
/// mode is exactly zero.
inline std::vector<OracleReport> modal_annihilation(int cases) {
  CounterRng rng(kVerifySeed + 4, Stream::kVerifyStates);
  Worst zero("modal_annihilation", 0.0);
  for (int c = 0; c < cases; ++c) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(4));
    const ProbVector p = softmax(detail::normal_vector(rng, v));
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    const ModalBasis basis = spectral_decompose(logit_hessian(p));
    const Vector e = modal_coefficients(basis, logit_gradient(p, y));
    const double mu = rng.uniform(0.5, 2.0);
    for (Eigen::Index k = 0; k < basis.modes(); ++k) {
      const double lam = basis.eigenvalues[k];
      // Step eta through neighbouring doubles until (eta * mu) * lam rounds to 1.
      double eta = 1.0 / (mu * lam);
      for (int nudge = 0; nudge < 64 && (eta * mu) * lam != 1.0; ++nudge) {
        eta = (eta * mu) * lam > 1.0 ? std::nextafter(eta, 0.0) : std::nextafter(eta, 2 * eta);
      }
      if ((eta * mu) * lam != 1.0) continue;
      UpdateConfig gd;
      gd.eta = eta;
      zero.add(std::abs(modal_step_predict(basis, e, gd, mu)[k]));
    }
  }
  return {zero.report()};
}

// ---------------------------------------------------------------------------
// Confidence ratios

/// GD at negative rate: alpha_{y*} > 1 and alpha_y < 1.
inline std::vector<OracleReport> negative_rate_gd_ratios(int trials) {
  CounterRng rng(kVerifySeed + 5, Stream::kVerifyStates);
  Violations rises("gd_competitor_rises");
  Violations falls("gd_label_falls");
  while (rises.trials() < trials) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(5));
    const auto s = detail::logit_state(rng, v, 2.0, 0.25, 4.0);
    UpdateConfig gd;
    gd.eta = -rng.uniform(1e-3, 1.0);
    const ProbVector before = softmax(s.w * s.phi.phi());
    const ProbVector after = softmax(gd_step(s.w, s.phi, s.y, gd) * s.phi.phi());
    const auto r = confidence_ratios(before, after, s.y);
    if (!r.ratios_valid) continue;
    rises.add(r.alpha[r.y_star] > 1.0);
    falls.add(r.alpha[s.y.index] < 1.0);
  }
  return {rises.report(), falls.report()};
}

/// Negative-rate SAM with rho = -0.1 sqrt(|eta|) against GD from the same
/// state: competitor dampened, label protected where the top-2 window is
/// feasible, and |zeta| <= 6 tau.
inline std::vector<OracleReport> negative_rate_sam_ratios(int trials) {
  CounterRng rng(kVerifySeed + 6, Stream::kVerifyStates);
  Violations competitor("sam_competitor_dampened");
  Violations label("sam_label_protected_when_feasible");
  Violations zeta("top2_zeta_bound");
  int feasible = 0;
  while (competitor.trials() < trials) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(5));
    const auto s = detail::logit_state(rng, v, 2.0, 0.25, 4.0);
    const double eta = -std::pow(10.0, rng.uniform(-5.0, -3.0));
    UpdateConfig gd;
    gd.eta = eta;
    const auto sam = UpdateConfig::kappa_scaled(Optimizer::kSamFull, eta, 0.1, -1.0);
    const ProbVector before = softmax(s.w * s.phi.phi());
    const auto r_gd = confidence_ratios(before, softmax(gd_step(s.w, s.phi, s.y, gd) * s.phi.phi()), s.y);
    const auto r_sam = confidence_ratios(before, softmax(sam_full_step(s.w, s.phi, s.y, sam) * s.phi.phi()), s.y);
    if (!r_gd.ratios_valid || !r_sam.ratios_valid) continue;
    const Top2Diagnostics t2 = top2_diagnostics(before, s.y);
    competitor.add(r_sam.alpha[r_gd.y_star] <= r_gd.alpha[r_gd.y_star]);
    if (t2.feasible) {
      ++feasible;
      label.add(r_sam.alpha[s.y.index] >= r_gd.alpha[s.y.index]);
    }
    zeta.add(std::abs(t2.zeta) <= 6.0 * t2.tau + tol::kZetaSlack);
  }
  auto label_report = label.report();
  label_report.note += " (feasible subset of " + std::to_string(trials) + ")";
  return {competitor.report(), label_report, zeta.report()};
}

/// Factorized alpha against a direct long-double recomputation.
inline std::vector<OracleReport> ratio_factorization_checks(int cases) {
  CounterRng rng(kVerifySeed + 7, Stream::kVerifyStates);
  Violations gd_ok("ratio_factorization_gd"), sam_ok("ratio_factorization_sam");
  for (int c = 0; c < cases; ++c) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(5));
    const auto s = detail::logit_state(rng, v, 1.5, 0.25, 4.0);
    const double eta = -rng.uniform(1e-4, 0.1);
    for (bool use_sam : {false, true}) {
      UpdateConfig cfg;
      cfg.eta = eta;
      if (use_sam) cfg = UpdateConfig::kappa_scaled(Optimizer::kSamFull, eta, 0.1, -1.0);
      std::vector<double> alpha;
      for (Eigen::Index i = 0; i < v; ++i) alpha.push_back(ratio_factorization(s.w, s.phi, s.y, cfg, i).alpha_reconstructed);
      const auto rep = oracle::exhaustive_ratio_check(oracle::to_real(s.w), oracle::to_real(s.phi.phi()),
                                                      std::size_t(v), std::size_t(s.y.index), cfg.eta,
                                                      cfg.active_rho(), alpha, use_sam ? tol::kFactorSam : tol::kFactorGd);
      (use_sam ? sam_ok : gd_ok).add(rep.pass);
    }
  }
  return {gd_ok.report(), sam_ok.report()};
}

// ---------------------------------------------------------------------------
// Equivalences

/// THEORY (eta, rho) against PRACTICE (-eta, -rho): GD bit-for-bit, SAM and
/// logits-SAM within 1e-12.
inline std::vector<OracleReport> sign_convention_equivalence(int cases) {
  CounterRng rng(kVerifySeed + 8, Stream::kVerifyStates);
  Worst gd_bits("practice_theory_gd_bitwise", 0.0);
  Worst sam("practice_theory_sam", tol::kSignEquivalence);
  Worst lsam("practice_theory_logits_sam", tol::kSignEquivalence);
  for (int c = 0; c < cases; ++c) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(5));
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(6));
    const ParameterMatrix w = detail::normal_matrix(rng, v, d);
    const FeatureVector phi(detail::normal_vector(rng, d));
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    const double eta = -rng.uniform(1e-3, 1.0);
    UpdateConfig gd;
    gd.eta = eta;
    gd_bits.add(detail::max_abs(gd_step(w, phi, y, gd) - gd_step(w, phi, y, gd.to_practice())));
    const auto s = UpdateConfig::kappa_scaled(Optimizer::kSamFull, eta, 0.1, -1.0);
    sam.add(detail::max_abs(sam_full_step(w, phi, y, s) - sam_full_step(w, phi, y, s.to_practice())));
    auto ls = s;
    ls.optimizer = Optimizer::kLogitsSam;
    lsam.add(detail::max_abs(logits_sam_step(w, phi, y, ls) - logits_sam_step(w, phi, y, ls.to_practice())));
  }
  return {gd_bits.report(), sam.report(), lsam.report()};
}

/// logits_sam_step against sam_full_step with fixed features.
inline std::vector<OracleReport> structural_identity(int cases) {
  CounterRng rng(kVerifySeed + 9, Stream::kVerifyStates);
  Worst diff("logits_sam_equals_sam_full", tol::kStructural);
  for (int c = 0; c < cases; ++c) {
    const auto v = 2 + static_cast<Eigen::Index>(rng.below(5));
    const auto d = 1 + static_cast<Eigen::Index>(rng.below(6));
    const ParameterMatrix w = detail::normal_matrix(rng, v, d);
    const FeatureVector phi(detail::normal_vector(rng, d));
    const OneHotLabel y(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v))), v);
    UpdateConfig cfg;
    cfg.eta = rng.uniform(-1.0, 1.0);
    cfg.rho = rng.uniform(-0.5, 0.5);
    cfg.sign_convention = rng.below(2) ? SignConvention::kPractice : SignConvention::kTheory;
    cfg.optimizer = Optimizer::kLogitsSam;
    auto full = cfg;
    full.optimizer = Optimizer::kSamFull;
    diff.add(detail::max_abs(logits_sam_step(w, phi, y, cfg) - sam_full_step(w, phi, y, full)));
  }
  return {diff.report()};
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteResult {
  std::string suite;
  std::vector<OracleReport> reports;
  double seconds = 0.0;

  bool pass() const {
    for (const auto& r : reports)
      if (!r.pass) return false;
    return !reports.empty();
  }

  std::vector<std::string> failing() const {
    std::vector<std::string> out;
    for (const auto& r : reports)
      if (!r.pass) out.push_back(r.quantity);
    return out;
  }
};

inline nlohmann::json to_json(const SuiteResult& s) {
  return {{"suite", s.suite},
          {"pass", s.pass()},
          {"failing", s.failing()},
          {"seconds", s.seconds},
          {"reports", s.reports}};
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"geometry", "dynamics", "ratios", "equivalence", "all"};
  return names;
}

inline SuiteResult run_suite(const std::string& name, const FaultInjection& fault = {}) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  SuiteResult out;
  out.suite = name;
  auto append = [&](std::vector<OracleReport> rs) {
    for (auto& r : rs) out.reports.push_back(std::move(r));
  };
  const bool all = name == "all";
  bool known = all;
  if (all || name == "geometry") {
    known = true;
    append(geometry_identities(500, fault));
    append(derivative_oracles(200, fault));
    append(operator_bounds(500));
  }
  if (all || name == "dynamics") {
    known = true;
    append(remainder_scaling(20));
    append(modal_annihilation(100));
  }
  if (all || name == "ratios") {
    known = true;
    append(negative_rate_gd_ratios(1000));
    append(negative_rate_sam_ratios(1000));
    append(ratio_factorization_checks(100));
  }
  if (all || name == "equivalence") {
    known = true;
    append(sign_convention_equivalence(100));
    append(structural_identity(100));
  }
  require(known, "unknown verify suite '" + name + "'");
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

}  // namespace logitdyn::verify

#endif  // LOGITDYN_VERIFY_HPP
