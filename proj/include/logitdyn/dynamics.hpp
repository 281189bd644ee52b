#ifndef LOGITDYN_DYNAMICS_HPP
#define LOGITDYN_DYNAMICS_HPP

// One-step update rules (GD, two-pass SAM, logits-SAM), their first-order
// forecasts, modal recursion in the eigenbasis of H_z, and the one-step
// confidence-ratio diagnostics.
//
// Sign conventions: a THEORY config descends on -log p_y with whatever sign
// eta and rho carry. A PRACTICE config descends on +log p_y; it is mapped to
// the THEORY config (-eta, -rho) by to_theory() and produces the same
// iterates. All forecasts are computed in the THEORY frame.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logitdyn/core.hpp"
#include "logitdyn/geometry.hpp"
#include "logitdyn/objectives.hpp"

namespace logitdyn {

enum class Optimizer { kGD, kSamFull, kLogitsSam };

inline std::string_view to_string(Optimizer o) {
  switch (o) {
    case Optimizer::kGD: return "GD";
    case Optimizer::kSamFull: return "SAM_FULL";
    case Optimizer::kLogitsSam: return "LOGITS_SAM";
  }
  return "?";
}

struct UpdateConfig {
  double eta = 0.0;
  double rho = 0.0;
  double kappa = 0.0;
  Optimizer optimizer = Optimizer::kGD;
  SignConvention sign_convention = SignConvention::kTheory;

  /// rho = sign * kappa * sqrt(|eta|).
  static UpdateConfig kappa_scaled(Optimizer opt, double eta, double kappa, double sign,
                                   SignConvention conv = SignConvention::kTheory) {
    UpdateConfig c;
    c.optimizer = opt;
    c.eta = eta;
    c.kappa = kappa;
    c.rho = (sign < 0 ? -1.0 : 1.0) * kappa * std::sqrt(std::abs(eta));
    c.sign_convention = conv;
    return c;
  }

  bool uses_sam() const { return optimizer != Optimizer::kGD; }

  /// Radius that actually enters the update; zero for GD.
  double active_rho() const { return uses_sam() ? rho : 0.0; }

  void validate() const {
    require(std::isfinite(eta) && std::isfinite(rho), "update config: eta and rho must be finite");
    require(std::abs(eta) > 0.0 && std::abs(eta) <= 1.0, "update config: |eta| must lie in (0, 1]");
    require(kappa >= 0.0, "update config: kappa must be nonnegative");
    if (kappa > 0.0) {
      require(std::abs(std::abs(rho) - kappa * std::sqrt(std::abs(eta))) <= 1e-12,
              "update config: |rho| must equal kappa*sqrt(|eta|) when kappa scaling is active");
    }
  }

  UpdateConfig to_theory() const {
    if (sign_convention == SignConvention::kTheory) return *this;
    UpdateConfig c = *this;
    c.eta = -eta;
    c.rho = -rho;
    c.sign_convention = SignConvention::kTheory;
    return c;
  }

  UpdateConfig to_practice() const {
    if (sign_convention == SignConvention::kPractice) return *this;
    UpdateConfig c = *this;
    c.eta = -eta;
    c.rho = -rho;
    c.sign_convention = SignConvention::kPractice;
    return c;
  }
};

namespace detail {

inline void check_example(const ParameterMatrix& w, const FeatureVector& phi, const OneHotLabel& y) {
  require(w.rows() == y.classes, "W row count must equal the number of classes");
  require(w.cols() == phi.dim(), "W column count must equal the feature dimension");
}

inline ParameterMatrix objective_gradient(const ParameterMatrix& w, const FeatureVector& phi,
                                          const OneHotLabel& y, ObjectiveSign sign) {
  return parameter_gradient(signed_logit_gradient(w * phi.phi(), y, sign), phi);
}

}  // namespace detail

/// W - eta * grad F(W).
inline ParameterMatrix gd_step(const ParameterMatrix& w, const FeatureVector& phi, const OneHotLabel& y,
                               const UpdateConfig& cfg) {
  detail::check_example(w, phi, y);
  const ParameterMatrix grad = detail::objective_gradient(w, phi, y, objective_for(cfg.sign_convention));
  return w - cfg.eta * grad;
}

/// Standard SAM: ascend to W + rho grad/|grad|, then descend from W using
/// the gradient evaluated there. A zero gradient gives a zero perturbation.
inline ParameterMatrix sam_full_step(const ParameterMatrix& w, const FeatureVector& phi,
                                     const OneHotLabel& y, const UpdateConfig& cfg) {
  detail::check_example(w, phi, y);
  const ObjectiveSign sign = objective_for(cfg.sign_convention);
  const ParameterMatrix grad = detail::objective_gradient(w, phi, y, sign);
  const double norm = grad.norm();
  ParameterMatrix perturbed = w;
  if (norm > 0.0) perturbed += (cfg.rho / norm) * grad;
  const ParameterMatrix grad_adv = detail::objective_gradient(perturbed, phi, y, sign);
  return w - cfg.eta * grad_adv;
}

/// Logits-SAM for one training step: only the output layer W_out is
/// perturbed, and logits are recomputed from cached penultimate activations.
/// With fixed features the hidden state is phi and W_out is the whole model.
inline ParameterMatrix logits_sam_step(const ParameterMatrix& w_out, const FeatureVector& hidden,
                                       const OneHotLabel& y, const UpdateConfig& cfg) {
  detail::check_example(w_out, hidden, y);
  const ObjectiveSign sign = objective_for(cfg.sign_convention);
  // forward + backward on the unperturbed head
  const LogitVector logits_pre = w_out * hidden.phi();
  const ParameterMatrix g = parameter_gradient(signed_logit_gradient(logits_pre, y, sign), hidden);
  const double norm = g.norm();
  ParameterMatrix w_perturbed = w_out;
  if (norm > 0.0) w_perturbed += (cfg.rho / norm) * g;
  // perturbed forward reusing the cached hidden states
  const LogitVector logits_post = w_perturbed * hidden.phi();
  const ParameterMatrix g_post = parameter_gradient(signed_logit_gradient(logits_post, y, sign), hidden);
  return w_out - cfg.eta * g_post;
}

/// Logits-SAM on the DPO objective of a preference pair.
inline ParameterMatrix logits_sam_step(const ParameterMatrix& w_out, const PreferencePair& pair,
                                       const DPOConfig& dpo, const UpdateConfig& cfg) {
  check_pair_dims(w_out, pair);
  const ParameterMatrix g = dpo_parameter_gradient(w_out, pair, dpo);
  const double norm = g.norm();
  ParameterMatrix w_perturbed = w_out;
  if (norm > 0.0) w_perturbed += (cfg.rho / norm) * g;
  const ParameterMatrix g_post = dpo_parameter_gradient(w_perturbed, pair, dpo);
  return w_out - cfg.eta * g_post;
}

inline ParameterMatrix apply_update(const ParameterMatrix& w, const FeatureVector& phi, const OneHotLabel& y,
                                    const UpdateConfig& cfg) {
  switch (cfg.optimizer) {
    case Optimizer::kGD: return gd_step(w, phi, y, cfg);
    case Optimizer::kSamFull: return sam_full_step(w, phi, y, cfg);
    case Optimizer::kLogitsSam: return logits_sam_step(w, phi, y, cfg);
  }
  throw InvalidInput("unknown optimizer");
}

// ---------------------------------------------------------------------------
// First-order forecasts

/// rho * sqrt(mu) / |g|, or 0 when g vanishes.
inline double equivalent_rho(double rho, double mu, double residual_norm) {
  return residual_norm > 0.0 ? rho * std::sqrt(mu) / residual_norm : 0.0;
}

struct DynamicsPrediction {
  ParameterMatrix w_pred;
  LogitVector z_pred;
  Residual g_pred;
  double rho_tilde = 0.0;
  double remainder_budget = std::numeric_limits<double>::quiet_NaN();
};

/// First-order forecast of (W, z, g) after one step:
///   W' = W - eta (g + rt H g) phi^T
///   z' = z - eta mu (g + rt H g)
///   g' = (I - eta mu H - eta mu rt H^2) g
/// The budget is C eta^2 when a fitted constant C is supplied.
inline DynamicsPrediction predict_step(const ParameterMatrix& w, const FeatureVector& phi, const OneHotLabel& y,
                                       const UpdateConfig& cfg,
                                       std::optional<double> remainder_constant = std::nullopt) {
  detail::check_example(w, phi, y);
  const UpdateConfig th = cfg.to_theory();
  const double mu = phi.mu();
  const LogitVector z = w * phi.phi();
  const ProbVector p = softmax(z);
  const Residual g = logit_gradient(p, y);
  const LogitHessian h = logit_hessian(p);
  const Vector hg = h * g;

  DynamicsPrediction out;
  out.rho_tilde = equivalent_rho(th.active_rho(), mu, g.norm());
  const Vector drive = g + out.rho_tilde * hg;
  out.w_pred = w - th.eta * parameter_gradient(drive, phi);
  out.z_pred = z - th.eta * mu * drive;
  out.g_pred = g - th.eta * mu * hg - th.eta * mu * out.rho_tilde * (h * hg);
  if (remainder_constant) out.remainder_budget = *remainder_constant * th.eta * th.eta;
  return out;
}

/// e_k' = (1 - eta mu [lambda_k + rt lambda_k^2]) e_k, remainder excluded.
/// |g| is recovered from the coefficients, so rt needs no extra input.
inline Vector modal_step_predict(const ModalBasis& basis, const Vector& e, const UpdateConfig& cfg, double mu) {
  require(e.size() == basis.modes(), "modal_step_predict: coefficient count must equal V-1");
  const UpdateConfig th = cfg.to_theory();
  const double rt = equivalent_rho(th.active_rho(), mu, e.norm());
  Vector out(e.size());
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    const double lam = basis.eigenvalues[k];
    out[k] = (1.0 - th.eta * mu * (lam + rt * lam * lam)) * e[k];
  }
  return out;
}

/// Least-squares C in err ~ C eta^2 (through the origin).
inline double fit_remainder_constant(const std::vector<double>& etas, const std::vector<double>& errors) {
  require(etas.size() == errors.size() && !etas.empty(), "fit_remainder_constant: mismatched inputs");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const double e2 = etas[i] * etas[i];
    num += errors[i] * e2;
    den += e2 * e2;
  }
  return num / den;
}

/// errors[i] / errors[i+1] for a decreasing eta grid.
inline std::vector<double> consecutive_ratios(const std::vector<double>& errors) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) out.push_back(errors[i] / errors[i + 1]);
  return out;
}

// ---------------------------------------------------------------------------
// Confidence ratios

inline Eigen::Index most_confident_incorrect(const ProbVector& p, Eigen::Index y) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (j == y) continue;
    if (best < 0 || p[j] > p[best]) best = j;
  }
  return best;
}

struct ConfidenceRatios {
  Vector alpha;
  Eigen::Index y_star = 0;
  bool ratios_valid = true;
};

inline constexpr double kRatioFloor = 1e-300;

/// alpha_i = p_after_i / p_before_i; y* from p_before.
inline ConfidenceRatios confidence_ratios(const ProbVector& before, const ProbVector& after, const OneHotLabel& y) {
  require(before.size() == y.classes && after.size() == y.classes, "confidence_ratios: size mismatch");
  ConfidenceRatios out;
  out.alpha.resize(before.size());
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    if (before[i] < kRatioFloor) {
      out.alpha[i] = std::numeric_limits<double>::quiet_NaN();
      out.ratios_valid = false;
    } else {
      out.alpha[i] = after[i] / before[i];
    }
  }
  out.y_star = most_confident_incorrect(before, y.index);
  return out;
}

struct FactorReport {
  Eigen::Index target = 0;
  double rho_tilde = 0.0;
  Vector delta;        // Delta_{j,i} = (H g)_j - (H g)_i
  Vector beta_gd;      // exp(-eta'(g_j - g_i))
  Vector curvature;    // exp(-eta' rt Delta_{j,i})
  Vector remainder;    // exp(r_j - r_i), measured from the exact step
  Vector remainder_logits;  // r = dz_actual - dz_first_order
  double alpha_direct = 0.0;
  double alpha_reconstructed = 0.0;
};

/// alpha_i = sum_j e^{z_j} / sum_j beta_j e^{z_j} with
/// beta_j = beta_gd_j * curvature_j * remainder_j.
inline FactorReport ratio_factorization(const ParameterMatrix& w, const FeatureVector& phi, const OneHotLabel& y,
                                        const UpdateConfig& cfg, Eigen::Index i) {
  detail::check_example(w, phi, y);
  require(i >= 0 && i < y.classes, "ratio_factorization: class index out of range");
  const UpdateConfig th = cfg.to_theory();
  const double eta_mu = th.eta * phi.mu();

  const LogitVector z = w * phi.phi();
  const ProbVector p = softmax(z);
  const Residual g = logit_gradient(p, y);
  const Vector hg = hessian_residual_product(p, y);

  FactorReport out;
  out.target = i;
  out.rho_tilde = equivalent_rho(th.active_rho(), phi.mu(), g.norm());

  const LogitVector z_after = apply_update(w, phi, y, cfg) * phi.phi();
  const ProbVector p_after = softmax(z_after);
  out.alpha_direct = p_after[i] / p[i];
  out.remainder_logits = (z_after - z) + eta_mu * (g + out.rho_tilde * hg);

  const Eigen::Index n = z.size();
  out.delta.resize(n);
  out.beta_gd.resize(n);
  out.curvature.resize(n);
  out.remainder.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.delta[j] = hg[j] - hg[i];
    out.beta_gd[j] = std::exp(-eta_mu * (g[j] - g[i]));
    out.curvature[j] = std::exp(-eta_mu * out.rho_tilde * out.delta[j]);
    out.remainder[j] = std::exp(out.remainder_logits[j] - out.remainder_logits[i]);
  }
  const double zmax = z.maxCoeff();
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double ez = std::exp(z[j] - zmax);
    num += ez;
    den += out.beta_gd[j] * out.curvature[j] * out.remainder[j] * ez;
  }
  out.alpha_reconstructed = num / den;
  return out;
}

// ---------------------------------------------------------------------------
// Top-2 dominance

struct Top2Diagnostics {
  Eigen::Index y_star = 0;
  double S = 0.0;           // p_y + p_{y*}
  double tau = 0.0;         // 1 - S
  double p_bar_y = 0.0;     // p_y / S
  double delta_bin = 0.0;   // 4 pbar (1 - pbar)^2
  double gamma0_lo = 0.0;   // 4 B e^2 tau / p_{y*}
  double gamma0_hi = 0.0;   // delta_bin - 6 tau
  bool feasible = false;
  double curvature_gap = 0.0;  // Delta_{y*,y} = (H g)_{y*} - (H g)_y
  double zeta = 0.0;           // curvature_gap - delta_bin
};

inline constexpr double kTop2B = 1.4142135623730951;  // sqrt(2), bound on |Delta_{j,i}|

inline Top2Diagnostics top2_diagnostics(const ProbVector& p, const OneHotLabel& y) {
  require(p.size() == y.classes, "top2_diagnostics: size mismatch");
  Top2Diagnostics d;
  d.y_star = most_confident_incorrect(p, y.index);
  const double py = p[y.index];
  const double pstar = p[d.y_star];
  d.S = py + pstar;
  // Tail mass summed directly rather than as 1 - S to avoid cancellation.
  double tail = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (j != y.index && j != d.y_star) tail += p[j];
  }
  d.tau = tail;
  d.p_bar_y = py / d.S;
  d.delta_bin = 4.0 * d.p_bar_y * (1.0 - d.p_bar_y) * (1.0 - d.p_bar_y);
  d.gamma0_lo = 4.0 * kTop2B * std::exp(2.0) * d.tau / pstar;
  d.gamma0_hi = d.delta_bin - 6.0 * d.tau;
  d.feasible = d.gamma0_lo <= d.gamma0_hi;
  const Vector hg = hessian_residual_product(p, y);
  d.curvature_gap = hg[d.y_star] - hg[y.index];
  d.zeta = d.curvature_gap - d.delta_bin;
  return d;
}

// ---------------------------------------------------------------------------
// Matched-state branching

/// |v_k^T g'| for each optimizer stepping from the same state, in the frozen
/// basis of H_z at that state. Row per config, column per mode.
inline Matrix branch_modal_magnitudes(const ParameterMatrix& w, const FeatureVector& phi, const OneHotLabel& y,
                                      const std::vector<UpdateConfig>& configs, const ModalBasis& basis) {
  Matrix out(static_cast<Eigen::Index>(configs.size()), basis.modes());
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const ParameterMatrix next = apply_update(w, phi, y, configs[c]);
    const Residual g_next = logit_gradient(softmax(next * phi.phi()), y);
    out.row(static_cast<Eigen::Index>(c)) = modal_coefficients(basis, g_next).cwiseAbs().transpose();
  }
  return out;
}

}  // namespace logitdyn

#endif  // LOGITDYN_DYNAMICS_HPP
