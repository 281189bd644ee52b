#ifndef LOGITDYN_OBJECTIVES_HPP
#define LOGITDYN_OBJECTIVES_HPP

// Preference objectives for a single shared feature phi: both responses of a
// pair are classes of the same softmax head, and the frozen reference policy
// is stored directly as logits.

#include <cmath>

#include "logitdyn/core.hpp"
#include "logitdyn/geometry.hpp"

namespace logitdyn {

enum class SignConvention { kTheory, kPractice };

/// POSITIVE is the usual -log p_y; NEGATIVE is +log p_y, the objective used
/// for the dispreferred response when every learning rate is positive.
enum class ObjectiveSign { kPositive, kNegative };

struct PreferencePair {
  FeatureVector phi;
  OneHotLabel y_plus;
  OneHotLabel y_minus;
  LogitVector ref_logits;

  PreferencePair(FeatureVector phi_, OneHotLabel plus, OneHotLabel minus, LogitVector ref)
      : phi(std::move(phi_)), y_plus(plus), y_minus(minus), ref_logits(std::move(ref)) {
    require(y_plus.classes == y_minus.classes, "preference pair: label class counts differ");
    require(y_plus.index != y_minus.index, "preference pair: y+ and y- must differ");
    require(ref_logits.size() == y_plus.classes, "preference pair: reference logits have wrong length");
    require(ref_logits.allFinite(), "preference pair: reference logits must be finite");
  }
};

struct DPOConfig {
  double beta = 0.1;
  SignConvention sign_convention = SignConvention::kTheory;

  void validate() const { require(beta > 0.0, "DPO beta must be positive"); }
};

/// log sigma(x) = -softplus(-x), stable for any sign of x.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void check_pair_dims(const ParameterMatrix& w, const PreferencePair& pair) {
  require(w.rows() == pair.y_plus.classes, "DPO: W row count must equal V");
  require(w.cols() == pair.phi.dim(), "DPO: W column count must equal d");
}

/// beta * [(log pi(y+) - log ref(y+)) - (log pi(y-) - log ref(y-))].
/// The partition term cancels and is never formed.
inline double implicit_reward_margin(const ParameterMatrix& w, const PreferencePair& pair,
                                     const DPOConfig& cfg) {
  cfg.validate();
  check_pair_dims(w, pair);
  const Vector logp = log_softmax(w * pair.phi.phi());
  const Vector logref = log_softmax(pair.ref_logits);
  const auto yp = pair.y_plus.index;
  const auto ym = pair.y_minus.index;
  return cfg.beta * ((logp[yp] - logref[yp]) - (logp[ym] - logref[ym]));
}

inline double dpo_loss(const ParameterMatrix& w, const PreferencePair& pair, const DPOConfig& cfg) {
  return -log_sigmoid(implicit_reward_margin(w, pair, cfg));
}

/// Gradient of dpo_loss in W:
///   beta * sigma(-m) * [(p - y+) - (p - y-)] phi^T.
/// With a shared phi the probability terms cancel in exact arithmetic; they
/// are kept so the expression mirrors the per-response residuals.
inline ParameterMatrix dpo_parameter_gradient(const ParameterMatrix& w, const PreferencePair& pair,
                                              const DPOConfig& cfg) {
  const double margin = implicit_reward_margin(w, pair, cfg);
  const ProbVector p = softmax(w * pair.phi.phi());
  const Residual g_plus = logit_gradient(p, pair.y_plus);
  const Residual g_minus = logit_gradient(p, pair.y_minus);
  const Residual g = cfg.beta * sigmoid(-margin) * (g_plus - g_minus);
  return parameter_gradient(g, pair.phi);
}

inline double signed_objective(const LogitVector& z, const OneHotLabel& y, ObjectiveSign sign) {
  const double ce = cross_entropy(z, y);
  return sign == ObjectiveSign::kPositive ? ce : -ce;
}

/// Logit gradient of signed_objective; the NEGATIVE case is the exact
/// negation of the POSITIVE residual.
inline Residual signed_logit_gradient(const LogitVector& z, const OneHotLabel& y, ObjectiveSign sign) {
  const Residual g = logit_gradient(softmax(z), y);
  return sign == ObjectiveSign::kPositive ? g : Residual(-g);
}

inline ObjectiveSign objective_for(SignConvention convention) {
  return convention == SignConvention::kTheory ? ObjectiveSign::kPositive : ObjectiveSign::kNegative;
}

}  // namespace logitdyn

#endif  // LOGITDYN_OBJECTIVES_HPP
