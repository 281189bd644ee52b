#ifndef LOGITDYN_HARNESS_HPP
#define LOGITDYN_HARNESS_HPP

// Toy-scenario driver: an SFT phase of GD on one label, then a label switch
// with a negative-rate phase run by each configured optimizer from the shared
// post-SFT state. Also ρ/η sweeps, matched-state branching and CSV/SVG output.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "logitdyn/core.hpp"
#include "logitdyn/dynamics.hpp"
#include "logitdyn/geometry.hpp"
#include "logitdyn/rng.hpp"

namespace logitdyn {

// ---------------------------------------------------------------------------
// Configuration

struct OptimizerSpec {
  std::string name;
  UpdateConfig update;
};

struct ScenarioConfig {
  int d = 1000;
  int V = 3;
  std::uint64_t seed = 0;
  double feature_scale = 1.0;
  int sft_epochs = 10;
  int sft_label = 0;
  int post_label = 1;
  int post_steps = 0;
  double eta_sft = 0.1;
  double eta_post = -0.05;  // THEORY convention
  std::vector<OptimizerSpec> optimizers;
  int log_every = 1;

  void validate() const {
    require(d >= 1, "config: d must be >= 1");
    require(V >= 2, "config: V must be >= 2");
    require(std::isfinite(feature_scale) && feature_scale > 0.0, "config: feature_scale must be positive");
    require(sft_epochs >= 0 && post_steps >= 0, "config: step counts must be nonnegative");
    require(sft_label >= 0 && sft_label < V, "config: sft_label out of range");
    require(post_label >= 0 && post_label < V, "config: post_label out of range");
    require(post_label != sft_label, "config: post_label must differ from sft_label");
    require(log_every >= 1, "config: log_every must be >= 1");
    require(std::isfinite(eta_sft) && std::abs(eta_sft) > 0.0 && std::abs(eta_sft) <= 1.0,
            "config: |eta_sft| must lie in (0, 1]");
    require(std::isfinite(eta_post) && std::abs(eta_post) > 0.0 && std::abs(eta_post) <= 1.0,
            "config: |eta_post| must lie in (0, 1]");
    require(!optimizers.empty(), "config: at least one optimizer is required");
    std::set<std::string> names;
    for (const auto& o : optimizers) {
      require(!o.name.empty(), "config: optimizer name must be non-empty");
      require(o.name.find_first_of(",\"\n\r") == std::string::npos,
              "config: optimizer name must not contain commas, quotes or newlines");
      require(names.insert(o.name).second, "config: duplicate optimizer name '" + o.name + "'");
      o.update.validate();
    }
  }
};

namespace detail {

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "GD") return Optimizer::kGD;
  if (s == "SAM_FULL") return Optimizer::kSamFull;
  if (s == "LOGITS_SAM") return Optimizer::kLogitsSam;
  throw InvalidInput("config: unknown optimizer '" + s + "' (expected GD, SAM_FULL or LOGITS_SAM)");
}

inline SignConvention parse_convention(const std::string& s) {
  if (s == "THEORY") return SignConvention::kTheory;
  if (s == "PRACTICE") return SignConvention::kPractice;
  throw InvalidInput("config: unknown sign_convention '" + s + "' (expected THEORY or PRACTICE)");
}

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), "config: " + where + " must be a JSON object");
  for (const auto& item : j.items()) {
    require(allowed.count(item.key()) == 1, "config: unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key) {
  require(j.contains(key), "config: missing key '" + key + "'");
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<T, std::string>) {
    require(v.is_string(), "config: '" + key + "' must be a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
            "config: '" + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    require(v.is_number_integer(), "config: '" + key + "' must be an integer");
    return v.get<T>();
  } else {
    require(v.is_number(), "config: '" + key + "' must be a number");
    return v.get<T>();
  }
}

inline std::string default_name(const UpdateConfig& u) {
  std::string name(to_string(u.optimizer));
  if (u.uses_sam()) {
    const double theory_rho = u.to_theory().rho;
    name += theory_rho < 0 ? "_rho_neg" : (theory_rho > 0 ? "_rho_pos" : "_rho_zero");
  }
  return name;
}

}  // namespace detail

/// Parses one optimizer entry. eta defaults to eta_post expressed in the
/// entry's own sign convention. With kappa > 0, rho contributes only its
/// sign and the magnitude becomes kappa * sqrt(|eta|).
inline OptimizerSpec parse_optimizer_spec(const nlohmann::json& j, double eta_post_theory) {
  detail::reject_unknown_keys(j, {"name", "optimizer", "eta", "rho", "kappa", "sign_convention"}, "optimizer entry");
  UpdateConfig u;
  u.optimizer = detail::parse_optimizer(detail::get_field<std::string>(j, "optimizer"));
  u.sign_convention = j.contains("sign_convention")
                          ? detail::parse_convention(detail::get_field<std::string>(j, "sign_convention"))
                          : SignConvention::kTheory;
  u.eta = j.contains("eta") ? detail::get_field<double>(j, "eta")
                            : (u.sign_convention == SignConvention::kTheory ? eta_post_theory : -eta_post_theory);
  const double rho = j.contains("rho") ? detail::get_field<double>(j, "rho") : 0.0;
  u.kappa = j.contains("kappa") ? detail::get_field<double>(j, "kappa") : 0.0;
  require(u.kappa >= 0.0, "config: kappa must be nonnegative");
  if (u.kappa > 0.0) {
    require(rho != 0.0, "config: with kappa > 0, rho must be nonzero to give the radius sign");
    u.rho = (rho < 0 ? -1.0 : 1.0) * u.kappa * std::sqrt(std::abs(u.eta));
  } else {
    u.rho = rho;
  }
  if (u.optimizer == Optimizer::kGD) {
    require(u.rho == 0.0 && u.kappa == 0.0, "config: GD takes no rho or kappa");
  }
  OptimizerSpec spec;
  spec.update = u;
  spec.name = j.contains("name") ? detail::get_field<std::string>(j, "name") : detail::default_name(u);
  return spec;
}

inline ScenarioConfig parse_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"d", "V", "seed", "feature_scale", "sft_epochs", "sft_label", "post_label",
                               "post_steps", "eta_sft", "eta_post", "optimizers", "log_every"},
                              "scenario config");
  using detail::get_field;
  ScenarioConfig c;
  c.d = get_field<int>(j, "d");
  c.V = get_field<int>(j, "V");
  c.seed = get_field<std::uint64_t>(j, "seed");
  c.feature_scale = get_field<double>(j, "feature_scale");
  c.sft_epochs = get_field<int>(j, "sft_epochs");
  c.sft_label = get_field<int>(j, "sft_label");
  c.post_label = get_field<int>(j, "post_label");
  c.post_steps = get_field<int>(j, "post_steps");
  c.eta_sft = get_field<double>(j, "eta_sft");
  c.eta_post = get_field<double>(j, "eta_post");
  c.log_every = get_field<int>(j, "log_every");
  require(j.contains("optimizers") && j.at("optimizers").is_array(), "config: 'optimizers' must be an array");
  for (const auto& entry : j.at("optimizers")) c.optimizers.push_back(parse_optimizer_spec(entry, c.eta_post));
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput("config: malformed JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

/// Re-expresses every post-phase optimizer in the PRACTICE convention. The
/// iterates are unchanged; only the signs stored in the configs flip.
inline ScenarioConfig to_practice(ScenarioConfig cfg) {
  for (auto& o : cfg.optimizers) o.update = o.update.to_practice();
  return cfg;
}

/// phi_i = feature_scale * N_i, with N_i the i-th normal of the feature
/// stream. The draw depends only on (seed, d).
inline FeatureVector make_features(const ScenarioConfig& cfg) {
  const CounterRng rng(cfg.seed, Stream::kFeatures);
  Vector phi(cfg.d);
  for (int i = 0; i < cfg.d; ++i) phi[i] = cfg.feature_scale * rng.normal_at(static_cast<std::uint64_t>(i));
  return FeatureVector(phi);
}

// ---------------------------------------------------------------------------
// Trajectories

enum class Phase { kSft, kPost };

inline std::string_view to_string(Phase p) { return p == Phase::kSft ? "SFT" : "POST"; }

/// State after `step` updates. Fields describing the update into this state
/// (e_frozen, alphas, prediction errors) are NaN at step 0.
struct TrajectoryRecord {
  int step = 0;
  Phase phase = Phase::kSft;
  std::string optimizer;
  ProbVector probs;
  Residual residual;
  Vector e_frozen;     // previous state's eigenbasis applied to this residual
  Vector e_refreshed;  // this state's eigenbasis applied to this residual
  Vector eigenvalues;
  ConfidenceRatios alphas;
  Top2Diagnostics top2;
  double err_w = std::numeric_limits<double>::quiet_NaN();
  double err_z = std::numeric_limits<double>::quiet_NaN();
  double err_g = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct StepContext {
  ParameterMatrix w;
  ModalBasis basis;
  ProbVector probs;
};

inline StepContext context_of(const ParameterMatrix& w, const FeatureVector& phi) {
  const ProbVector p = softmax(w * phi.phi());
  return {w, spectral_decompose(logit_hessian(p)), p};
}

inline TrajectoryRecord make_record(int step, Phase phase, const std::string& tag, const StepContext& now,
                                    const StepContext* prev, const UpdateConfig* update, const FeatureVector& phi,
                                    const OneHotLabel& y) {
  TrajectoryRecord r;
  r.step = step;
  r.phase = phase;
  r.optimizer = tag;
  r.probs = now.probs;
  r.residual = logit_gradient(now.probs, y);
  r.eigenvalues = now.basis.eigenvalues;
  r.e_refreshed = modal_coefficients(now.basis, r.residual);
  r.top2 = top2_diagnostics(now.probs, y);
  const auto classes = static_cast<Eigen::Index>(now.probs.size());
  if (prev == nullptr) {
    r.e_frozen = Vector::Constant(now.basis.modes(), std::numeric_limits<double>::quiet_NaN());
    r.alphas.alpha = Vector::Constant(classes, std::numeric_limits<double>::quiet_NaN());
    r.alphas.y_star = most_confident_incorrect(now.probs, y.index);
    r.alphas.ratios_valid = false;
    return r;
  }
  r.e_frozen = modal_coefficients(prev->basis, r.residual);
  r.alphas = confidence_ratios(prev->probs, now.probs, y);
  const DynamicsPrediction pred = predict_step(prev->w, phi, y, *update);
  const Vector z_now = now.w * phi.phi();
  r.err_w = (now.w - pred.w_pred).norm();
  r.err_z = (z_now - pred.z_pred).norm();
  r.err_g = (r.residual - pred.g_pred).norm();
  return r;
}

inline void check_finite(const ParameterMatrix& w, int step, const std::string& tag, const FeatureVector& phi) {
  const Vector z = w * phi.phi();
  if (w.allFinite() && z.allFinite()) return;
  std::ostringstream msg;
  msg << "non-finite state at step " << step << " (optimizer " << tag << "); logits:";
  for (Eigen::Index i = 0; i < z.size(); ++i) msg << ' ' << z[i];
  throw NumericalFailure(msg.str());
}

}  // namespace detail

struct ScenarioResult {
  std::vector<TrajectoryRecord> records;  // sorted by (optimizer, step)
  ParameterMatrix w_post_sft;
  std::map<std::string, ParameterMatrix> final_w;
};

inline void sort_records(std::vector<TrajectoryRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
    if (a.optimizer != b.optimizer) return a.optimizer < b.optimizer;
    return a.step < b.step;
  });
}

inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const FeatureVector phi = make_features(cfg);
  require(phi.mu() > 0.0, "scenario: feature vector is zero");
  const OneHotLabel y_sft(cfg.sft_label, cfg.V);
  const OneHotLabel y_post(cfg.post_label, cfg.V);
  UpdateConfig sft_update;
  sft_update.eta = cfg.eta_sft;
  sft_update.optimizer = Optimizer::kGD;

  ScenarioResult out;
  std::vector<TrajectoryRecord> sft_records;
  auto logged = [&](int step) { return step % cfg.log_every == 0; };

  detail::StepContext ctx = detail::context_of(ParameterMatrix::Zero(cfg.V, cfg.d), phi);
  if (logged(0)) sft_records.push_back(detail::make_record(0, Phase::kSft, "", ctx, nullptr, nullptr, phi, y_sft));
  for (int t = 1; t <= cfg.sft_epochs; ++t) {
    const ParameterMatrix next = gd_step(ctx.w, phi, y_sft, sft_update);
    detail::check_finite(next, t, "SFT", phi);
    detail::StepContext now = detail::context_of(next, phi);
    if (logged(t)) sft_records.push_back(detail::make_record(t, Phase::kSft, "", now, &ctx, &sft_update, phi, y_sft));
    ctx = std::move(now);
  }
  out.w_post_sft = ctx.w;

  for (const auto& opt : cfg.optimizers) {
    for (auto r : sft_records) {
      r.optimizer = opt.name;
      out.records.push_back(std::move(r));
    }
    detail::StepContext cur = ctx;
    for (int s = 1; s <= cfg.post_steps; ++s) {
      const int t = cfg.sft_epochs + s;
      const ParameterMatrix next = apply_update(cur.w, phi, y_post, opt.update);
      detail::check_finite(next, t, opt.name, phi);
      detail::StepContext now = detail::context_of(next, phi);
      if (logged(t)) {
        out.records.push_back(detail::make_record(t, Phase::kPost, opt.name, now, &cur, &opt.update, phi, y_post));
      }
      cur = std::move(now);
    }
    out.final_w[opt.name] = cur.w;
  }
  sort_records(out.records);
  return out;
}

// ---------------------------------------------------------------------------
// Matched-state branching along the GD trajectory of the post phase

struct MatchedStep {
  int step = 0;                // state index the branches start from
  Vector e_abs;                // |v_k^T g| at that state
  Matrix branches;             // rows: SAM rho<0, GD, SAM rho>0; columns: modes
  Vector contraction;          // 1 - eta mu lambda_k
  bool admissible = false;     // every contraction factor is positive
};

inline std::vector<MatchedStep> matched_state_comparison(const ScenarioConfig& cfg, double kappa) {
  cfg.validate();
  require(kappa > 0.0, "matched_state_comparison: kappa must be positive");
  const FeatureVector phi = make_features(cfg);
  const OneHotLabel y_sft(cfg.sft_label, cfg.V);
  const OneHotLabel y_post(cfg.post_label, cfg.V);
  UpdateConfig sft_update;
  sft_update.eta = cfg.eta_sft;
  ParameterMatrix w = ParameterMatrix::Zero(cfg.V, cfg.d);
  for (int t = 1; t <= cfg.sft_epochs; ++t) w = gd_step(w, phi, y_sft, sft_update);

  const double eta = cfg.eta_post;
  UpdateConfig gd;
  gd.eta = eta;
  const std::vector<UpdateConfig> configs{UpdateConfig::kappa_scaled(Optimizer::kSamFull, eta, kappa, -1.0), gd,
                                          UpdateConfig::kappa_scaled(Optimizer::kSamFull, eta, kappa, 1.0)};
  std::vector<MatchedStep> out;
  for (int s = 0; s < cfg.post_steps; ++s) {
    const ProbVector p = softmax(w * phi.phi());
    MatchedStep m;
    m.step = cfg.sft_epochs + s;
    const ModalBasis basis = spectral_decompose(logit_hessian(p));
    m.e_abs = modal_coefficients(basis, logit_gradient(p, y_post)).cwiseAbs();
    m.branches = branch_modal_magnitudes(w, phi, y_post, configs, basis);
    m.contraction = (1.0 - eta * phi.mu() * basis.eigenvalues.array()).matrix();
    m.admissible = (m.contraction.array() > 0.0).all();
    out.push_back(std::move(m));
    w = gd_step(w, phi, y_post, gd);
    detail::check_finite(w, cfg.sft_epochs + s + 1, "GD", phi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { kRho, kEta };

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "rho") return SweepAxis::kRho;
  if (s == "eta") return SweepAxis::kEta;
  throw InvalidInput("sweep axis must be 'rho' or 'eta', got '" + s + "'");
}

inline std::string_view to_string(SweepAxis a) { return a == SweepAxis::kRho ? "rho" : "eta"; }

/// Values are in THEORY convention. A rho value replaces the radius of every
/// SAM optimizer (kappa scaling off); an eta value replaces eta_post and every
/// optimizer's rate, re-deriving kappa-scaled radii.
inline ScenarioConfig apply_axis(ScenarioConfig cfg, SweepAxis axis, double value) {
  for (auto& o : cfg.optimizers) {
    const double flip = o.update.sign_convention == SignConvention::kTheory ? 1.0 : -1.0;
    if (axis == SweepAxis::kRho) {
      if (!o.update.uses_sam()) continue;
      o.update.rho = flip * value;
      o.update.kappa = 0.0;
    } else {
      o.update.eta = flip * value;
      if (o.update.kappa > 0.0) {
        o.update.rho = (o.update.rho < 0 ? -1.0 : 1.0) * o.update.kappa * std::sqrt(std::abs(value));
      }
    }
  }
  if (axis == SweepAxis::kEta) cfg.eta_post = value;
  return cfg;
}

struct SweepCellSummary {
  double value = 0.0;
  std::string optimizer;
  ProbVector final_probs;
  Vector final_e_abs;  // |e_refreshed| at the last logged post state
  double first_err_w = std::numeric_limits<double>::quiet_NaN();
  double first_err_z = std::numeric_limits<double>::quiet_NaN();
  double first_err_g = std::numeric_limits<double>::quiet_NaN();
  double remainder_constant = std::numeric_limits<double>::quiet_NaN();  // max over steps of err_g / eta^2
};

struct SweepReport {
  SweepAxis axis = SweepAxis::kRho;
  std::vector<double> values;
  std::vector<SweepCellSummary> cells;
  std::vector<ScenarioResult> runs;
};

inline std::vector<SweepCellSummary> summarize(const ScenarioConfig& cfg, const ScenarioResult& run, double value) {
  std::vector<SweepCellSummary> out;
  for (const auto& o : cfg.optimizers) {
    SweepCellSummary s;
    s.value = value;
    s.optimizer = o.name;
    const double eta = o.update.to_theory().eta;
    double c_max = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : run.records) {
      if (r.optimizer != o.name) continue;
      s.final_probs = r.probs;
      s.final_e_abs = r.e_refreshed.cwiseAbs();
      if (r.phase != Phase::kPost) continue;
      if (r.step == cfg.sft_epochs + 1) {
        s.first_err_w = r.err_w;
        s.first_err_z = r.err_z;
        s.first_err_g = r.err_g;
      }
      const double c = r.err_g / (eta * eta);
      if (std::isnan(c_max) || c > c_max) c_max = c;
    }
    s.remainder_constant = c_max;
    out.push_back(std::move(s));
  }
  return out;
}

inline SweepReport run_sweep(const ScenarioConfig& base, SweepAxis axis, const std::vector<double>& values) {
  require(!values.empty(), "sweep: values must be non-empty");
  SweepReport rep;
  rep.axis = axis;
  rep.values = values;
  for (double v : values) {
    const ScenarioConfig cfg = apply_axis(base, axis, v);
    ScenarioResult run = run_scenario(cfg);
    for (auto& s : summarize(cfg, run, v)) rep.cells.push_back(std::move(s));
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

inline nlohmann::json json_vector(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
  return a;
}

inline std::vector<std::string> csv_columns(Eigen::Index classes) {
  std::vector<std::string> cols{"step", "phase", "optimizer"};
  auto add = [&](const std::string& prefix, Eigen::Index from, Eigen::Index to) {
    for (Eigen::Index i = from; i < to; ++i) cols.push_back(prefix + std::to_string(i));
  };
  add("p_", 0, classes);
  add("g_", 0, classes);
  add("e_frozen_", 1, classes);
  add("e_refreshed_", 1, classes);
  add("lambda_", 1, classes);
  add("alpha_", 0, classes);
  for (const char* c : {"y_star", "tau", "delta_bin", "feasible", "err_w", "err_z", "err_g"}) cols.emplace_back(c);
  return cols;
}

inline std::string to_csv(const std::vector<TrajectoryRecord>& records) {
  require(!records.empty(), "emit_csv: no records");
  const Eigen::Index classes = records.front().probs.size();
  std::ostringstream out;
  const auto cols = csv_columns(classes);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  std::vector<const TrajectoryRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const TrajectoryRecord* a, const TrajectoryRecord* b) {
    if (a->optimizer != b->optimizer) return a->optimizer < b->optimizer;
    return a->step < b->step;
  });
  for (const TrajectoryRecord* r : order) {
    require(r->probs.size() == classes, "emit_csv: records disagree on the number of classes");
    out << r->step << ',' << to_string(r->phase) << ',' << r->optimizer;
    auto put = [&](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_number(v[i]);
    };
    put(r->probs);
    put(r->residual);
    put(r->e_frozen);
    put(r->e_refreshed);
    put(r->eigenvalues);
    put(r->alphas.alpha);
    out << ',' << r->top2.y_star << ',' << format_number(r->top2.tau) << ',' << format_number(r->top2.delta_bin)
        << ',' << (r->top2.feasible ? 1 : 0) << ',' << format_number(r->err_w) << ',' << format_number(r->err_z)
        << ',' << format_number(r->err_g) << '\n';
  }
  return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << content;
  f.close();
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline void emit_csv(const std::vector<TrajectoryRecord>& records, const std::string& path) {
  write_file(path, to_csv(records));
}

enum class PlotQuantity { kProbs, kModal, kAlphas };

inline PlotQuantity parse_plot_quantity(const std::string& s) {
  if (s == "probs") return PlotQuantity::kProbs;
  if (s == "modal") return PlotQuantity::kModal;
  if (s == "alphas") return PlotQuantity::kAlphas;
  throw InvalidInput("svg selector must be probs, modal or alphas, got '" + s + "'");
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string optimizer;
  std::string column;
  std::vector<std::pair<double, double>> points;
};

}  // namespace detail

inline std::string to_svg(const std::vector<TrajectoryRecord>& records, PlotQuantity what) {
  require(!records.empty(), "emit_svg: no records to plot");
  const Eigen::Index classes = records.front().probs.size();
  std::vector<std::string> optimizers;
  for (const auto& r : records) {
    if (std::find(optimizers.begin(), optimizers.end(), r.optimizer) == optimizers.end())
      optimizers.push_back(r.optimizer);
  }
  std::sort(optimizers.begin(), optimizers.end());

  std::vector<detail::Series> series;
  for (const auto& name : optimizers) {
    const Eigen::Index n = what == PlotQuantity::kModal ? classes - 1 : classes;
    for (Eigen::Index k = 0; k < n; ++k) {
      detail::Series s;
      s.optimizer = name;
      switch (what) {
        case PlotQuantity::kProbs: s.column = "p_" + std::to_string(k); break;
        case PlotQuantity::kModal: s.column = "e_refreshed_" + std::to_string(k + 1); break;
        case PlotQuantity::kAlphas: s.column = "alpha_" + std::to_string(k); break;
      }
      for (const auto& r : records) {
        if (r.optimizer != name) continue;
        const double y = what == PlotQuantity::kProbs   ? r.probs[k]
                         : what == PlotQuantity::kModal ? r.e_refreshed[k]
                                                        : r.alphas.alpha[k];
        if (std::isfinite(y)) s.points.emplace_back(r.step, y);
      }
      std::sort(s.points.begin(), s.points.end());
      series.push_back(std::move(s));
    }
  }

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  require(std::isfinite(x0), "emit_svg: selection has no finite values");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  constexpr double kW = 800, kH = 500, kLeft = 70, kRight = 220, kTop = 20, kBottom = 50;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  static const char* kDashes[] = {"", "6,3", "2,2", "8,3,2,3"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << ' ' << kH << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& text, const char* anchor) {
    o << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"11\" text-anchor=\"" << anchor << "\">"
      << detail::xml_escape(text) << "</text>\n";
  };
  label(kLeft, kH - kBottom + 16, format_number(x0), "middle");
  label(kW - kRight, kH - kBottom + 16, format_number(x1), "middle");
  label((kLeft + kW - kRight) / 2, kH - 10, "step", "middle");
  label(kLeft - 6, kH - kBottom, format_number(y0), "end");
  label(kLeft - 6, kTop + 4, format_number(y1), "end");

  double legend_y = kTop + 10;
  for (std::size_t oi = 0; oi < optimizers.size(); ++oi) {
    label(kW - kRight + 12, legend_y, optimizers[oi], "start");
    legend_y += 14;
    for (const auto& s : series) {
      if (s.optimizer != optimizers[oi]) continue;
      const auto k = static_cast<std::size_t>(&s - series.data()) % (sizeof kColors / sizeof *kColors);
      const char* color = kColors[k];
      const char* dash = kDashes[oi % (sizeof kDashes / sizeof *kDashes)];
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
      if (*dash) o << " stroke-dasharray=\"" << dash << "\"";
      o << " data-optimizer=\"" << detail::xml_escape(s.optimizer) << "\" data-series=\"" << s.column
        << "\" points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i) {
        o << (i ? " " : "") << px(s.points[i].first) << ',' << py(s.points[i].second);
      }
      o << "\"/>\n";
      o << "<line x1=\"" << kW - kRight + 20 << "\" y1=\"" << legend_y - 4 << "\" x2=\"" << kW - kRight + 44
        << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << color << "\"";
      if (*dash) o << " stroke-dasharray=\"" << dash << "\"";
      o << "/>\n";
      label(kW - kRight + 50, legend_y, s.column, "start");
      legend_y += 14;
    }
  }
  o << "</svg>\n";
  return o.str();
}

inline void emit_svg(const std::vector<TrajectoryRecord>& records, PlotQuantity what, const std::string& path) {
  write_file(path, to_svg(records, what));
}

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
  nlohmann::json opts = nlohmann::json::array();
  for (const auto& o : cfg.optimizers) {
    opts.push_back({{"name", o.name},
                    {"optimizer", std::string(to_string(o.update.optimizer))},
                    {"eta", o.update.eta},
                    {"rho", o.update.rho},
                    {"kappa", o.update.kappa},
                    {"sign_convention", o.update.sign_convention == SignConvention::kTheory ? "THEORY" : "PRACTICE"}});
  }
  return {{"d", cfg.d},
          {"V", cfg.V},
          {"seed", cfg.seed},
          {"feature_scale", cfg.feature_scale},
          {"sft_epochs", cfg.sft_epochs},
          {"sft_label", cfg.sft_label},
          {"post_label", cfg.post_label},
          {"post_steps", cfg.post_steps},
          {"eta_sft", cfg.eta_sft},
          {"eta_post", cfg.eta_post},
          {"optimizers", opts},
          {"log_every", cfg.log_every}};
}

inline nlohmann::json to_json(const SweepCellSummary& s) {
  return {{"value", s.value},
          {"optimizer", s.optimizer},
          {"final_probs", json_vector(s.final_probs)},
          {"final_e_abs", json_vector(s.final_e_abs)},
          {"first_err_w", json_number(s.first_err_w)},
          {"first_err_z", json_number(s.first_err_z)},
          {"first_err_g", json_number(s.first_err_g)},
          {"remainder_constant", json_number(s.remainder_constant)}};
}

}  // namespace logitdyn

#endif  // LOGITDYN_HARNESS_HPP
