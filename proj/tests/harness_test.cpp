#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "logitdyn/harness.hpp"

namespace logitdyn {
namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "d": 8, "V": 3, "seed": 11, "feature_scale": 0.35,
    "sft_epochs": 5, "sft_label": 0, "post_label": 1, "post_steps": 12,
    "eta_sft": 0.3, "eta_post": -0.05, "log_every": 1,
    "optimizers": [
      {"name": "GD", "optimizer": "GD"},
      {"name": "SAM_neg", "optimizer": "SAM_FULL", "rho": -1, "kappa": 0.1},
      {"name": "SAM_pos", "optimizer": "SAM_FULL", "rho": 1, "kappa": 0.1}
    ]
  })");
}

ScenarioConfig squeeze_toy() { return load_config(std::string(LOGITDYN_CONFIG_DIR) + "/squeeze_toy.json"); }

std::vector<const TrajectoryRecord*> rows_of(const ScenarioResult& r, const std::string& tag) {
  std::vector<const TrajectoryRecord*> out;
  for (const auto& rec : r.records)
    if (rec.optimizer == tag) out.push_back(&rec);
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double parse_double(const std::string& s) { return s == "nan" ? std::nan("") : std::stod(s); }

// --- configuration -------------------------------------------------------

TEST(ScenarioConfig, ParsesToyDefaults) {
  const ScenarioConfig cfg = squeeze_toy();
  EXPECT_EQ(cfg.d, 1000);
  EXPECT_EQ(cfg.V, 3);
  EXPECT_EQ(cfg.sft_epochs, 10);
  EXPECT_EQ(cfg.sft_label, 0);
  EXPECT_EQ(cfg.post_label, 1);
  EXPECT_LT(cfg.eta_post, 0.0);
  ASSERT_EQ(cfg.optimizers.size(), 3u);
  EXPECT_EQ(cfg.optimizers[0].update.optimizer, Optimizer::kGD);
}

TEST(ScenarioConfig, KappaScalingKeepsRhoSign) {
  const ScenarioConfig cfg = parse_config(small_config());
  EXPECT_NEAR(cfg.optimizers[1].update.rho, -0.1 * std::sqrt(0.05), 1e-15);
  EXPECT_NEAR(cfg.optimizers[2].update.rho, 0.1 * std::sqrt(0.05), 1e-15);
  EXPECT_EQ(cfg.optimizers[1].update.eta, -0.05);
}

TEST(ScenarioConfig, PracticeEntryDefaultsToNegatedRate) {
  auto j = small_config();
  j["optimizers"][0]["sign_convention"] = "PRACTICE";
  const ScenarioConfig cfg = parse_config(j);
  EXPECT_EQ(cfg.optimizers[0].update.eta, 0.05);
  EXPECT_EQ(cfg.optimizers[0].update.to_theory().eta, -0.05);
}

TEST(ScenarioConfig, DefaultNamesFollowTheoryRadiusSign) {
  auto j = small_config();
  for (auto& o : j["optimizers"]) o.erase("name");
  const ScenarioConfig cfg = parse_config(j);
  EXPECT_EQ(cfg.optimizers[0].name, "GD");
  EXPECT_EQ(cfg.optimizers[1].name, "SAM_FULL_rho_neg");
  EXPECT_EQ(cfg.optimizers[2].name, "SAM_FULL_rho_pos");
}

TEST(ScenarioConfig, RejectsMalformedInput) {
  auto expect_invalid = [](nlohmann::json j) { EXPECT_THROW(parse_config(j), InvalidInput) << j.dump(); };
  auto j = small_config();
  j["learning_rate"] = 0.1;
  expect_invalid(j);
  j = small_config();
  j["optimizers"][0]["momentum"] = 0.9;
  expect_invalid(j);
  j = small_config();
  j.erase("seed");
  expect_invalid(j);
  j = small_config();
  j["seed"] = -1;
  expect_invalid(j);
  j = small_config();
  j["post_label"] = 0;
  expect_invalid(j);
  j = small_config();
  j["V"] = 1;
  expect_invalid(j);
  j = small_config();
  j["log_every"] = 0;
  expect_invalid(j);
  j = small_config();
  j["optimizers"][0]["optimizer"] = "ADAM";
  expect_invalid(j);
  j = small_config();
  j["optimizers"][1]["sign_convention"] = "theory";
  expect_invalid(j);
  j = small_config();
  j["optimizers"][2]["name"] = "GD";
  expect_invalid(j);
  j = small_config();
  j["optimizers"][0]["rho"] = 0.1;
  expect_invalid(j);
  j = small_config();
  j["optimizers"][1]["rho"] = 0;
  expect_invalid(j);
  j = small_config();
  j["d"] = "8";
  expect_invalid(j);
  j = small_config();
  j["optimizers"] = nlohmann::json::array();
  expect_invalid(j);
}

TEST(ScenarioConfig, MissingFileIsInvalidInput) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), InvalidInput);
}

// --- scenario -------------------------------------------------------------

TEST(RunScenario, FeaturesDependOnlyOnSeedAndDimension) {
  auto j = small_config();
  const FeatureVector a = make_features(parse_config(j));
  j["optimizers"].erase(1);
  j["post_steps"] = 3;
  const FeatureVector b = make_features(parse_config(j));
  EXPECT_EQ(a.phi(), b.phi());
  j["seed"] = 12;
  EXPECT_NE(make_features(parse_config(j)).phi(), a.phi());
}

TEST(RunScenario, AddingOptimizersLeavesOthersUnchanged) {
  auto j = small_config();
  const ScenarioResult full = run_scenario(parse_config(j));
  j["optimizers"] = nlohmann::json::array({j["optimizers"][0]});
  const ScenarioResult gd_only = run_scenario(parse_config(j));
  const auto a = rows_of(full, "GD");
  const auto b = rows_of(gd_only, "GD");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->probs, b[i]->probs);
}

TEST(RunScenario, ZeroPostStepsGivesIdenticalSftOnly) {
  auto j = small_config();
  j["post_steps"] = 0;
  const ScenarioResult r = run_scenario(parse_config(j));
  EXPECT_EQ(r.records.size(), 3u * 6u);
  for (const auto& rec : r.records) EXPECT_EQ(rec.phase, Phase::kSft);
  const auto gd = rows_of(r, "GD");
  const auto sam = rows_of(r, "SAM_pos");
  ASSERT_EQ(gd.size(), sam.size());
  for (std::size_t i = 0; i < gd.size(); ++i) {
    EXPECT_EQ(gd[i]->step, sam[i]->step);
    EXPECT_EQ(gd[i]->probs, sam[i]->probs);
  }
}

TEST(RunScenario, InitialStateIsUniformWithUndefinedTransition) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  const TrajectoryRecord& first = r.records.front();
  EXPECT_EQ(first.step, 0);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(first.probs[i], 1.0 / 3.0);
  EXPECT_TRUE(std::isnan(first.err_g));
  EXPECT_TRUE(std::isnan(first.e_frozen[0]));
}

TEST(RunScenario, LogEverySubsamplesSteps) {
  auto j = small_config();
  j["log_every"] = 4;
  const ScenarioResult r = run_scenario(parse_config(j));
  for (const auto& rec : r.records) EXPECT_EQ(rec.step % 4, 0);
  EXPECT_EQ(rows_of(r, "GD").size(), 5u);  // steps 0, 4, 8, 12, 16
}

TEST(RunScenario, RecordsAreSortedByOptimizerThenStep) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  for (std::size_t i = 1; i < r.records.size(); ++i) {
    const auto& a = r.records[i - 1];
    const auto& b = r.records[i];
    EXPECT_TRUE(a.optimizer < b.optimizer || (a.optimizer == b.optimizer && a.step < b.step));
  }
}

TEST(RunScenario, PredictionErrorsAreSmallAndFrozenBasisIsConsistent) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  for (const auto& rec : r.records) {
    if (rec.step == 0) continue;
    EXPECT_LT(rec.err_g, 1e-2);
    // Both coefficient vectors describe the same residual in orthonormal bases of 1-perp.
    EXPECT_NEAR(rec.e_frozen.norm(), rec.residual.norm(), 1e-12);
    EXPECT_NEAR(rec.e_refreshed.norm(), rec.residual.norm(), 1e-12);
  }
}

TEST(RunScenario, NonFiniteStateAbortsWithStepIndex) {
  auto j = small_config();
  j["feature_scale"] = 1e160;
  j["d"] = 2;
  try {
    run_scenario(parse_config(j));
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(RunScenario, PracticeMappingReproducesTrajectoriesExactly) {
  const ScenarioConfig cfg = parse_config(small_config());
  EXPECT_EQ(to_csv(run_scenario(cfg).records), to_csv(run_scenario(to_practice(cfg)).records));
}

TEST(RunScenario, DeterministicAcrossRuns) {
  const ScenarioConfig cfg = parse_config(small_config());
  EXPECT_EQ(to_csv(run_scenario(cfg).records), to_csv(run_scenario(cfg).records));
}

TEST(SqueezeToy, GdRaisesClassZeroAndLowersTheOthersAfterSwitch) {
  const ScenarioConfig cfg = squeeze_toy();
  const ScenarioResult r = run_scenario(cfg);
  const auto gd = rows_of(r, "GD");
  int post = 0;
  for (std::size_t i = 1; i < gd.size(); ++i) {
    if (gd[i]->phase != Phase::kPost) continue;
    ++post;
    EXPECT_GT(gd[i]->probs[0], gd[i - 1]->probs[0]) << "step " << gd[i]->step;
    EXPECT_LT(gd[i]->probs[1], gd[i - 1]->probs[1]) << "step " << gd[i]->step;
    EXPECT_LT(gd[i]->probs[2], gd[i - 1]->probs[2]) << "step " << gd[i]->step;
  }
  EXPECT_EQ(post, cfg.post_steps);
}

TEST(SqueezeToy, MatchedStateOrderingAndGrowth) {
  const auto steps = matched_state_comparison(squeeze_toy(), 0.1);
  ASSERT_EQ(steps.size(), 60u);
  for (const auto& m : steps) {
    ASSERT_TRUE(m.admissible);
    for (Eigen::Index k = 0; k < m.branches.cols(); ++k) {
      EXPECT_LE(m.branches(0, k), m.branches(1, k)) << "step " << m.step << " mode " << k;
      EXPECT_LE(m.branches(1, k), m.branches(2, k)) << "step " << m.step << " mode " << k;
      EXPECT_GT(m.branches(1, k), m.e_abs[k]) << "step " << m.step << " mode " << k;
    }
  }
}

// --- sweeps ---------------------------------------------------------------

TEST(Sweep, SingleValueMatchesScenario) {
  const ScenarioConfig cfg = parse_config(small_config());
  const SweepReport rep = run_sweep(cfg, SweepAxis::kEta, {cfg.eta_post});
  ASSERT_EQ(rep.runs.size(), 1u);
  EXPECT_EQ(to_csv(rep.runs[0].records), to_csv(run_scenario(cfg).records));
  EXPECT_EQ(rep.cells.size(), cfg.optimizers.size());
}

TEST(Sweep, EmptyValuesRejected) {
  EXPECT_THROW(run_sweep(parse_config(small_config()), SweepAxis::kRho, {}), InvalidInput);
}

TEST(Sweep, EtaGridShowsQuadraticFirstStepError) {
  const std::vector<double> grid{-4e-3, -2e-3, -1e-3, -5e-4};
  auto j = small_config();
  j["post_steps"] = 1;
  const SweepReport rep = run_sweep(parse_config(j), SweepAxis::kEta, grid);
  for (const std::string tag : {"GD", "SAM_neg", "SAM_pos"}) {
    std::vector<double> errs;
    for (const auto& c : rep.cells)
      if (c.optimizer == tag) errs.push_back(c.first_err_g);
    ASSERT_EQ(errs.size(), grid.size());
    for (double ratio : consecutive_ratios(errs)) {
      EXPECT_GE(ratio, 3.0) << tag;
      EXPECT_LE(ratio, 5.0) << tag;
    }
  }
}

TEST(Sweep, RhoGridOrdersModalMagnitudes) {
  auto j = small_config();
  j["eta_post"] = -1e-3;
  j["post_steps"] = 20;
  j["optimizers"] = nlohmann::json::parse(R"([{"name": "SAM", "optimizer": "SAM_FULL", "rho": 0.01}])");
  const ScenarioConfig cfg = parse_config(j);
  const std::vector<double> rhos{-0.02, -0.01, 0.0, 0.01, 0.02};
  const SweepReport rep = run_sweep(cfg, SweepAxis::kRho, rhos);
  ASSERT_EQ(rep.cells.size(), rhos.size());
  const Eigen::Index modes = rep.cells[0].final_e_abs.size();
  // Final refreshed-basis magnitudes are strictly monotone in rho, mode by mode.
  for (Eigen::Index k = 0; k < modes; ++k) {
    const double first_diff = rep.cells[1].final_e_abs[k] - rep.cells[0].final_e_abs[k];
    for (std::size_t i = 1; i < rep.cells.size(); ++i) {
      const double diff = rep.cells[i].final_e_abs[k] - rep.cells[i - 1].final_e_abs[k];
      EXPECT_GT(diff * first_diff, 0.0) << "rho " << rhos[i] << " mode " << k;
    }
  }
  // One step from the shared post-SFT state grows with rho in the frozen basis.
  auto first_step = [&](std::size_t cell) {
    for (const auto& r : rep.runs[cell].records)
      if (r.step == cfg.sft_epochs + 1) return Vector(r.e_frozen.cwiseAbs());
    return Vector();
  };
  for (std::size_t i = 1; i < rhos.size(); ++i) {
    const Vector lo = first_step(i - 1);
    const Vector hi = first_step(i);
    ASSERT_EQ(lo.size(), modes);
    for (Eigen::Index k = 0; k < modes; ++k) EXPECT_LT(lo[k], hi[k]) << "rho " << rhos[i] << " mode " << k;
  }
}

TEST(Sweep, AxisParsing) {
  EXPECT_EQ(parse_axis("rho"), SweepAxis::kRho);
  EXPECT_EQ(parse_axis("eta"), SweepAxis::kEta);
  EXPECT_THROW(parse_axis("beta"), InvalidInput);
}

// --- CSV ------------------------------------------------------------------

TEST(Csv, HeaderIsExact) {
  const auto cols = csv_columns(3);
  std::string header;
  for (std::size_t i = 0; i < cols.size(); ++i) header += (i ? "," : "") + cols[i];
  EXPECT_EQ(header,
            "step,phase,optimizer,p_0,p_1,p_2,g_0,g_1,g_2,e_frozen_1,e_frozen_2,e_refreshed_1,e_refreshed_2,"
            "lambda_1,lambda_2,alpha_0,alpha_1,alpha_2,y_star,tau,delta_bin,feasible,err_w,err_z,err_g");
}

TEST(Csv, ColumnCountFollowsHeaderLayout) {
  for (Eigen::Index v : {2, 3, 5, 8}) EXPECT_EQ(csv_columns(v).size(), std::size_t(10 + 3 * v + 3 * (v - 1)));
}

TEST(Csv, OneRecordGivesTwoLines) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  const std::string text = to_csv({r.records.front()});
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Csv, EmptyInputRejected) { EXPECT_THROW(to_csv({}), InvalidInput); }

TEST(Csv, RoundTripReproducesValuesExactly) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  const auto rows = parse_csv(to_csv(r.records));
  ASSERT_EQ(rows.size(), r.records.size() + 1);
  const std::size_t ncols = rows[0].size();
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    const auto& row = rows[i + 1];
    ASSERT_EQ(row.size(), ncols);
    EXPECT_EQ(std::stoi(row[0]), rec.step);
    EXPECT_EQ(row[1], to_string(rec.phase));
    EXPECT_EQ(row[2], rec.optimizer);
    std::size_t c = 3;
    auto check = [&](const Vector& v) {
      for (Eigen::Index k = 0; k < v.size(); ++k, ++c) {
        const double parsed = parse_double(row[c]);
        if (std::isnan(v[k])) EXPECT_TRUE(std::isnan(parsed));
        else EXPECT_EQ(parsed, v[k]) << rows[0][c];
      }
    };
    check(rec.probs);
    check(rec.residual);
    check(rec.e_frozen);
    check(rec.e_refreshed);
    check(rec.eigenvalues);
    check(rec.alphas.alpha);
    EXPECT_EQ(std::stol(row[c++]), rec.top2.y_star);
    EXPECT_EQ(parse_double(row[c++]), rec.top2.tau);
    EXPECT_EQ(parse_double(row[c++]), rec.top2.delta_bin);
    EXPECT_EQ(row[c++], rec.top2.feasible ? "1" : "0");
    for (double x : {rec.err_w, rec.err_z, rec.err_g}) {
      const double parsed = parse_double(row[c++]);
      if (std::isnan(x)) EXPECT_TRUE(std::isnan(parsed));
      else EXPECT_EQ(parsed, x);
    }
  }
}

TEST(Csv, NumberFormatting) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(format_number(-std::nan("")), "nan");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(-2.5e-300), "-2.5e-300");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.33333333333333331");
}

TEST(Csv, UnwritablePathRaises) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  EXPECT_THROW(emit_csv(r.records, "/nonexistent-dir/out.csv"), IoError);
}

// --- SVG ------------------------------------------------------------------

/// Tag-balance parse: one root element and every open tag closed in order.
bool well_formed(const std::string& svg, std::string& root) {
  std::vector<std::string> stack;
  int roots = 0;
  std::size_t pos = 0;
  while ((pos = svg.find('<', pos)) != std::string::npos) {
    const std::size_t end = svg.find('>', pos);
    if (end == std::string::npos) return false;
    std::string tag = svg.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty()) {
      ++roots;
      root = name;
    }
    if (!self_closing) stack.push_back(name);
    else if (stack.empty()) return false;
  }
  return stack.empty() && roots == 1;
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

TEST(Svg, ProbsHasThreePolylinesPerOptimizer) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  const std::string svg = to_svg(r.records, PlotQuantity::kProbs);
  EXPECT_EQ(count_of(svg, "<polyline"), 9u);
  std::string root;
  EXPECT_TRUE(well_formed(svg, root));
  EXPECT_EQ(root, "svg");
  for (const char* label : {">p_0<", ">p_1<", ">p_2<"}) EXPECT_EQ(count_of(svg, label), 3u);
}

TEST(Svg, ModalAndAlphaSelectors) {
  const ScenarioResult r = run_scenario(parse_config(small_config()));
  const std::string modal = to_svg(r.records, PlotQuantity::kModal);
  EXPECT_EQ(count_of(modal, "<polyline"), 6u);
  EXPECT_NE(modal.find(">e_refreshed_1<"), std::string::npos);
  const std::string alphas = to_svg(r.records, PlotQuantity::kAlphas);
  EXPECT_EQ(count_of(alphas, "<polyline"), 9u);
  std::string root;
  EXPECT_TRUE(well_formed(modal, root));
  EXPECT_TRUE(well_formed(alphas, root));
}

TEST(Svg, EmptyInputRaisesAndWritesNothing) {
  const auto path = std::filesystem::temp_directory_path() / "logitdyn_empty_test.svg";
  std::filesystem::remove(path);
  EXPECT_THROW(emit_svg({}, PlotQuantity::kProbs, path.string()), InvalidInput);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(Svg, SelectorParsing) {
  EXPECT_EQ(parse_plot_quantity("modal"), PlotQuantity::kModal);
  EXPECT_THROW(parse_plot_quantity("loss"), InvalidInput);
}

}  // namespace
}  // namespace logitdyn
