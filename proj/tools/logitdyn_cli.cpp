// Command-line front end: simulate, sweep and verify.
//
// Exit codes: 0 success / all checks pass, 1 failed checks or runtime
// failure, 2 usage or configuration error.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "logitdyn/harness.hpp"
#include "logitdyn/verify.hpp"

namespace fs = std::filesystem;
using namespace logitdyn;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InvalidInput("--values: cannot parse '" + item + "' as a number");
    }
    require(used == item.size(), "--values: trailing characters in '" + item + "'");
    out.push_back(v);
  }
  require(!out.empty(), "--values must list at least one number");
  return out;
}

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// kappa of the first kappa-scaled SAM optimizer, if any.
std::optional<double> scaled_sam_kappa(const ScenarioConfig& cfg) {
  for (const auto& o : cfg.optimizers)
    if (o.update.uses_sam() && o.update.kappa > 0.0) return o.update.kappa;
  return std::nullopt;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool practice) {
  ScenarioConfig cfg = load_config(config_path);
  if (practice) cfg = to_practice(cfg);
  const ScenarioResult run = run_scenario(cfg);
  prepare_dir(out_dir);
  emit_csv(run.records, join(out_dir, "trajectories.csv"));
  emit_svg(run.records, PlotQuantity::kProbs, join(out_dir, "probs.svg"));
  emit_svg(run.records, PlotQuantity::kModal, join(out_dir, "modal.svg"));
  emit_svg(run.records, PlotQuantity::kAlphas, join(out_dir, "alphas.svg"));

  nlohmann::json summary;
  summary["config"] = to_json(cfg);
  summary["practice"] = practice;
  summary["mu"] = make_features(cfg).mu();
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : summarize(cfg, run, cfg.eta_post)) cells.push_back(to_json(c));
  summary["optimizers"] = cells;
  if (const auto kappa = scaled_sam_kappa(cfg); kappa && cfg.post_steps > 0) {
    int ordering = 0, growth = 0, checked = 0;
    for (const auto& m : matched_state_comparison(cfg, *kappa)) {
      if (!m.admissible) continue;
      ++checked;
      for (Eigen::Index k = 0; k < m.branches.cols(); ++k) {
        if (!(m.branches(0, k) <= m.branches(1, k) && m.branches(1, k) <= m.branches(2, k))) ++ordering;
        if (!(m.branches(1, k) > m.e_abs[k])) ++growth;
      }
    }
    summary["matched_state"] = {{"kappa", *kappa},
                                {"steps_checked", checked},
                                {"ordering_violations", ordering},
                                {"gd_growth_violations", growth}};
  }
  write_file(join(out_dir, "summary.json"), dump(summary));
  std::cout << "wrote " << run.records.size() << " records to " << out_dir << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name, const std::string& values_csv,
              const std::string& out_dir, bool practice) {
  ScenarioConfig cfg = load_config(config_path);
  if (practice) cfg = to_practice(cfg);
  const SweepAxis axis = parse_axis(axis_name);
  const std::vector<double> values = parse_values(values_csv);
  const SweepReport rep = run_sweep(cfg, axis, values);
  prepare_dir(out_dir);
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : rep.cells) cells.push_back(to_json(c));
  for (std::size_t i = 0; i < rep.runs.size(); ++i) {
    emit_csv(rep.runs[i].records, join(out_dir, "sweep_" + std::string(to_string(axis)) + "_" + std::to_string(i) + ".csv"));
  }
  const nlohmann::json summary{{"config", to_json(cfg)},
                               {"practice", practice},
                               {"axis", std::string(to_string(axis))},
                               {"values", values},
                               {"cells", cells}};
  write_file(join(out_dir, "sweep_summary.json"), dump(summary));
  std::cout << "swept " << values.size() << " values of " << to_string(axis) << " into " << out_dir << "\n";
  return 0;
}

int cmd_verify(const std::string& suite, const std::string& out_dir, const std::string& fault) {
  verify::FaultInjection inject;
  inject.hessian_sign = fault == "hessian-sign";
  const verify::SuiteResult result = verify::run_suite(suite, inject);
  prepare_dir(out_dir);
  write_file(join(out_dir, "verify_" + suite + ".json"), dump(verify::to_json(result)));
  for (const auto& r : result.reports) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.quantity << " (" << r.note << ")\n";
  }
  if (result.pass()) {
    std::cout << "verify " << suite << ": all " << result.reports.size() << " checks passed\n";
    return 0;
  }
  std::cerr << "verify " << suite << ": failing:";
  for (const auto& q : result.failing()) std::cerr << ' ' << q;
  std::cerr << "\n";
  return kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Logit-space learning dynamics of GD, SAM and logits-SAM"};
  app.require_subcommand(1);

  std::string config, out_dir = "out", axis, values, suite, fault;
  bool practice = false;

  auto* sim = app.add_subcommand("simulate", "Run a scenario and write CSV, SVG and summary JSON");
  sim->add_option("--config", config, "Scenario JSON")->required();
  sim->add_option("--out-dir", out_dir, "Output directory");
  sim->add_flag("--practice", practice, "Express the post-phase optimizers in the PRACTICE sign convention");

  auto* sweep = app.add_subcommand("sweep", "Run one scenario per value of rho or eta");
  sweep->add_option("--config", config, "Scenario JSON")->required();
  sweep->add_option("--axis", axis, "rho or eta")->required()->check(CLI::IsMember({"rho", "eta"}));
  sweep->add_option("--values", values, "Comma-separated values (THEORY convention)")->required();
  sweep->add_option("--out-dir", out_dir, "Output directory");
  sweep->add_flag("--practice", practice, "Express the post-phase optimizers in the PRACTICE sign convention");

  auto* ver = app.add_subcommand("verify", "Run invariant and oracle batteries");
  ver->add_option("--suite", suite, "geometry, dynamics, ratios, equivalence or all")
      ->required()
      ->check(CLI::IsMember(verify::suite_names()));
  ver->add_option("--out-dir", out_dir, "Output directory for the JSON report");
  ver->add_option("--inject-fault", fault, "Corrupt the main path to test the suite (hessian-sign)")
      ->check(CLI::IsMember({"hessian-sign"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(config, out_dir, practice);
    if (*sweep) return cmd_sweep(config, axis, values, out_dir, practice);
    if (*ver) return cmd_verify(suite, out_dir, fault);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
