// Acceptance harness: one PASS/FAIL line per criterion, reports as JSON.
// Usage: treatybid_acceptance [output_dir] [--only N[,N...]]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "../common/checks.hpp"
#include "treatybid/experiments/studies.hpp"
#include "treatybid/io/outputs.hpp"

using namespace treatybid;
using namespace treatybid::experiments;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig desk() { return default_config(); }

fs::path g_out;

void save(const std::string& name, const json& j) { io::write_json(j, g_out / name); }

Outcome c1_learning_beats_random() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = compare_learning_to_random(desk());
  const double secs = elapsed(t0);
  save("c1_learning_vs_random.json", rep.to_json());
  const double dm = risk::mean(rep.marl_reward), dr = risk::mean(rep.random_reward);
  const bool pass = dm > dr && rep.welch.p_value < 0.01 && secs <= 600.0 && rep.marl_reward.size() == 5;
  return {pass, "marl=" + num(dm) + " random=" + num(dr) + " welch_p=" + num(rep.welch.p_value) +
                    " seconds=" + num(secs)};
}

Outcome c2_baseline_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = run_baseline_tournament(desk(), {Strategy::marl, Strategy::actuarial, Strategy::random});
  const double secs = elapsed(t0);
  save("c2_tournament.json", rep.to_json());
  const double m = rep.row(Strategy::marl).column_means[0];
  const double a = rep.row(Strategy::actuarial).column_means[0];
  const double r = rep.row(Strategy::random).column_means[0];
  const double p_ma = rep.pair(Strategy::marl, Strategy::actuarial).welch.p_value;
  const double p_ar = rep.pair(Strategy::actuarial, Strategy::random).welch.p_value;
  const double p_mr = rep.pair(Strategy::marl, Strategy::random).welch.p_value;
  const bool pass = m >= a && a >= r && p_ma < 0.05 && p_ar < 0.05 && p_mr < 0.05 && secs <= 900.0;
  return {pass, "profit marl=" + num(m) + " actuarial=" + num(a) + " random=" + num(r) + " p(m,a)=" + num(p_ma) +
                    " p(a,r)=" + num(p_ar) + " p(m,r)=" + num(p_mr) + " seconds=" + num(secs)};
}

Outcome c3_lambda_monotonicity() {
  RunConfig c = desk();
  c.study.lambda_seeds = 3;
  const auto rep = sweep_lambda(c, {0.1, 10.0});
  save("c3_lambda_sweep.json", rep.to_json());
  std::string detail;
  bool pass = rep.cells.size() == 2 && rep.profit_welch.has_value() && rep.cvar_welch.has_value();
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    const double mp = median(rep.cells[i].profit), mc = median(rep.cells[i].cvar95);
    detail += "lambda=" + num(rep.cells[i].lambda) + " median_profit=" + num(mp) + " median_cvar95=" + num(mc) + " ";
    if (i > 0) {
      pass = pass && mc <= median(rep.cells[i - 1].cvar95) && mp <= median(rep.cells[i - 1].profit);
    }
  }
  if (rep.cvar_welch) detail += "welch_cvar_t=" + num(rep.cvar_welch->statistic);
  return {pass, detail};
}

Outcome c4_stress_degradation() {
  std::string detail;
  bool pass = true;
  for (auto kind : {market::StressKind::catastrophe, market::StressKind::capacity}) {
    market::StressRegime regime;
    regime.kind = kind;
    const auto rep = run_stress_study(desk(), regime);
    save(std::string("c4_stress_") + market::to_string(kind) + ".json", rep.to_json());
    const auto& t = rep.reward_test;
    const auto& b = rep.reward_bootstrap;
    const bool ok = rep.baseline.size() == 10 && t.mean_difference < 0.0 && t.p_value < 0.05 && b.ci_high < 0.0;
    pass = pass && ok;
    detail += std::string(market::to_string(kind)) + ": dR=" + num(t.mean_difference) + " p=" + num(t.p_value) +
              " ci=[" + num(b.ci_low) + "," + num(b.ci_high) + "] ";
  }
  return {pass, detail};
}

Outcome c5_ctde_ablation() {
  const auto rep = ablation_ctde(desk());
  save("c5_ablation.json", rep.to_json());
  const AblationRow* ctde = nullptr;
  const AblationRow* local = nullptr;
  const AblationRow* rnd = nullptr;
  for (const auto& r : rep.rows) {
    if (r.algorithm == Algorithm::mappo) ctde = &r;
    if (r.algorithm == Algorithm::mappo_local) local = &r;
    if (r.algorithm == Algorithm::random) rnd = &r;
  }
  if (!ctde || !local || !rnd) return {false, "ablation rows missing"};
  const bool pass = ctde->seeds.size() == 5 && ctde->median_final_std <= local->median_final_std &&
                    !rnd->applicable && rnd->verdict() == "N/A";
  return {pass, "ctde_final_std=" + num(ctde->median_final_std) + " local_final_std=" +
                    num(local->median_final_std) + " random=" + rnd->verdict()};
}

Outcome c6_gradients() {
  const auto r = checks::gradient_check(100);
  return {r.pairs == 100 && r.max_relative_error < 1e-4 && r.seconds < 30.0,
          "pairs=" + std::to_string(r.pairs) + " max_rel_err=" + num(r.max_relative_error) +
              " seconds=" + num(r.seconds)};
}

Outcome c7_cvar() {
  const auto o = checks::cvar_oracle_check(1000);
  const auto c = checks::cvar_coherence_check(10000);
  const std::size_t fails =
      c.translation_failures + c.homogeneity_failures + c.monotonicity_failures + c.mean_dominance_failures;
  return {o.sets == 1000 && o.mismatches == 0 && c.cases == 10000 && fails == 0,
          "oracle_mismatches=" + std::to_string(o.mismatches) + "/" + std::to_string(o.sets) +
              " coherence_failures=" + std::to_string(fails) + "/" + std::to_string(c.cases)};
}

Outcome c8_friction() {
  const auto rt = checks::friction_round_trip(100000);
  const auto inc = checks::incumbent_win_rate(100000, 5, 0.05);
  const bool pass = rt.placements == 100000 && rt.unsound == 0 && rt.tamper_accepted == 0 &&
                    inc.model_rate > 1.0 / 5.0 && std::abs(inc.model_rate - inc.oracle_rate) <= 0.01;
  return {pass, "unsound=" + std::to_string(rt.unsound) + " tamper_accepted=" + std::to_string(rt.tamper_accepted) +
                    " last_looks=" + std::to_string(rt.last_looks) + " incumbent_rate=" + num(inc.model_rate) +
                    " oracle_rate=" + num(inc.oracle_rate)};
}

Outcome c9_stats() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t n = 0;
  for (const auto& f : checks::stats_fixtures()) {
    ++n;
    if (!(f.abs_error() <= worst)) {
      worst = f.abs_error();
      worst_name = f.name;
    }
  }
  return {n > 0 && worst < 1e-9, "fixtures=" + std::to_string(n) + " max_abs_err=" + num(worst) + " (" + worst_name + ")"};
}

Outcome c10_reproducibility() {
  const auto c = checks::small_run(77, 200);
  Trainer a(c), b(c);
  a.train_to_end();
  b.train_to_end();
  const bool csv_same = checks::metrics_csv(a.metrics()) == checks::metrics_csv(b.metrics());
  const auto r = checks::checkpoint_resume(c, 90);
  return {csv_same && r.metrics_identical && r.checkpoints_identical,
          std::string("csv_identical=") + (csv_same ? "yes" : "no") +
              " resume_metrics_identical=" + (r.metrics_identical ? "yes" : "no") +
              " resume_checkpoint_identical=" + (r.checkpoints_identical ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  g_out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      g_out = a;
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"learning beats random", c1_learning_beats_random},
      {"baseline ordering", c2_baseline_ordering},
      {"lambda monotonicity", c3_lambda_monotonicity},
      {"stress degradation sign", c4_stress_degradation},
      {"CTDE ablation ordering", c5_ctde_ablation},
      {"gradient correctness", c6_gradients},
      {"CVaR oracle equivalence", c7_cvar},
      {"friction mechanics", c8_friction},
      {"statistical kernel", c9_stats},
      {"reproducibility and persistence", c10_reproducibility},
  };
  int failures = 0;
  json summary = json::array();
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first << "): " << o.detail
              << " [" << num(elapsed(t0)) << "s]" << std::endl;
    summary.push_back({{"criterion", id}, {"name", criteria[k].first}, {"pass", o.pass}, {"detail", o.detail}});
  }
  save("acceptance_summary.json", summary);
  return failures == 0 ? 0 : 1;
}
