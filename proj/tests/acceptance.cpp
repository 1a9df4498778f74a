// Acceptance suite. Each criterion prints exactly one line:
//   criterion N: PASS|FAIL -- <name> (<detail>)
// Run the binary directly to see the lines; ctest treats any failed
// criterion as a failed test.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "stagesched/executor.hpp"
#include "stagesched/instance_gen.hpp"
#include "stagesched/io.hpp"
#include "stagesched/planner.hpp"
#include "stagesched/predictor.hpp"
#include "stagesched/solver.hpp"
#include "testutil.hpp"

using namespace stagesched;
using testutil::run_cli;
using testutil::slurp;
using testutil::small3x3_instance;
using testutil::TempDir;

namespace {

constexpr std::uint64_t kSuiteSeed = 2026;

struct Criterion {
  bool ok = true;
  std::string detail;

  void check(bool condition, const std::string& label) {
    if (!condition) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + label;
    }
  }
  void note(const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
  }
};

void run_criterion(int id, const std::string& name, const std::function<void(Criterion&)>& body) {
  Criterion c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.ok = false;
    c.note(std::string("exception: ") + e.what());
  }
  std::cout << "criterion " << id << ": " << (c.ok ? "PASS" : "FAIL") << " -- " << name
            << (c.detail.empty() ? "" : " (" + c.detail + ")") << std::endl;
  CHECK(c.ok);
}

// --- artifact builders shared by the criteria and the determinism check ----

std::string golden_artifacts() {
  const auto wi = small3x3_instance();
  SolverConfig cfg;
  cfg.mode = SolverConfig::Mode::exact;
  const auto result = solve(wi, cfg);
  const auto greedy = greedy_plans(wi);
  std::string out = serialize_schedule_csv(result.schedule);
  out += "status=" + std::string(to_string(result.status)) + "\n";
  for (const auto& [job, machine] : greedy.assignment) out += job + "->" + machine + "\n";
  out += "greedy=" + std::to_string(greedy.predicted_makespan) + "\n";
  for (const auto& plan : greedy.plans) out += serialize_plan(plan);
  return out;
}

std::string oracle_equivalence_artifacts(bool* all_match) {
  InstanceGenParams params;  // N, M, K in 1..3, durations 1..9 s
  std::string out;
  if (all_match) *all_match = true;
  for (int i = 0; i < 50; ++i) {
    const auto wi =
        make_random_instance(derive_seed(kSuiteSeed, "c2:" + std::to_string(i)), params);
    SolverConfig cfg;
    cfg.mode = SolverConfig::Mode::exact;
    const auto result = solve(wi, cfg);
    const Ms oracle = brute_force_oracle(wi);
    if (all_match && (result.status != SolverStatus::optimal ||
                      result.schedule.makespan != oracle ||
                      !check_schedule(wi, result.schedule).ok()))
      *all_match = false;
    out += std::to_string(i) + "," + std::to_string(result.schedule.makespan) + "," +
           std::to_string(oracle) + "\n";
  }
  return out;
}

struct DominanceStats {
  int instances = 0;
  int proven_optimal = 0;
  int dominance_failures = 0;
  int plan_semantics_failures = 0;
  double ratio_sum = 0.0;
};

std::string dominance_artifacts(DominanceStats* stats) {
  InstanceGenParams params;
  params.max_jobs = 5;
  params.max_machines = 4;
  params.max_stages = 2;
  DominanceStats local;
  std::string out;
  for (int i = 0; i < 100; ++i) {
    const auto wi =
        make_random_instance(derive_seed(kSuiteSeed, "c3:" + std::to_string(i)), params);
    ++local.instances;
    const auto result = solve(wi, SolverConfig{});
    const auto greedy = greedy_plans(wi);
    const auto dynamic = dynamic_run_simulated(wi, 0, PerturbationModel::none());
    const auto plans = compile_fjsp_plans(wi, result.schedule);
    const auto fjsp_trace = simulate(plans, wi, PerturbationModel::none());

    if (fjsp_trace.makespan != result.schedule.makespan) ++local.plan_semantics_failures;
    if (result.status == SolverStatus::optimal) {
      ++local.proven_optimal;
      if (result.schedule.makespan > greedy.predicted_makespan) ++local.dominance_failures;
      if (result.schedule.makespan > dynamic.trace.makespan) ++local.dominance_failures;
      const auto greedy_trace = simulate(greedy.plans, wi, PerturbationModel::none());
      local.ratio_sum += static_cast<double>(greedy_trace.makespan) /
                         static_cast<double>(fjsp_trace.makespan);
    }
    out += std::to_string(i) + "," + std::to_string(greedy.predicted_makespan) + "," +
           std::to_string(dynamic.trace.makespan) + "," +
           std::to_string(result.schedule.makespan) + "," + to_string(result.status) + "," +
           std::to_string(fjsp_trace.makespan) + "\n";
  }
  if (stats) *stats = local;
  return out;
}

std::string perturbation_artifacts(int* violation_count) {
  InstanceGenParams params;
  params.max_jobs = 4;
  params.max_machines = 3;
  params.max_stages = 3;
  int violations = 0;
  std::string out;
  for (int i = 0; i < 500; ++i) {
    const auto wi =
        make_random_instance(derive_seed(kSuiteSeed, "c5:" + std::to_string(i)), params);
    const auto result = solve(wi, SolverConfig{});
    const auto plans = compile_fjsp_plans(wi, result.schedule);
    const auto perturb = PerturbationModel::uniform_factor(
        0.5, 2.0, derive_seed(kSuiteSeed, "c5f:" + std::to_string(i)));
    const auto trace = simulate(plans, wi, perturb);  // throws on deadlock
    if (!check_trace(trace).ok()) ++violations;
    out += serialize_trace_csv(trace);
  }
  if (violation_count) *violation_count = violations;
  return out;
}

TrainingTable synthetic_table(bool noise) {
  // duration = 2.5 * size_mb + 0.01 * bases, optionally with a U(0.9, 1.1)
  // multiplicative factor; 200 rows, the full canonical feature set.
  Rng rng(derive_seed(kSuiteSeed, noise ? "c6-noisy" : "c6-clean"));
  TrainingTable t;
  t.feature_names = {"size_mb",          "avg_read_length",    "avg_insert_size",
                     "spots",            "bases",              "unique_reads",
                     "pct_duplicates",   "per_base_quality",   "per_base_content",
                     "per_base_n_content", "per_seq_gc_content", "overrepresented_reads"};
  for (int i = 0; i < 200; ++i) {
    TrainingRow row;
    row.machine_type = "gpuA";
    row.stage = 1;
    FeatureVector f;
    f["size_mb"] = rng.uniform(100, 5000);
    f["avg_read_length"] = rng.uniform(90, 151);
    f["avg_insert_size"] = rng.uniform(300, 500);
    f["spots"] = rng.uniform(1e6, 1e8);
    f["bases"] = rng.uniform(1e5, 5e5);
    f["unique_reads"] = rng.uniform(1e5, 1e6);
    f["pct_duplicates"] = rng.uniform(0, 100);
    f["per_base_quality"] = rng.uniform(30, 38);
    f["per_base_content"] = rng.uniform(22, 28);
    f["per_base_n_content"] = rng.uniform(0, 0.5);
    f["per_seq_gc_content"] = rng.uniform(38, 45);
    f["overrepresented_reads"] = rng.uniform(0, 3);
    row.features = f;
    double duration = 2.5 * f["size_mb"] + 0.01 * f["bases"];
    if (noise) duration *= rng.uniform(0.9, 1.1);
    row.duration_ms = std::max<Ms>(1, static_cast<Ms>(std::llround(duration)));
    t.rows.push_back(row);
  }
  return t;
}

std::string predictor_artifacts(double* linear_r2, double* forest_r2) {
  const auto clean = synthetic_table(false);
  const auto noisy = synthetic_table(true);
  const auto linear_metrics =
      evaluate_kfold(clean, ModelKind::linear, Hyperparams{}, 10, derive_seed(kSuiteSeed, "c6l"));
  const auto forest_metrics = evaluate_kfold(noisy, ModelKind::tree_ensemble, Hyperparams{}, 10,
                                             derive_seed(kSuiteSeed, "c6f"));
  if (linear_r2) *linear_r2 = linear_metrics.begin()->second.r2;
  if (forest_r2) *forest_r2 = forest_metrics.begin()->second.r2;

  const auto model =
      train(noisy, ModelKind::tree_ensemble, Hyperparams{}, derive_seed(kSuiteSeed, "c6m"));
  char line[128];
  std::snprintf(line, sizeof(line), "linear_r2=%.9f forest_r2=%.9f\n",
                linear_metrics.begin()->second.r2, forest_metrics.begin()->second.r2);
  return serialize_model(model) + line;
}

}  // namespace

TEST_CASE("acceptance criterion 1") {
  run_criterion(1, "golden small-instance reproduction", [](Criterion& c) {
    Stopwatch sw;
    const auto wi = small3x3_instance();
    SolverConfig cfg;
    cfg.mode = SolverConfig::Mode::exact;
    const auto result = solve(wi, cfg);
    c.check(result.schedule.makespan == 8000, "fjsp makespan 8000 ms");
    c.check(result.status == SolverStatus::optimal, "fjsp status optimal");
    c.check(check_schedule(wi, result.schedule).ok(), "schedule passes the checker");

    const auto greedy = greedy_plans(wi);
    c.check(greedy.assignment.at("J2") == "m1", "greedy J2->m1");
    c.check(greedy.assignment.at("J3") == "m2", "greedy J3->m2");
    c.check(greedy.assignment.at("J1") == "m3", "greedy J1->m3");
    c.check(greedy.predicted_makespan == 10000, "greedy predicted makespan 10000 ms");
    c.check(sw.elapsed_ms() < 1000, "runtime under 1 s");
  });
}

TEST_CASE("acceptance criterion 2") {
  run_criterion(2, "exact solver equals the brute-force oracle on 50 instances",
                [](Criterion& c) {
                  Stopwatch sw;
                  bool all_match = false;
                  oracle_equivalence_artifacts(&all_match);
                  c.check(all_match, "makespan equality with proven optimality in every case");
                  const Ms elapsed = sw.elapsed_ms();
                  c.check(elapsed < 60'000, "runtime under 60 s");
                  c.note("elapsed " + std::to_string(elapsed) + " ms");
                });
}

TEST_CASE("acceptance criterion 3") {
  run_criterion(3, "fjsp dominates greedy and dynamic on 100 instances", [](Criterion& c) {
    DominanceStats stats;
    dominance_artifacts(&stats);
    c.check(stats.dominance_failures == 0, "fjsp <= greedy and fjsp <= dynamic where optimal");
    c.check(stats.proven_optimal > 0, "optimality proven on at least one instance");
    const double avg_ratio = stats.ratio_sum / stats.proven_optimal;
    c.check(avg_ratio >= 1.0, "average simulated fjsp-vs-greedy ratio >= 1.0");
    char note[160];
    std::snprintf(note, sizeof(note),
                  "observed avg greedy/fjsp ratio %.3f over %d/%d proven-optimal instances",
                  avg_ratio, stats.proven_optimal, stats.instances);
    c.note(note);
  });
}

TEST_CASE("acceptance criterion 4") {
  run_criterion(4, "zero-perturbation simulation equals the schedule makespan exactly",
                [](Criterion& c) {
                  DominanceStats stats;
                  dominance_artifacts(&stats);
                  c.check(stats.plan_semantics_failures == 0,
                          "simulated makespan == schedule makespan on all 100 instances");
                });
}

TEST_CASE("acceptance criterion 5") {
  run_criterion(5, "perturbed execution stays precedence- and exclusivity-safe",
                [](Criterion& c) {
                  int violations = -1;
                  perturbation_artifacts(&violations);  // deadlock would throw
                  c.check(violations == 0, "zero trace violations over 500 seeded cases");
                });
}

TEST_CASE("acceptance criterion 6") {
  run_criterion(6, "predictor quality on synthetic stage times", [](Criterion& c) {
    Stopwatch sw;
    double linear_r2 = 0.0, forest_r2 = 0.0;
    predictor_artifacts(&linear_r2, &forest_r2);
    c.check(linear_r2 >= 0.999, "linear 10-fold R^2 >= 0.999 on noiseless data");
    c.check(forest_r2 >= 0.85, "tree-ensemble 10-fold R^2 >= 0.85 under U(0.9,1.1) noise");
    const Ms elapsed = sw.elapsed_ms();
    c.check(elapsed < 30'000, "runtime under 30 s");
    char note[128];
    std::snprintf(note, sizeof(note), "linear R^2 %.4f, forest R^2 %.4f, %lld ms", linear_r2,
                  forest_r2, static_cast<long long>(elapsed));
    c.note(note);
  });
}

TEST_CASE("acceptance criterion 7") {
  run_criterion(7, "relative-error arithmetic reproduces the reference spot values",
                [](Criterion& c) {
                  const double a = relative_error(9860, 9729);
                  const double b = relative_error(5776, 4151);
                  c.check(std::abs(a - 1.34) < 0.01, "RE(9860, 9729) = 1.34% to two decimals");
                  c.check(std::abs(b - 39.14) < 0.01, "RE(5776, 4151) = 39.14% to two decimals");
                  c.check(relative_error(4000, 4000) == 0.0, "RE of an exact prediction is 0");
                });
}

TEST_CASE("acceptance criterion 8") {
  run_criterion(8, "real-backend file-signal protocol across two processes", [](Criterion& c) {
    Stopwatch sw;
    TempDir tmp("acceptance_real");
    const auto sync_root = tmp.path() / "sync";
    const auto plan_dir = tmp.path() / "plans";
    std::filesystem::create_directories(sync_root);
    std::filesystem::create_directories(plan_dir);

    write_text_file(plan_dir / "c8.mA.plan", "BEGIN\nEXEC j1.1\nSIGNAL j1.2\nEND\n");
    write_text_file(plan_dir / "c8.mB.plan", "BEGIN\nWAIT j1.2\nEXEC j1.2\nEND\n");
    RunManifest manifest;
    manifest.run_id = "c8";
    manifest.strategy = "fjsp";
    manifest.stages = 2;
    manifest.stage_names = {"stage1", "stage2"};
    manifest.machines = {{"mA", "t", "c8.mA.plan"}, {"mB", "t", "c8.mB.plan"}};
    save_manifest(plan_dir / "manifest.json", manifest);

    const std::string common = "run --manifest " + (plan_dir / "manifest.json").string() +
                               " --backend real --sync-root " + sync_root.string() +
                               " --command 'sleep 0.2' --poll-ms 20 --timeout-ms 30000 ";
    testutil::CmdResult ra, rb;
    std::thread ta([&] { ra = run_cli(common + "--machine mA --out " + (tmp.path() / "outA").string(), tmp.path(), "mA"); });
    std::thread tb([&] { rb = run_cli(common + "--machine mB --out " + (tmp.path() / "outB").string(), tmp.path(), "mB"); });
    ta.join();
    tb.join();
    c.check(ra.exit_code == 0, "machine A exits 0: " + ra.err);
    c.check(rb.exit_code == 0, "machine B exits 0: " + rb.err);

    if (ra.exit_code == 0 && rb.exit_code == 0) {
      const auto a = nlohmann::json::parse(slurp(tmp.path() / "outA" / "mA.summary.json"));
      const auto b = nlohmann::json::parse(slurp(tmp.path() / "outB" / "mB.summary.json"));
      const auto signal_time = a.at("signals").at(0).at("epoch_ms").get<long long>();
      const auto exec_start = b.at("execs").at(0).at("start_epoch_ms").get<long long>();
      c.check(exec_start >= signal_time, "B's EXEC starts at or after A's signal creation");
      c.check(std::filesystem::exists(sync_root / "c8" / "j1.2.done"), "signal file exists");
      c.check(std::filesystem::exists(sync_root / "c8" / "j1.3.done"),
              "terminal completion marker exists");
    }

    // WAIT with a 100 ms timeout and no signaler aborts naming the operand
    const auto timeout_sync = tmp.path() / "sync_timeout";
    std::filesystem::create_directories(timeout_sync);
    const auto rt = run_cli("run --manifest " + (plan_dir / "manifest.json").string() +
                                " --backend real --sync-root " + timeout_sync.string() +
                                " --command 'sleep 0.2' --poll-ms 20 --timeout-ms 100 " +
                                "--machine mB --out " + (tmp.path() / "outT").string(),
                            tmp.path(), "timeout");
    c.check(rt.exit_code != 0, "timed-out wait exits nonzero");
    c.check(rt.err.find("j1.2") != std::string::npos, "timeout message names the operand");

    const Ms elapsed = sw.elapsed_ms();
    c.check(elapsed < 10'000, "runtime under 10 s");
    c.note("elapsed " + std::to_string(elapsed) + " ms");
  });
}

TEST_CASE("acceptance criterion 9") {
  run_criterion(9, "reruns with identical seeds produce byte-identical artifacts",
                [](Criterion& c) {
                  TempDir tmp("acceptance_det");
                  const auto write_all = [&](const std::filesystem::path& dir) {
                    write_text_file(dir / "c1.txt", golden_artifacts());
                    write_text_file(dir / "c2.txt", oracle_equivalence_artifacts(nullptr));
                    write_text_file(dir / "c34.txt", dominance_artifacts(nullptr));
                    write_text_file(dir / "c5.txt", perturbation_artifacts(nullptr));
                    write_text_file(dir / "c6.txt", predictor_artifacts(nullptr, nullptr));
                  };
                  write_all(tmp.path() / "run1");
                  write_all(tmp.path() / "run2");
                  for (const char* name : {"c1.txt", "c2.txt", "c34.txt", "c5.txt", "c6.txt"}) {
                    const auto a = slurp(tmp.path() / "run1" / name);
                    const auto b = slurp(tmp.path() / "run2" / name);
                    c.check(!a.empty() && a == b, std::string("byte-identical ") + name);
                  }
                });
}
