/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

// Command-line driver wiring the pipeline end to end:
//   train    fit stage-time regressors from a training CSV
//   plan     build a time matrix and compile execution plans (fjsp | greedy)
//   run      execute a plan set (simulated) or one machine's plan (real)
//   dynamic  schedule-free master-worker baseline (simulated | real)
//   compare  makespan comparison table: greedy vs dynamic vs fjsp

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stagesched/executor.hpp"
#include "stagesched/instance_gen.hpp"
#include "stagesched/io.hpp"
#include "stagesched/planner.hpp"
#include "stagesched/predictor.hpp"
#include "stagesched/solver.hpp"

namespace fs = std::filesystem;
using namespace stagesched;

namespace {

PerturbationModel parse_perturbation(const std::string& spec, std::uint64_t seed) {
  if (spec == "none" || spec.empty()) return PerturbationModel::none();
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "uniform") {
    const auto parts = detail::split(args, ',');
    double lo = 0.0, hi = 0.0;
    if (parts.size() != 2 || !detail::parse_double(parts[0], lo) ||
        !detail::parse_double(parts[1], hi))
      throw Error("bad perturbation spec '" + spec + "', expected uniform:LO,HI");
    return PerturbationModel::uniform_factor(lo, hi, seed);
  }
  if (kind == "lognormal") {
    double sigma = 0.0;
    if (!detail::parse_double(args, sigma))
      throw Error("bad perturbation spec '" + spec + "', expected lognormal:SIGMA");
    return PerturbationModel::lognormal(sigma, seed);
  }
  throw Error("unknown perturbation kind '" + kind + "'");
}

std::vector<std::string> stage_names_for(int stages, const std::string& stage_mode) {
  if (stage_mode == "one_stage") return {"full"};
  if (stage_mode == "two_stage") return {"align", "call"};
  std::vector<std::string> names;
  for (int q = 1; q <= stages; ++q) names.push_back("stage" + std::to_string(q));
  return names;
}

ModelKind parse_kind(const std::string& kind) {
  if (kind == "tree_ensemble") return ModelKind::tree_ensemble;
  if (kind == "linear") return ModelKind::linear;
  throw Error("unknown model kind '" + kind + "', expected tree_ensemble or linear");
}

struct TrainOptions {
  std::string table;
  std::string kind = "tree_ensemble";
  Hyperparams hp;
  int kfold = 10;
  std::uint64_t seed = 0;
  bool mean_impute = false;
  std::string out = "out";
};

int cmd_train(const TrainOptions& opt) {
  const auto table = ingest_training_table(opt.table);
  const ModelKind kind = parse_kind(opt.kind);
  auto model = train(table, kind, opt.hp, opt.seed);
  model.mean_impute = opt.mean_impute;

  const fs::path out(opt.out);
  save_model(out / "model.json", model);

  nlohmann::json metrics_doc = nlohmann::json::object();
  std::string text = "group                          r2         mse_s2       mae_s\n";
  if (opt.kfold >= 2) {
    const auto metrics = evaluate_kfold(table, kind, opt.hp, opt.kfold, opt.seed);
    for (const auto& [key, m] : metrics) {
      const std::string label = key.first + ":" + std::to_string(key.second);
      metrics_doc[label] = {{"r2", m.r2}, {"mse", m.mse}, {"mae", m.mae}};
      char line[160];
      std::snprintf(line, sizeof(line), "%-28s %9.4f %12.4f %11.4f\n",
                    group_label(key).c_str(), m.r2, m.mse, m.mae);
      text += line;
    }
  } else {
    text += "(cross validation skipped: --kfold < 2)\n";
  }
  write_text_file(out / "metrics.json", metrics_doc.dump(2) + "\n");
  write_text_file(out / "metrics.txt", text);

  std::cout << "trained " << to_string(kind) << " model with " << model.groups.size()
            << " group(s); wrote " << (out / "model.json").string() << "\n"
            << text;
  return 0;
}

struct PlanOptions {
  std::string workload;
  std::string model;
  std::string strategy = "fjsp";
  std::string mode = "auto";
  Ms time_limit_ms = 10'000;
  int stages = 0;
  std::string stage_mode;
  std::string run_id = "run";
  std::uint64_t seed = 0;
  std::string out = "out";
};

WorkloadInstance resolve_workload(const PlanOptions& opt, std::vector<std::string>& stage_names) {
  WorkloadInstance wi = load_workload(opt.workload);

  int stages = wi.stage_count();
  if (!opt.stage_mode.empty()) {
    const int mode_stages = opt.stage_mode == "one_stage" ? 1 : 2;
    if (stages > 0 && stages != mode_stages)
      throw Error("--stage-mode requests " + std::to_string(mode_stages) +
                  " stage(s) but the workload has " + std::to_string(stages));
    stages = mode_stages;
  }
  if (opt.stages > 0) {
    if (stages > 0 && stages != opt.stages)
      throw Error("--stages requests " + std::to_string(opt.stages) +
                  " but the workload has " + std::to_string(stages));
    stages = opt.stages;
  }
  stage_names = stage_names_for(stages, opt.stage_mode);

  if (!wi.times.empty()) return wi;

  if (opt.model.empty())
    throw Error("no time source: the workload carries no times and no --model was given");
  if (stages < 1) throw Error("no stage count: give --stages or --stage-mode");
  const auto model = load_model(opt.model);
  for (auto& job : wi.jobs) job.stages = stages;
  wi.times = build_time_matrix(model, wi.jobs, wi.machines, stages);
  return wi;
}

int cmd_plan(const PlanOptions& opt) {
  if (opt.strategy == "dynamic")
    throw Error("the dynamic strategy is schedule-free; use the 'dynamic' subcommand");
  if (opt.strategy != "fjsp" && opt.strategy != "greedy")
    throw Error("unknown strategy '" + opt.strategy + "', expected fjsp or greedy");

  std::vector<std::string> stage_names;
  WorkloadInstance wi = resolve_workload(opt, stage_names);
  auto report = validate_instance(wi);
  if (!report.ok()) throw Error("invalid workload:\n" + report.to_string());

  const fs::path out(opt.out);
  RunManifest manifest;
  manifest.run_id = opt.run_id;
  manifest.strategy = opt.strategy;
  manifest.stages = wi.stage_count();
  manifest.stage_names = stage_names;
  manifest.workload_file = "workload.resolved.json";

  std::vector<ExecutionPlan> plans;
  std::string status_line;
  if (opt.strategy == "fjsp") {
    SolverConfig cfg;
    cfg.time_limit_ms = opt.time_limit_ms;
    cfg.seed = derive_seed(opt.seed, "solver");
    if (opt.mode == "exact")
      cfg.mode = SolverConfig::Mode::exact;
    else if (opt.mode == "heuristic")
      cfg.mode = SolverConfig::Mode::heuristic;
    else if (opt.mode == "auto")
      cfg.mode = SolverConfig::Mode::auto_select;
    else
      throw Error("unknown solver mode '" + opt.mode + "'");

    const auto result = solve(wi, cfg);
    if (result.status == SolverStatus::infeasible_budget)
      throw Error("solver budget exhausted before any schedule was found");
    plans = compile_fjsp_plans(wi, result.schedule);
    save_schedule_csv(out / "schedule.csv", result.schedule);
    manifest.schedule_file = "schedule.csv";
    manifest.predicted_makespan_ms = result.schedule.makespan;
    manifest.solver_status = to_string(result.status);
    manifest.lower_bound_ms = result.lower_bound;
    status_line = "solver status " + manifest.solver_status + ", explored " +
                  std::to_string(result.explored_nodes) + " node(s), lower bound " +
                  std::to_string(result.lower_bound) + " ms";
  } else {
    auto greedy = greedy_plans(wi);
    plans = std::move(greedy.plans);
    manifest.predicted_makespan_ms = greedy.predicted_makespan;
    std::string assignment;
    for (const auto& [job, machine] : greedy.assignment)
      assignment += "  " + job + " -> " + machine + "\n";
    status_line = "greedy assignment:\n" + assignment;
  }

  save_workload(out / manifest.workload_file, wi);
  manifest.machines = write_plan_files(out, opt.run_id, wi, plans);
  save_manifest(out / "manifest.json", manifest);

  std::string text;
  text += "run:       " + manifest.run_id + "\n";
  text += "strategy:  " + manifest.strategy + "\n";
  text += "stages:    " + std::to_string(manifest.stages) + "\n";
  text += "predicted: " + std::to_string(manifest.predicted_makespan_ms) + " ms\n";
  text += status_line + "\n";
  write_text_file(out / "report.txt", text);
  std::cout << text;
  return 0;
}

struct RunOptions {
  std::string manifest;
  std::string backend = "simulated";
  std::string perturb = "none";
  std::uint64_t seed = 0;
  std::string machine;
  std::string sync_root;
  std::string command;
  Ms poll_ms = 1'000;
  Ms timeout_ms = 86'400'000;
  std::string out = "out";
};

int cmd_run(const RunOptions& opt) {
  const fs::path manifest_path(opt.manifest);
  const RunManifest manifest = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  const fs::path out(opt.out);

  if (opt.backend == "simulated") {
    if (manifest.workload_file.empty())
      throw Error("manifest has no workload file; cannot simulate");
    const WorkloadInstance wi = load_workload(base / manifest.workload_file);
    std::vector<ExecutionPlan> plans;
    for (const auto& m : manifest.machines)
      plans.push_back(load_plan(base / m.plan_file, m.id));

    const auto perturb = parse_perturbation(opt.perturb, derive_seed(opt.seed, "perturb"));
    const auto trace = simulate(plans, wi, perturb);
    write_text_file(out / "trace.csv", serialize_trace_csv(trace));
    const auto summary = summarize_trace(trace, manifest.run_id, manifest.strategy, "simulated",
                                         manifest.predicted_makespan_ms);
    write_text_file(out / "summary.json", serialize_summary_json(summary));
    write_text_file(out / "summary.txt", serialize_summary_text(summary));
    std::cout << serialize_summary_text(summary);
    return 0;
  }

  if (opt.backend != "real") throw Error("unknown backend '" + opt.backend + "'");
  if (opt.machine.empty()) throw Error("--machine is required with --backend real");
  if (opt.sync_root.empty()) throw Error("--sync-root is required with --backend real");
  if (opt.command.empty()) throw Error("--command is required with --backend real");

  const ManifestMachine* entry = nullptr;
  for (const auto& m : manifest.machines)
    if (m.id == opt.machine) entry = &m;
  if (!entry) throw Error("machine '" + opt.machine + "' not in manifest");

  const ExecutionPlan plan = load_plan(base / entry->plan_file, entry->id);
  const SyncNamespace sync{fs::path(opt.sync_root), manifest.run_id};
  RealExecConfig cfg;
  cfg.command_template = opt.command;
  cfg.wait_poll_ms = opt.poll_ms;
  cfg.wait_timeout_ms = opt.timeout_ms;
  cfg.stages = manifest.stages;

  const MachineTrace trace = execute_real(plan, sync, cfg);

  ExecutionTrace relative;
  for (const auto& e : trace.execs)
    relative.records.push_back({trace.machine, e.job, e.stage,
                                e.start_epoch_ms - trace.begin_epoch_ms,
                                e.end_epoch_ms - trace.begin_epoch_ms});
  detail::finalize_trace(relative);
  relative.makespan = trace.elapsed_ms();

  write_text_file(out / (opt.machine + ".trace.csv"), serialize_trace_csv(relative));
  write_text_file(out / (opt.machine + ".summary.json"), serialize_machine_trace_json(trace));
  std::string text = "machine " + opt.machine + " finished in " +
                     std::to_string(trace.elapsed_ms()) + " ms (" +
                     std::to_string(trace.execs.size()) + " stage(s), " +
                     std::to_string(trace.signals.size()) + " signal(s))\n";
  write_text_file(out / (opt.machine + ".summary.txt"), text);
  std::cout << text;
  return 0;
}

struct DynamicOptions {
  std::string workload;
  std::string model;
  std::string backend = "simulated";
  double poll_s = 30.0;
  std::string perturb = "none";
  std::uint64_t seed = 0;
  std::string run_id = "run";
  std::string sync_root;
  std::string command;
  int stages = 0;
  std::string out = "out";
};

int cmd_dynamic(const DynamicOptions& opt) {
  WorkloadInstance wi = load_workload(opt.workload);
  const fs::path out(opt.out);
  const Ms poll_ms = static_cast<Ms>(std::llround(opt.poll_s * 1000.0));

  DynamicResult result;
  std::string backend;
  if (opt.backend == "simulated") {
    backend = "simulated";
    if (wi.times.empty() && !wi.jobs.empty()) {
      if (opt.model.empty())
        throw Error("no time source: the workload carries no times and no --model was given");
      const int stages = opt.stages > 0 ? opt.stages : wi.stage_count();
      if (stages < 1) throw Error("no stage count: give --stages");
      const auto model = load_model(opt.model);
      for (auto& job : wi.jobs) job.stages = stages;
      wi.times = build_time_matrix(model, wi.jobs, wi.machines, stages);
    }
    const auto perturb = parse_perturbation(opt.perturb, derive_seed(opt.seed, "perturb"));
    result = dynamic_run_simulated(wi, poll_ms, perturb);
  } else if (opt.backend == "real") {
    backend = "real";
    if (opt.sync_root.empty()) throw Error("--sync-root is required with --backend real");
    if (opt.command.empty()) throw Error("--command is required with --backend real");
    const int stages = opt.stages > 0 ? opt.stages : std::max(1, wi.stage_count());
    const SyncNamespace sync{fs::path(opt.sync_root), opt.run_id};
    RealExecConfig cfg;
    cfg.command_template = opt.command;
    cfg.stages = stages;
    result = dynamic_run_real(wi, poll_ms, sync, cfg);
  } else {
    throw Error("unknown backend '" + opt.backend + "'");
  }

  write_text_file(out / "trace.csv", serialize_trace_csv(result.trace));
  auto summary = summarize_trace(result.trace, opt.run_id, "dynamic", backend);
  summary.assignment = result.assignment;
  summary.failed_jobs = result.failed_jobs;
  summary.partial = result.partial;
  write_text_file(out / "summary.json", serialize_summary_json(summary));
  write_text_file(out / "summary.txt", serialize_summary_text(summary));
  std::cout << serialize_summary_text(summary);
  return 0;
}

struct CompareOptions {
  std::string workload;
  std::string model;
  std::string mode = "auto";
  Ms time_limit_ms = 10'000;
  int stages = 0;
  int trials = 1;
  std::uint64_t seed = 0;
  std::string out = "out";
};

int cmd_compare(const CompareOptions& opt) {
  const fs::path out(opt.out);
  const char* header =
      "instance,jobs,machines,stages,greedy_ms,dynamic_ms,fjsp_ms,fjsp_status,"
      "speedup_vs_greedy,speedup_vs_dynamic";
  std::string csv = std::string(header) + "\n";
  std::string text;
  char line[256];

  WorkloadInstance base;
  if (opt.trials > 0) {
    PlanOptions wopt;
    wopt.workload = opt.workload;
    wopt.model = opt.model;
    wopt.stages = opt.stages;
    std::vector<std::string> names;
    base = resolve_workload(wopt, names);
    auto report = validate_instance(base);
    if (!report.ok()) throw Error("invalid workload:\n" + report.to_string());
  }

  double greedy_ratio_sum = 0.0, dynamic_ratio_sum = 0.0;
  int rows = 0;
  for (int trial = 1; trial <= opt.trials; ++trial) {
    WorkloadInstance wi;
    std::string label;
    if (trial == 1) {
      wi = base;
      label = "workload";
    } else {
      InstanceGenParams params;
      params.min_jobs = params.max_jobs = static_cast<int>(base.jobs.size());
      params.min_machines = params.max_machines = static_cast<int>(base.machines.size());
      params.min_stages = params.max_stages = std::max(1, base.stage_count());
      wi = make_random_instance(derive_seed(opt.seed, "compare:" + std::to_string(trial)),
                                params);
      label = "random-" + std::to_string(trial);
    }

    SolverConfig cfg;
    cfg.time_limit_ms = opt.time_limit_ms;
    cfg.seed = derive_seed(opt.seed, "solver:" + std::to_string(trial));
    cfg.mode = opt.mode == "exact"      ? SolverConfig::Mode::exact
               : opt.mode == "heuristic" ? SolverConfig::Mode::heuristic
                                         : SolverConfig::Mode::auto_select;

    const auto fjsp = solve(wi, cfg);
    const auto greedy = greedy_plans(wi);
    const auto dynamic = dynamic_run_simulated(wi, 0, PerturbationModel::none());

    const double vs_greedy =
        static_cast<double>(greedy.predicted_makespan) / static_cast<double>(fjsp.schedule.makespan);
    const double vs_dynamic =
        static_cast<double>(dynamic.trace.makespan) / static_cast<double>(fjsp.schedule.makespan);
    greedy_ratio_sum += vs_greedy;
    dynamic_ratio_sum += vs_dynamic;
    ++rows;

    std::snprintf(line, sizeof(line), "%s,%zu,%zu,%d,%lld,%lld,%lld,%s,%.2f,%.2f\n",
                  label.c_str(), wi.jobs.size(), wi.machines.size(), wi.stage_count(),
                  static_cast<long long>(greedy.predicted_makespan),
                  static_cast<long long>(dynamic.trace.makespan),
                  static_cast<long long>(fjsp.schedule.makespan), to_string(fjsp.status),
                  vs_greedy, vs_dynamic);
    csv += line;
  }

  if (rows > 0) {
    std::snprintf(line, sizeof(line),
                  "average speedup: %.2fx vs greedy, %.2fx vs dynamic over %d instance(s)\n",
                  greedy_ratio_sum / rows, dynamic_ratio_sum / rows, rows);
    text = csv + line;
  } else {
    text = csv + "(no trials)\n";
  }

  write_text_file(out / "comparison.csv", csv);
  write_text_file(out / "comparison.txt", text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pipeline workload scheduler: predict stage times, plan, execute, compare"};
  app.require_subcommand(1);

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "Fit stage-time regressors from a training CSV");
  train_cmd->add_option("--table", train_opt.table, "Training CSV path")->required();
  train_cmd->add_option("--kind", train_opt.kind, "Model kind: tree_ensemble | linear");
  train_cmd->add_option("--trees", train_opt.hp.trees, "Tree count");
  train_cmd->add_option("--max-depth", train_opt.hp.max_depth, "Tree depth limit");
  train_cmd->add_option("--min-leaf", train_opt.hp.min_samples_leaf, "Minimum samples per leaf");
  train_cmd->add_option("--feature-subsample", train_opt.hp.feature_subsample,
                        "Features per split (0: a third of the informative features)");
  train_cmd->add_option("--lambda", train_opt.hp.l1_lambda, "L1 penalty (linear kind)");
  train_cmd->add_option("--kfold", train_opt.kfold, "Cross-validation folds (<2 skips)");
  train_cmd->add_option("--seed", train_opt.seed, "Random seed");
  train_cmd->add_flag("--mean-impute", train_opt.mean_impute,
                      "Impute missing predict-time features with training means");
  train_cmd->add_option("--out", train_opt.out, "Output directory");

  PlanOptions plan_opt;
  auto* plan_cmd = app.add_subcommand("plan", "Generate execution plans for a workload");
  plan_cmd->add_option("--workload", plan_opt.workload, "Workload JSON path")->required();
  plan_cmd->add_option("--model", plan_opt.model, "Trained model (when the workload has no times)");
  plan_cmd->add_option("--strategy", plan_opt.strategy, "fjsp | greedy");
  plan_cmd->add_option("--mode", plan_opt.mode, "Solver mode: exact | heuristic | auto");
  plan_cmd->add_option("--time-limit-ms", plan_opt.time_limit_ms, "Solver budget");
  plan_cmd->add_option("--stages", plan_opt.stages, "Stage count when predicting times");
  plan_cmd->add_option("--stage-mode", plan_opt.stage_mode, "one_stage | two_stage");
  plan_cmd->add_option("--run-id", plan_opt.run_id, "Run identifier");
  plan_cmd->add_option("--seed", plan_opt.seed, "Random seed");
  plan_cmd->add_option("--out", plan_opt.out, "Output directory");

  RunOptions run_opt;
  auto* run_cmd = app.add_subcommand("run", "Execute plans from a manifest");
  run_cmd->add_option("--manifest", run_opt.manifest, "Manifest path")->required();
  run_cmd->add_option("--backend", run_opt.backend, "simulated | real");
  run_cmd->add_option("--perturb", run_opt.perturb,
                      "none | uniform:LO,HI | lognormal:SIGMA (simulated)");
  run_cmd->add_option("--seed", run_opt.seed, "Random seed");
  run_cmd->add_option("--machine", run_opt.machine, "Machine id (real backend, one per process)");
  run_cmd->add_option("--sync-root", run_opt.sync_root, "Shared signal directory (real)");
  run_cmd->add_option("--command", run_opt.command,
                      "Stage command template with {job} {stage} {run_id} (real)");
  run_cmd->add_option("--poll-ms", run_opt.poll_ms, "WAIT poll interval (real)");
  run_cmd->add_option("--timeout-ms", run_opt.timeout_ms, "WAIT timeout (real)");
  run_cmd->add_option("--out", run_opt.out, "Output directory");

  DynamicOptions dyn_opt;
  auto* dyn_cmd = app.add_subcommand("dynamic", "Master-worker baseline without a schedule");
  dyn_cmd->add_option("--workload", dyn_opt.workload, "Workload JSON path")->required();
  dyn_cmd->add_option("--model", dyn_opt.model, "Trained model (simulated, workload without times)");
  dyn_cmd->add_option("--backend", dyn_opt.backend, "simulated | real");
  dyn_cmd->add_option("--poll-s", dyn_opt.poll_s, "Master poll interval in seconds");
  dyn_cmd->add_option("--perturb", dyn_opt.perturb, "none | uniform:LO,HI | lognormal:SIGMA");
  dyn_cmd->add_option("--seed", dyn_opt.seed, "Random seed");
  dyn_cmd->add_option("--run-id", dyn_opt.run_id, "Run identifier");
  dyn_cmd->add_option("--sync-root", dyn_opt.sync_root, "Shared signal directory (real)");
  dyn_cmd->add_option("--command", dyn_opt.command, "Stage command template (real)");
  dyn_cmd->add_option("--stages", dyn_opt.stages, "Stage count override");
  dyn_cmd->add_option("--out", dyn_opt.out, "Output directory");

  CompareOptions cmp_opt;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare greedy, dynamic, and fjsp makespans");
  cmp_cmd->add_option("--workload", cmp_opt.workload, "Workload JSON path")->required();
  cmp_cmd->add_option("--model", cmp_opt.model, "Trained model (workload without times)");
  cmp_cmd->add_option("--mode", cmp_opt.mode, "Solver mode: exact | heuristic | auto");
  cmp_cmd->add_option("--time-limit-ms", cmp_opt.time_limit_ms, "Solver budget per instance");
  cmp_cmd->add_option("--stages", cmp_opt.stages, "Stage count when predicting times");
  cmp_cmd->add_option("--trials", cmp_opt.trials,
                      "Row count: the workload plus seeded same-shape random instances");
  cmp_cmd->add_option("--seed", cmp_opt.seed, "Random seed");
  cmp_cmd->add_option("--out", cmp_opt.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opt);
    if (plan_cmd->parsed()) return cmd_plan(plan_opt);
    if (run_cmd->parsed()) return cmd_run(run_opt);
    if (dyn_cmd->parsed()) return cmd_dynamic(dyn_opt);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
