/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "stagesched/model.hpp"

namespace stagesched {

struct SolverConfig {
  Ms time_limit_ms = 10'000;
  enum class Mode { exact, heuristic, auto_select };
  Mode mode = Mode::auto_select;
  std::uint64_t seed = 0;
  int auto_exact_max_ops = 12;  // auto mode runs exact search up to this many operations
  int heuristic_restarts = 8;
};

enum class SolverStatus { optimal, feasible, infeasible_budget };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::optimal:
      return "optimal";
    case SolverStatus::feasible:
      return "feasible";
    case SolverStatus::infeasible_budget:
      return "infeasible_budget";
  }
  return "unknown";
}

struct SolverResult {
  Schedule schedule;
  SolverStatus status = SolverStatus::feasible;
  std::uint64_t explored_nodes = 0;
  Ms lower_bound = 0;
};

namespace detail {

// Dense, id-sorted view of an instance. Indexes are positions in the sorted
// id lists; every tie-break in the solver falls back to these positions, so
// results are deterministic functions of the ids.
struct DenseInstance {
  int jobs = 0;
  int machines = 0;
  int stages = 0;
  std::vector<std::string> job_ids;
  std::vector<std::string> machine_ids;
  std::vector<Ms> durations;  // [(j * stages + q) * machines + m], q is 0-based

  static DenseInstance build(const WorkloadInstance& wi) {
    DenseInstance d;
    d.jobs = static_cast<int>(wi.jobs.size());
    d.machines = static_cast<int>(wi.machines.size());
    d.stages = wi.stage_count();
    for (const auto& j : wi.jobs) d.job_ids.push_back(j.id);
    for (const auto& m : wi.machines) d.machine_ids.push_back(m.id);
    std::sort(d.job_ids.begin(), d.job_ids.end());
    std::sort(d.machine_ids.begin(), d.machine_ids.end());
    d.durations.resize(static_cast<std::size_t>(d.jobs) * d.stages * d.machines, 0);
    for (int j = 0; j < d.jobs; ++j)
      for (int q = 0; q < d.stages; ++q)
        for (int m = 0; m < d.machines; ++m)
          d.durations[(static_cast<std::size_t>(j) * d.stages + q) * d.machines + m] =
              wi.times.at(d.job_ids[j], q + 1, d.machine_ids[m]);
    return d;
  }

  Ms dur(int j, int q, int m) const {
    return durations[(static_cast<std::size_t>(j) * stages + q) * machines + m];
  }

  int total_ops() const { return jobs * stages; }
};

struct Placement {
  int job = 0;
  int stage = 0;  // 0-based
  int machine = 0;
  Ms start = 0;
  Ms duration = 0;
};

inline Schedule placements_to_schedule(const DenseInstance& in,
                                       const std::vector<Placement>& placements) {
  Schedule s;
  for (const auto& p : placements) {
    s.assignments[in.machine_ids[p.machine]].push_back(
        {in.job_ids[p.job], p.stage + 1, p.start, p.duration});
    s.makespan = std::max(s.makespan, p.start + p.duration);
  }
  for (auto& [machine, entries] : s.assignments) {
    (void)machine;
    std::sort(entries.begin(), entries.end(),
              [](const ScheduleEntry& a, const ScheduleEntry& b) { return a.start < b.start; });
  }
  return s;
}

// Per-job suffix sums of per-stage machine minima.
inline std::vector<std::vector<Ms>> min_chain_suffix(const DenseInstance& in) {
  std::vector<std::vector<Ms>> suffix(in.jobs, std::vector<Ms>(in.stages + 1, 0));
  for (int j = 0; j < in.jobs; ++j) {
    for (int q = in.stages - 1; q >= 0; --q) {
      Ms best = std::numeric_limits<Ms>::max();
      for (int m = 0; m < in.machines; ++m) best = std::min(best, in.dur(j, q, m));
      suffix[j][q] = suffix[j][q + 1] + best;
    }
  }
  return suffix;
}

inline Ms root_lower_bound(const DenseInstance& in) {
  if (in.jobs == 0) return 0;
  const auto suffix = min_chain_suffix(in);
  Ms chain = 0;
  Ms work = 0;
  for (int j = 0; j < in.jobs; ++j) {
    chain = std::max(chain, suffix[j][0]);
    work += suffix[j][0];
  }
  return std::max(chain, ceil_div(work, in.machines));
}

// Earliest-completion-time list scheduling; ties break on (job, machine)
// index, i.e. lexicographically on ids.
inline std::vector<Placement> dispatch_ect(const DenseInstance& in) {
  std::vector<int> next_stage(in.jobs, 0);
  std::vector<Ms> job_ready(in.jobs, 0), machine_ready(in.machines, 0);
  std::vector<Placement> placements;
  placements.reserve(in.total_ops());
  for (int step = 0; step < in.total_ops(); ++step) {
    Ms best_completion = std::numeric_limits<Ms>::max();
    int best_job = -1, best_machine = -1;
    Ms best_start = 0;
    for (int j = 0; j < in.jobs; ++j) {
      const int q = next_stage[j];
      if (q == in.stages) continue;
      for (int m = 0; m < in.machines; ++m) {
        const Ms start = std::max(machine_ready[m], job_ready[j]);
        const Ms completion = start + in.dur(j, q, m);
        if (completion < best_completion ||
            (completion == best_completion &&
             (j < best_job || (j == best_job && m < best_machine)))) {
          best_completion = completion;
          best_job = j;
          best_machine = m;
          best_start = start;
        }
      }
    }
    const int q = next_stage[best_job];
    placements.push_back(
        {best_job, q, best_machine, best_start, in.dur(best_job, q, best_machine)});
    machine_ready[best_machine] = best_completion;
    job_ready[best_job] = best_completion;
    ++next_stage[best_job];
  }
  return placements;
}

inline Ms placements_makespan(const std::vector<Placement>& ps) {
  Ms mk = 0;
  for (const auto& p : ps) mk = std::max(mk, p.start + p.duration);
  return mk;
}

// Depth-first branch and bound over (machine assignment x sequencing).
// Operations are appended in nondecreasing start order with a canonical
// tie-break, so every semi-active schedule is generated exactly once; the
// bound combines committed machine ends, remaining job chains, and total
// optimistic work.
struct ExactSearch {
  const DenseInstance& in;
  std::chrono::steady_clock::time_point deadline;
  std::vector<std::vector<Ms>> suffix;
  std::vector<Ms> min_dur;  // [j * stages + q]

  std::vector<int> next_stage;
  std::vector<Ms> job_ready, machine_ready;
  Ms busy_total = 0;
  Ms remaining_min = 0;

  Ms best_makespan = std::numeric_limits<Ms>::max();
  std::vector<Placement> best, current;
  std::uint64_t nodes = 0;
  bool aborted = false;

  ExactSearch(const DenseInstance& instance, std::chrono::steady_clock::time_point stop)
      : in(instance), deadline(stop), suffix(min_chain_suffix(instance)) {
    next_stage.assign(in.jobs, 0);
    job_ready.assign(in.jobs, 0);
    machine_ready.assign(in.machines, 0);
    min_dur.resize(static_cast<std::size_t>(in.jobs) * in.stages);
    for (int j = 0; j < in.jobs; ++j)
      for (int q = 0; q < in.stages; ++q)
        min_dur[static_cast<std::size_t>(j) * in.stages + q] = suffix[j][q] - suffix[j][q + 1];
    for (int j = 0; j < in.jobs; ++j) remaining_min += suffix[j][0];
    current.reserve(in.total_ops());
  }

  Ms node_bound() const {
    Ms bound = ceil_div(busy_total + remaining_min, in.machines);
    for (int m = 0; m < in.machines; ++m) bound = std::max(bound, machine_ready[m]);
    for (int j = 0; j < in.jobs; ++j) {
      if (next_stage[j] < in.stages)
        bound = std::max(bound, job_ready[j] + suffix[j][next_stage[j]]);
    }
    return bound;
  }

  void seed_incumbent(const std::vector<Placement>& placements) {
    const Ms mk = placements_makespan(placements);
    if (mk < best_makespan) {
      best_makespan = mk;
      best = placements;
    }
  }

  void run() { dfs(-1, -1, -1, 0); }

  void dfs(Ms last_start, int last_job, int last_machine, int placed) {
    ++nodes;
    if ((nodes & 0xFFFULL) == 0 && std::chrono::steady_clock::now() > deadline) aborted = true;
    if (aborted) return;

    if (placed == in.total_ops()) {
      Ms mk = 0;
      for (int m = 0; m < in.machines; ++m) mk = std::max(mk, machine_ready[m]);
      if (mk < best_makespan) {
        best_makespan = mk;
        best = current;
      }
      return;
    }

    struct Candidate {
      Ms start;
      int job, machine;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(in.jobs) * in.machines);
    for (int j = 0; j < in.jobs; ++j) {
      if (next_stage[j] == in.stages) continue;
      for (int m = 0; m < in.machines; ++m) {
        const Ms start = std::max(machine_ready[m], job_ready[j]);
        if (start < last_start) continue;
        if (start == last_start && (j < last_job || (j == last_job && m <= last_machine)))
          continue;
        candidates.push_back({start, j, m});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      return std::tie(a.start, a.job, a.machine) < std::tie(b.start, b.job, b.machine);
    });

    for (const auto& c : candidates) {
      const int q = next_stage[c.job];
      const Ms duration = in.dur(c.job, q, c.machine);
      const Ms end = c.start + duration;
      const Ms saved_machine = machine_ready[c.machine];
      const Ms saved_job = job_ready[c.job];

      machine_ready[c.machine] = end;
      job_ready[c.job] = end;
      busy_total += duration;
      remaining_min -= min_dur[static_cast<std::size_t>(c.job) * in.stages + q];
      ++next_stage[c.job];
      current.push_back({c.job, q, c.machine, c.start, duration});

      if (node_bound() < best_makespan) dfs(c.start, c.job, c.machine, placed + 1);

      current.pop_back();
      --next_stage[c.job];
      remaining_min += min_dur[static_cast<std::size_t>(c.job) * in.stages + q];
      busy_total -= duration;
      job_ready[c.job] = saved_job;
      machine_ready[c.machine] = saved_machine;
      if (aborted) return;
    }
  }
};

// Heuristic solution encoding: a precedence-consistent operation order plus a
// machine assignment per operation. Decoding places each operation at the
// earliest feasible time.
struct HeuristicSolution {
  std::vector<int> order;   // op ids (job * stages + stage)
  std::vector<int> assign;  // op id -> machine
};

inline Ms decode_solution(const DenseInstance& in, const HeuristicSolution& sol,
                          std::vector<Placement>* out = nullptr) {
  std::vector<Ms> job_ready(in.jobs, 0), machine_ready(in.machines, 0);
  if (out) out->clear();
  Ms makespan = 0;
  for (int op : sol.order) {
    const int j = op / in.stages;
    const int q = op % in.stages;
    const int m = sol.assign[op];
    const Ms start = std::max(machine_ready[m], job_ready[j]);
    const Ms duration = in.dur(j, q, m);
    const Ms end = start + duration;
    machine_ready[m] = end;
    job_ready[j] = end;
    makespan = std::max(makespan, end);
    if (out) out->push_back({j, q, m, start, duration});
  }
  return makespan;
}

struct HeuristicSearch {
  const DenseInstance& in;
  std::chrono::steady_clock::time_point deadline;
  std::uint64_t decodes = 0;
  Ms best_makespan = std::numeric_limits<Ms>::max();
  std::vector<Placement> best;

  HeuristicSearch(const DenseInstance& instance, std::chrono::steady_clock::time_point stop)
      : in(instance), deadline(stop) {}

  bool out_of_budget() {
    return (decodes & 0xFFULL) == 0 && std::chrono::steady_clock::now() > deadline;
  }

  Ms evaluate(const HeuristicSolution& sol) {
    ++decodes;
    std::vector<Placement> placements;
    const Ms mk = decode_solution(in, sol, &placements);
    if (mk < best_makespan) {
      best_makespan = mk;
      best = std::move(placements);
    }
    return mk;
  }

  // First-improvement local search: reassign-one-operation and adjacent-swap
  // moves, repeated until a full pass yields no improvement.
  void local_search(HeuristicSolution& sol) {
    Ms current = evaluate(sol);
    bool improved = true;
    while (improved && !out_of_budget()) {
      improved = false;
      for (std::size_t idx = 0; idx < sol.order.size() && !improved; ++idx) {
        const int op = sol.order[idx];
        const int old_machine = sol.assign[op];
        for (int m = 0; m < in.machines; ++m) {
          if (m == old_machine) continue;
          sol.assign[op] = m;
          const Ms mk = evaluate(sol);
          if (mk < current) {
            current = mk;
            improved = true;
            break;
          }
          sol.assign[op] = old_machine;
        }
      }
      if (improved) continue;
      for (std::size_t i = 0; i + 1 < sol.order.size() && !improved; ++i) {
        const int a = sol.order[i], b = sol.order[i + 1];
        if (a / in.stages == b / in.stages) continue;  // keep stage order within a job
        std::swap(sol.order[i], sol.order[i + 1]);
        const Ms mk = evaluate(sol);
        if (mk < current) {
          current = mk;
          improved = true;
        } else {
          std::swap(sol.order[i], sol.order[i + 1]);
        }
      }
    }
  }

  HeuristicSolution random_solution(Rng& rng) {
    HeuristicSolution sol;
    sol.assign.resize(in.total_ops());
    for (auto& m : sol.assign) m = static_cast<int>(rng.below(in.machines));
    std::vector<int> remaining(in.jobs, in.stages);
    std::vector<int> ready_jobs;
    sol.order.reserve(in.total_ops());
    for (int step = 0; step < in.total_ops(); ++step) {
      ready_jobs.clear();
      for (int j = 0; j < in.jobs; ++j)
        if (remaining[j] > 0) ready_jobs.push_back(j);
      const int j = ready_jobs[rng.below(ready_jobs.size())];
      sol.order.push_back(j * in.stages + (in.stages - remaining[j]));
      --remaining[j];
    }
    return sol;
  }
};

inline HeuristicSolution solution_from_placements(const DenseInstance& in,
                                                  std::vector<Placement> placements) {
  std::sort(placements.begin(), placements.end(), [](const Placement& a, const Placement& b) {
    return std::tie(a.start, a.job, a.machine) < std::tie(b.start, b.job, b.machine);
  });
  HeuristicSolution sol;
  sol.assign.resize(placements.size());
  for (const auto& p : placements) {
    const int op = p.job * in.stages + p.stage;
    sol.order.push_back(op);
    sol.assign[op] = p.machine;
  }
  return sol;
}

}  // namespace detail

// Trivially computable makespan lower bound: the longest job chain under
// per-stage machine minima, or the optimistic total work spread over all
// machines, whichever is larger. Never exceeds the optimal makespan.
inline Ms lower_bound(const WorkloadInstance& wi) {
  auto report = validate_instance(wi);
  if (!report.ok())
    throw Error("invalid instance: " + report.violations.front().locus + ": " +
                report.violations.front().message);
  if (wi.jobs.empty()) return 0;
  return detail::root_lower_bound(detail::DenseInstance::build(wi));
}

// Provably optimal makespan by exhaustive enumeration of machine assignments
// and operation interleavings. Deliberately independent of solve(); capped at
// nine operations.
inline Ms brute_force_oracle(const WorkloadInstance& wi) {
  auto report = validate_instance(wi);
  if (!report.ok())
    throw Error("invalid instance: " + report.violations.front().locus + ": " +
                report.violations.front().message);
  const auto in = detail::DenseInstance::build(wi);
  const int total = in.total_ops();
  if (total > 9)
    throw Error("oracle size limit: at most 9 operations, instance has " + std::to_string(total));
  if (in.jobs == 0) return 0;

  std::vector<int> assign(total, 0);
  std::vector<int> next_stage(in.jobs, 0);
  std::vector<Ms> job_ready(in.jobs, 0), machine_ready(in.machines, 0);
  Ms best = std::numeric_limits<Ms>::max();

  std::function<void(int, Ms)> sequence = [&](int placed, Ms current_max) {
    if (current_max >= best) return;
    if (placed == total) {
      best = current_max;
      return;
    }
    for (int j = 0; j < in.jobs; ++j) {
      const int q = next_stage[j];
      if (q == in.stages) continue;
      const int m = assign[j * in.stages + q];
      const Ms start = std::max(machine_ready[m], job_ready[j]);
      const Ms end = start + in.dur(j, q, m);
      const Ms saved_machine = machine_ready[m];
      const Ms saved_job = job_ready[j];
      machine_ready[m] = end;
      job_ready[j] = end;
      ++next_stage[j];
      sequence(placed + 1, std::max(current_max, end));
      --next_stage[j];
      job_ready[j] = saved_job;
      machine_ready[m] = saved_machine;
    }
  };

  std::function<void(int)> enumerate = [&](int op) {
    if (op == total) {
      std::fill(next_stage.begin(), next_stage.end(), 0);
      std::fill(job_ready.begin(), job_ready.end(), 0);
      std::fill(machine_ready.begin(), machine_ready.end(), 0);
      sequence(0, 0);
      return;
    }
    for (int m = 0; m < in.machines; ++m) {
      assign[op] = m;
      enumerate(op + 1);
    }
  };

  enumerate(0);
  return best;
}

inline SolverResult solve(const WorkloadInstance& wi, const SolverConfig& cfg = {}) {
  if (cfg.time_limit_ms <= 0) throw Error("time_limit_ms must be positive");
  auto report = validate_instance(wi);
  if (!report.ok())
    throw Error("invalid instance: " + report.violations.front().locus + ": " +
                report.violations.front().message);

  SolverResult result;
  if (wi.jobs.empty()) {
    result.status = SolverStatus::optimal;
    result.schedule.optimality = Optimality::optimal;
    return result;
  }

  const auto in = detail::DenseInstance::build(wi);
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg.time_limit_ms);
  const Ms root_bound = detail::root_lower_bound(in);

  SolverConfig::Mode mode = cfg.mode;
  if (mode == SolverConfig::Mode::auto_select) {
    mode = in.total_ops() <= cfg.auto_exact_max_ops ? SolverConfig::Mode::exact
                                                    : SolverConfig::Mode::heuristic;
  }

  std::vector<detail::Placement> best;
  Ms best_makespan = 0;
  bool proven_optimal = false;
  std::uint64_t nodes = 0;

  if (mode == SolverConfig::Mode::exact) {
    detail::ExactSearch search(in, deadline);
    search.seed_incumbent(detail::dispatch_ect(in));
    if (search.best_makespan > root_bound) search.run();
    nodes = search.nodes;
    proven_optimal = !search.aborted;
    best = search.best;
    best_makespan = search.best_makespan;
  } else {
    detail::HeuristicSearch search(in, deadline);
    auto sol = detail::solution_from_placements(in, detail::dispatch_ect(in));
    search.local_search(sol);
    Rng rng(derive_seed(cfg.seed, "fjsp-heuristic"));
    for (int restart = 0; restart < cfg.heuristic_restarts; ++restart) {
      if (std::chrono::steady_clock::now() > deadline) break;
      auto candidate = search.random_solution(rng);
      search.local_search(candidate);
    }
    nodes = search.decodes;
    best = search.best;
    best_makespan = search.best_makespan;
    proven_optimal = best_makespan == root_bound;
  }

  if (best.empty()) {
    result.status = SolverStatus::infeasible_budget;
    result.lower_bound = root_bound;
    result.schedule.lower_bound = root_bound;
    result.explored_nodes = nodes;
    return result;
  }

  result.schedule = detail::placements_to_schedule(in, best);
  result.explored_nodes = nodes;
  result.status = proven_optimal ? SolverStatus::optimal : SolverStatus::feasible;
  result.lower_bound = proven_optimal ? best_makespan : root_bound;
  result.schedule.optimality = proven_optimal ? Optimality::optimal : Optimality::feasible;
  result.schedule.lower_bound = result.lower_bound;
  return result;
}

}  // namespace stagesched
