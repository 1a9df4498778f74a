/*
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */
#pragma once

#include <string>

#include "stagesched/model.hpp"

namespace stagesched {

// Seeded random workload generator for comparison runs and test suites.
struct InstanceGenParams {
  int min_jobs = 1;
  int max_jobs = 3;
  int min_machines = 1;
  int max_machines = 3;
  int min_stages = 1;
  int max_stages = 3;
  Ms duration_min_ms = 1'000;
  Ms duration_max_ms = 9'000;
  Ms duration_step_ms = 1'000;
};

inline WorkloadInstance make_random_instance(std::uint64_t seed, const InstanceGenParams& p) {
  if (p.min_jobs < 1 || p.max_jobs < p.min_jobs || p.min_machines < 1 ||
      p.max_machines < p.min_machines || p.min_stages < 1 || p.max_stages < p.min_stages)
    throw Error("bad instance generator bounds");
  if (p.duration_min_ms < 1 || p.duration_max_ms < p.duration_min_ms || p.duration_step_ms < 1)
    throw Error("bad instance generator durations");

  Rng rng(seed);
  const int jobs = static_cast<int>(rng.range(p.min_jobs, p.max_jobs));
  const int machines = static_cast<int>(rng.range(p.min_machines, p.max_machines));
  const int stages = static_cast<int>(rng.range(p.min_stages, p.max_stages));
  const Ms steps = (p.duration_max_ms - p.duration_min_ms) / p.duration_step_ms;

  WorkloadInstance wi;
  for (int m = 0; m < machines; ++m)
    wi.machines.push_back({"m" + std::to_string(m + 1), "type" + std::to_string(m + 1)});
  for (int j = 0; j < jobs; ++j) wi.jobs.push_back({"J" + std::to_string(j + 1), stages, {}});
  for (const auto& job : wi.jobs)
    for (int q = 1; q <= stages; ++q)
      for (const auto& machine : wi.machines)
        wi.times.set(job.id, q, machine.id,
                     p.duration_min_ms + p.duration_step_ms * rng.range(0, steps));
  return wi;
}

}  // namespace stagesched
