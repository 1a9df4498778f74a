#include <catch2/catch_amalgamated.hpp>

#include "stagesched/instance_gen.hpp"
#include "stagesched/model.hpp"
#include "testutil.hpp"

using namespace stagesched;
using testutil::optimal_schedule_3x3;
using testutil::small3x3_instance;

TEST_CASE("validate_instance accepts the 3x3 workload") {
  REQUIRE(validate_instance(small3x3_instance()).ok());
}

TEST_CASE("validate_instance flags an incomplete time matrix") {
  auto wi = small3x3_instance();
  WorkloadInstance copy;
  copy.jobs = wi.jobs;
  copy.machines = wi.machines;
  for (const auto& [key, value] : wi.times.entries()) {
    const auto& [job, stage, machine] = key;
    if (job == "J1" && stage == 2 && machine == "m3") continue;
    copy.times.set(job, stage, machine, value);
  }
  auto report = validate_instance(copy);
  REQUIRE_FALSE(report.ok());
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].message == "incomplete time matrix");
  CHECK(report.violations[0].locus.find("J1") != std::string::npos);
  CHECK(report.violations[0].locus.find("m3") != std::string::npos);
}

TEST_CASE("validate_instance flags non-positive durations") {
  auto wi = small3x3_instance();
  wi.times.set("J2", 1, "m2", 0);
  auto report = validate_instance(wi);
  REQUIRE_FALSE(report.ok());
  CHECK(report.violations[0].message == "non-positive duration");
}

TEST_CASE("validate_instance flags structural problems") {
  SECTION("duplicate job id") {
    auto wi = small3x3_instance();
    wi.jobs.push_back(wi.jobs.front());
    CHECK_FALSE(validate_instance(wi).ok());
  }
  SECTION("mismatched stage counts") {
    auto wi = small3x3_instance();
    wi.jobs.back().stages = 2;
    CHECK_FALSE(validate_instance(wi).ok());
  }
  SECTION("no machines") {
    WorkloadInstance wi;
    wi.jobs.push_back({"J1", 1, {}});
    wi.times.set("J1", 1, "m1", 1000);
    CHECK_FALSE(validate_instance(wi).ok());
  }
  SECTION("id with a comma") {
    auto wi = small3x3_instance();
    wi.machines[0].id = "m,1";
    CHECK_FALSE(validate_instance(wi).ok());
  }
  SECTION("empty machine_type") {
    auto wi = small3x3_instance();
    wi.machines[0].machine_type = "";
    CHECK_FALSE(validate_instance(wi).ok());
  }
  SECTION("unknown time entry") {
    auto wi = small3x3_instance();
    wi.times.set("ghost", 1, "m1", 1000);
    auto report = validate_instance(wi);
    REQUIRE_FALSE(report.ok());
    CHECK(report.violations[0].message == "unknown time entry");
  }
}

TEST_CASE("schedule_makespan is the max entry end") {
  SECTION("makespan-8 schedule") {
    CHECK(schedule_makespan(optimal_schedule_3x3()) == 8000);
  }
  SECTION("single entry") {
    Schedule s;
    s.assignments["m1"] = {{"J1", 1, 0, 5000}};
    CHECK(schedule_makespan(s) == 5000);
  }
  SECTION("max across machines") {
    Schedule s;
    s.assignments["m1"] = {{"J1", 1, 0, 7000}};
    s.assignments["m2"] = {{"J2", 1, 2000, 7000}};
    CHECK(schedule_makespan(s) == 9000);
  }
  SECTION("ignores the stored field") {
    auto s = optimal_schedule_3x3();
    s.makespan = 1;
    CHECK(schedule_makespan(s) == 8000);
  }
  SECTION("empty schedule is an error") {
    CHECK_THROWS_WITH(schedule_makespan(Schedule{}), "empty schedule");
  }
}

TEST_CASE("check_schedule accepts the makespan-8 schedule") {
  REQUIRE(check_schedule(small3x3_instance(), optimal_schedule_3x3()).ok());
}

TEST_CASE("check_schedule catches a precedence violation") {
  // J1.1 on m2 ends at 2s; pulling J1.2 up to 1s crosses the boundary
  auto wi = small3x3_instance();
  auto s = optimal_schedule_3x3();
  s.assignments["m1"][1].start = 1000;  // J1.2, J1.1 ends at 2000 on m2
  auto report = check_schedule(wi, s);
  REQUIRE_FALSE(report.ok());
  bool found = false;
  for (const auto& v : report.violations)
    if (v.message.find("precedence violation") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("check_schedule catches an unscheduled operation") {
  auto wi = small3x3_instance();
  auto s = optimal_schedule_3x3();
  auto& m2 = s.assignments["m2"];
  m2.erase(m2.begin() + 2);  // drop J3.3
  auto report = check_schedule(wi, s);
  REQUIRE_FALSE(report.ok());
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].message == "operation unscheduled");
  CHECK(report.violations[0].locus == "J3.3");
}

TEST_CASE("check_schedule catches machine overlap and duration mismatch") {
  auto wi = small3x3_instance();
  SECTION("overlap") {
    auto s = optimal_schedule_3x3();
    s.assignments["m1"][1].start = 2000;  // J1.2 overlaps J3.1 (0..3000)
    auto report = check_schedule(wi, s);
    bool found = false;
    for (const auto& v : report.violations)
      if (v.message == "machine overlap") found = true;
    CHECK(found);
  }
  SECTION("duration mismatch") {
    auto s = optimal_schedule_3x3();
    s.assignments["m3"][1].duration = 2000;  // J1.3 on m3 takes 1000
    auto report = check_schedule(wi, s);
    bool found = false;
    for (const auto& v : report.violations)
      if (v.message.find("duration mismatch") != std::string::npos) found = true;
    CHECK(found);
  }
  SECTION("scheduled twice") {
    auto s = optimal_schedule_3x3();
    s.assignments["m3"].push_back({"J3", 1, 20000, 5000});
    auto report = check_schedule(wi, s);
    bool found = false;
    for (const auto& v : report.violations)
      if (v.message == "operation scheduled twice") found = true;
    CHECK(found);
  }
}

TEST_CASE("check_schedule verdict is invariant under machine list order") {
  auto wi = small3x3_instance();
  auto s = optimal_schedule_3x3();
  REQUIRE(check_schedule(wi, s).ok());
  std::reverse(wi.machines.begin(), wi.machines.end());
  CHECK(check_schedule(wi, s).ok());
}

TEST_CASE("accepted schedules respect the trivial per-job lower bound") {
  // For every job, any schedule must take at least the job's min-duration
  // chain.
  auto wi = small3x3_instance();
  auto s = optimal_schedule_3x3();
  REQUIRE(check_schedule(wi, s).ok());
  Ms bound = 0;
  for (const auto& job : wi.jobs) {
    Ms chain = 0;
    for (int q = 1; q <= job.stages; ++q) {
      Ms best = std::numeric_limits<Ms>::max();
      for (const auto& m : wi.machines) best = std::min(best, wi.times.at(job.id, q, m.id));
      chain += best;
    }
    bound = std::max(bound, chain);
  }
  CHECK(schedule_makespan(s) >= bound);
  CHECK(bound == 7000);
}

TEST_CASE("check_plan accepts a framed synchronized plan") {
  ExecutionPlan p{"m1",
                  {PlanStatement::begin_plan(), PlanStatement::exec("J1", 1),
                   PlanStatement::signal("J1", 2), PlanStatement::wait("J1", 2),
                   PlanStatement::exec("J1", 2), PlanStatement::end_plan()}};
  CHECK(check_plan(p, 2).ok());
}

TEST_CASE("check_plan accepts same-machine sequencing without WAIT") {
  ExecutionPlan p{"m1",
                  {PlanStatement::begin_plan(), PlanStatement::exec("J1", 1),
                   PlanStatement::exec("J1", 2), PlanStatement::end_plan()}};
  CHECK(check_plan(p, 2).ok());
}

TEST_CASE("check_plan flags structural defects") {
  SECTION("missing BEGIN") {
    ExecutionPlan p{"m1", {PlanStatement::exec("J1", 1), PlanStatement::end_plan()}};
    CHECK_FALSE(check_plan(p, 1).ok());
  }
  SECTION("missing END") {
    ExecutionPlan p{"m1", {PlanStatement::begin_plan(), PlanStatement::exec("J1", 1)}};
    CHECK_FALSE(check_plan(p, 1).ok());
  }
  SECTION("EXEC of a later stage with no WAIT and no local predecessor") {
    ExecutionPlan p{"m1",
                    {PlanStatement::begin_plan(), PlanStatement::exec("J1", 2),
                     PlanStatement::end_plan()}};
    CHECK_FALSE(check_plan(p, 2).ok());
  }
  SECTION("WAIT not followed by its EXEC") {
    ExecutionPlan p{"m1",
                    {PlanStatement::begin_plan(), PlanStatement::wait("J1", 2),
                     PlanStatement::exec("J2", 1), PlanStatement::end_plan()}};
    CHECK_FALSE(check_plan(p, 2).ok());
  }
  SECTION("SIGNAL not preceded by its EXEC") {
    ExecutionPlan p{"m1",
                    {PlanStatement::begin_plan(), PlanStatement::signal("J1", 2),
                     PlanStatement::end_plan()}};
    CHECK_FALSE(check_plan(p, 2).ok());
  }
  SECTION("WAIT on stage 1 is invalid") {
    ExecutionPlan p{"m1",
                    {PlanStatement::begin_plan(), PlanStatement::wait("J1", 1),
                     PlanStatement::exec("J1", 1), PlanStatement::end_plan()}};
    CHECK_FALSE(check_plan(p, 2).ok());
  }
}

TEST_CASE("check_plan_set pairs WAITs with SIGNALs and covers all operations") {
  WorkloadInstance wi;
  wi.machines = {{"m1", "a"}, {"m2", "b"}};
  wi.jobs = {{"J1", 2, {}}};
  wi.times.set("J1", 1, "m1", 1000);
  wi.times.set("J1", 1, "m2", 1000);
  wi.times.set("J1", 2, "m1", 1000);
  wi.times.set("J1", 2, "m2", 1000);

  ExecutionPlan a{"m1",
                  {PlanStatement::begin_plan(), PlanStatement::exec("J1", 1),
                   PlanStatement::signal("J1", 2), PlanStatement::end_plan()}};
  ExecutionPlan b{"m2",
                  {PlanStatement::begin_plan(), PlanStatement::wait("J1", 2),
                   PlanStatement::exec("J1", 2), PlanStatement::end_plan()}};
  CHECK(check_plan_set({a, b}, wi).ok());

  SECTION("dangling wait") {
    a.statements = {PlanStatement::begin_plan(), PlanStatement::exec("J1", 1), PlanStatement::end_plan()};
    auto report = check_plan_set({a, b}, wi);
    REQUIRE_FALSE(report.ok());
    bool found = false;
    for (const auto& v : report.violations)
      if (v.message.find("dangling wait") != std::string::npos) found = true;
    CHECK(found);
  }
  SECTION("operation missing from plans") {
    b.statements = {PlanStatement::begin_plan(), PlanStatement::end_plan()};
    auto report = check_plan_set({a, b}, wi);
    REQUIRE_FALSE(report.ok());
    bool missing = false;
    for (const auto& v : report.violations)
      if (v.message.find("missing from plans") != std::string::npos && v.locus == "J1.2")
        missing = true;
    CHECK(missing);
  }
  SECTION("operation executed twice") {
    b.statements.insert(b.statements.end() - 1, PlanStatement::exec("J1", 1));
    CHECK_FALSE(check_plan_set({a, b}, wi).ok());
  }
}
