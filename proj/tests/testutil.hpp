#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stagesched/model.hpp"

namespace testutil {

using namespace stagesched;

// Three jobs x three stages x three machines with per-machine stage times
// (in seconds) J1: (3,2,5),(2,4,4),(4,3,1); J2: (3,3,4),(1,5,3),(2,2,5);
// J3: (3,2,5),(5,3,3),(3,2,4). Optimal makespan is 8 s; greedy whole-job
// assignment yields 10 s.
inline WorkloadInstance small3x3_instance() {
  WorkloadInstance wi;
  wi.machines = {{"m1", "gpu_small"}, {"m2", "gpu_medium"}, {"m3", "gpu_large"}};
  for (const char* id : {"J1", "J2", "J3"}) wi.jobs.push_back({id, 3, {}});
  const Ms t[3][3][3] = {
      {{3, 2, 5}, {2, 4, 4}, {4, 3, 1}},
      {{3, 3, 4}, {1, 5, 3}, {2, 2, 5}},
      {{3, 2, 5}, {5, 3, 3}, {3, 2, 4}},
  };
  for (int j = 0; j < 3; ++j)
    for (int q = 0; q < 3; ++q)
      for (int m = 0; m < 3; ++m)
        wi.times.set("J" + std::to_string(j + 1), q + 1, "m" + std::to_string(m + 1),
                     t[j][q][m] * 1000);
  return wi;
}

// A known makespan-8000 schedule for small3x3_instance:
//   m1: J3.1@0, J1.2@3s, J2.2@5s, J2.3@6s
//   m2: J1.1@0, J2.1@2s, J3.3@6s
//   m3: J3.2@3s, J1.3@6s
inline Schedule optimal_schedule_3x3() {
  Schedule s;
  s.assignments["m1"] = {{"J3", 1, 0, 3000},
                         {"J1", 2, 3000, 2000},
                         {"J2", 2, 5000, 1000},
                         {"J2", 3, 6000, 2000}};
  s.assignments["m2"] = {{"J1", 1, 0, 2000}, {"J2", 1, 2000, 3000}, {"J3", 3, 6000, 2000}};
  s.assignments["m3"] = {{"J3", 2, 3000, 3000}, {"J1", 3, 6000, 1000}};
  s.makespan = 8000;
  s.optimality = Optimality::optimal;
  s.lower_bound = 7000;
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10'000; ++i) {
      auto candidate = base / ("stagesched_" + tag + "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("cannot create temp directory for " + tag);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the built CLI binary through the shell, capturing stdout/stderr.
inline CmdResult run_cli(const std::string& args, const std::filesystem::path& capture_dir,
                         const std::string& tag = "cmd") {
  const auto out_file = capture_dir / ("_" + tag + ".out");
  const auto err_file = capture_dir / ("_" + tag + ".err");
  const std::string command = std::string(STAGESCHED_CLI) + " " + args + " > " +
                              out_file.string() + " 2> " + err_file.string();
  const int status = std::system(command.c_str());
  CmdResult r;
  r.exit_code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128);
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

}  // namespace testutil
