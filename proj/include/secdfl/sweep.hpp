#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "secdfl/schedule.hpp"

namespace secdfl {

// Experiment sweeps backing the CLI; results serialize to locale-independent
// CSV ('.' decimals, LF endings) so runs diff cleanly across machines.

struct IterSweepRow {
  int iterations = 0;
  double mean_mse = 0.0;
};

struct IterSweepResult {
  std::vector<IterSweepRow> rows;
  double rho = 0.0;
  int n = 0;
  int dim = 0;
  int seeds = 0;
  // first iteration whose mean MSE drops below 1e-13; -1 if none in range
  int mse_below_1e13_at = -1;
};

// Aggregates random uniform [0,1) parameter checkpoints on a generated
// grouped schedule and reports the mean MSE against the true average per
// iteration count.
IterSweepResult sweep_iterations(int n, int s, double rho, int dim,
                                 int iters_max, int seeds,
                                 std::uint64_t seed0, bool unsafe = false);

struct ScheduleSweepRow {
  int n = 0;
  int median_classes = 0;
  int min_classes = 0;
  int max_classes = 0;
};

std::vector<ScheduleSweepRow> sweep_schedule(const std::vector<int>& ns, int s,
                                             int seeds, const SearchBudget& budget,
                                             std::uint64_t seed0);

std::string iter_sweep_csv(const IterSweepResult& r);
std::string schedule_sweep_csv(const std::vector<ScheduleSweepRow>& rows);

}  // namespace secdfl
