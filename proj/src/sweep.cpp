#include "secdfl/sweep.hpp"

#include <algorithm>
#include <cstdio>

#include "secdfl/aggregate.hpp"
#include "secdfl/rng.hpp"

namespace secdfl {

IterSweepResult sweep_iterations(int n, int s, double rho, int dim,
                                 int iters_max, int seeds, std::uint64_t seed0,
                                 bool unsafe) {
  require(iters_max >= 1, Errc::InvalidArgument,
          "sweep_iterations: need at least 1 iteration");
  require(seeds >= 1 && dim >= 1, Errc::InvalidArgument,
          "sweep_iterations: nonpositive sizes");

  GroupSchedule sch = generate_schedule(n, s, derive_seed(seed0, "sweep-sched"));

  AdmmConfig cfg;
  cfg.rho = rho;
  cfg.iterations = iters_max;
  cfg.lambda_init = LambdaInit::Uniform01;
  cfg.mode = AggMode::Grouped;
  cfg.schedule = sch;
  cfg.unsafe_override = unsafe;

  IterSweepResult result;
  result.rho = rho;
  result.n = n;
  result.dim = dim;
  result.seeds = seeds;
  result.rows.resize(static_cast<std::size_t>(iters_max));
  for (int i = 0; i < iters_max; ++i) result.rows[static_cast<std::size_t>(i)] =
      {i + 1, 0.0};

  for (int j = 0; j < seeds; ++j) {
    // random parameter checkpoint: a fresh uniform [0,1) input per peer
    Rng chk(derive_seed(seed0, "checkpoint", static_cast<std::uint64_t>(j)));
    Mat ws(dim, n);
    for (int k = 0; k < n; ++k)
      for (int d = 0; d < dim; ++d) ws(d, k) = chk.uniform01();
    Vec truth = ws.col(0);
    for (int k = 1; k < n; ++k) truth += ws.col(k);
    truth /= static_cast<double>(n);

    AggregationResult agg = run_aggregation(
        ws, cfg, derive_seed(seed0, "run", static_cast<std::uint64_t>(j)));
    for (int i = 0; i < iters_max; ++i)
      result.rows[static_cast<std::size_t>(i)].mean_mse +=
          mse(agg.traces[static_cast<std::size_t>(i)].z, truth);
  }
  for (auto& row : result.rows) row.mean_mse /= static_cast<double>(seeds);

  for (const auto& row : result.rows)
    if (row.mean_mse < 1e-13) {
      result.mse_below_1e13_at = row.iterations;
      break;
    }
  return result;
}

std::vector<ScheduleSweepRow> sweep_schedule(const std::vector<int>& ns, int s,
                                             int seeds,
                                             const SearchBudget& budget,
                                             std::uint64_t seed0) {
  require(!ns.empty() && seeds >= 1, Errc::InvalidArgument,
          "sweep_schedule: empty sweep");
  std::vector<ScheduleSweepRow> rows;
  rows.reserve(ns.size());
  for (int n : ns) {
    std::vector<int> counts;
    counts.reserve(static_cast<std::size_t>(seeds));
    for (int j = 0; j < seeds; ++j) {
      GroupSchedule sch = generate_schedule(
          n, s,
          derive_seed(seed0, "schedule-sweep", static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(j)),
          budget);
      counts.push_back(sch.gap());
    }
    std::sort(counts.begin(), counts.end());
    ScheduleSweepRow row;
    row.n = n;
    row.min_classes = counts.front();
    row.max_classes = counts.back();
    row.median_classes = counts[(counts.size() - 1) / 2];  // lower median
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string iter_sweep_csv(const IterSweepResult& r) {
  std::string out = "iterations,mean_mse\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.iterations) + "," + fmt_double(row.mean_mse) + "\n";
  return out;
}

std::string schedule_sweep_csv(const std::vector<ScheduleSweepRow>& rows) {
  std::string out = "n,median_classes,min_classes,max_classes\n";
  for (const auto& row : rows)
    out += std::to_string(row.n) + "," + std::to_string(row.median_classes) +
           "," + std::to_string(row.min_classes) + "," +
           std::to_string(row.max_classes) + "\n";
  return out;
}

}  // namespace secdfl
