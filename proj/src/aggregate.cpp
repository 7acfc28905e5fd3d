#include "secdfl/aggregate.hpp"

#include "secdfl/rng.hpp"

namespace secdfl {

Vec partial_z(const std::vector<Vec>& group_ys, int n) {
  require(!group_ys.empty(), Errc::InvalidArgument, "partial_z: empty group");
  require(n >= static_cast<int>(group_ys.size()), Errc::InvalidArgument,
          "partial_z: n smaller than group");
  Vec acc = group_ys.front();
  for (std::size_t i = 1; i < group_ys.size(); ++i) {
    require(group_ys[i].size() == acc.size(), Errc::ShapeMismatch,
            "partial_z: shape mismatch");
    acc += group_ys[i];
  }
  return acc / static_cast<double>(n);
}

Vec combine_z(const std::vector<Vec>& partials) {
  require(!partials.empty(), Errc::InvalidArgument, "combine_z: empty input");
  Vec acc = partials.front();
  for (std::size_t i = 1; i < partials.size(); ++i) {
    require(partials[i].size() == acc.size(), Errc::ShapeMismatch,
            "combine_z: shape mismatch");
    acc += partials[i];
  }
  return acc;
}

namespace {

// Fixed ascending-peer summation: consensus values must be bit-identical
// across peers and across schedule modes, so no rearranged reductions.
Vec column_mean_ascending(const Mat& m) {
  Vec acc = m.col(0);
  for (Eigen::Index k = 1; k < m.cols(); ++k) acc += m.col(k);
  return acc / static_cast<double>(m.cols());
}

}  // namespace

AggregationResult run_aggregation(const Mat& ws, const AdmmConfig& cfg,
                                  std::uint64_t seed) {
  const int n = static_cast<int>(ws.cols());
  const Eigen::Index dim = ws.rows();
  require(n >= 2, Errc::InvalidArgument, "run_aggregation: need at least 2 peers");
  require(dim >= 1, Errc::InvalidArgument, "run_aggregation: empty parameters");
  require(cfg.rho > 0.0, Errc::InvalidArgument, "run_aggregation: rho must be positive");
  require(cfg.iterations >= 1, Errc::InvalidArgument,
          "run_aggregation: need at least 1 iteration");
  require(ws.allFinite(), Errc::NonFinite, "run_aggregation: non-finite inputs");

  if (cfg.mode == AggMode::Grouped) {
    require(cfg.schedule.n == n, Errc::InvalidArgument,
            "run_aggregation: schedule peer count mismatch");
    ValidationReport v = validate_schedule(cfg.schedule);
    if (!v.valid())
      fail(Errc::InvalidArgument,
           "run_aggregation: invalid schedule: " + v.violations.front());
    SecureHorizon horizon = max_secure_iterations(cfg.schedule);
    if (cfg.iterations > horizon.max_iterations && !cfg.unsafe_override)
      fail(Errc::Refused,
           "run_aggregation: " + std::to_string(cfg.iterations) +
               " iterations exceed the secure horizon of " +
               std::to_string(horizon.max_iterations) +
               " for gap " + std::to_string(cfg.schedule.gap()) +
               "; pass the unsafe override to proceed");
  }

  const double rho = cfg.rho;
  Mat lambda(dim, n);
  if (cfg.lambda_init == LambdaInit::Zero) {
    lambda.setZero();
  } else {
    for (int k = 0; k < n; ++k) {
      Rng stream(derive_seed(seed, "lambda0", static_cast<std::uint64_t>(k)));
      for (Eigen::Index c = 0; c < dim; ++c) lambda(c, k) = stream.uniform01();
    }
  }

  AggregationResult result;
  result.lambda0 = lambda;
  result.traces.reserve(static_cast<std::size_t>(cfg.iterations));

  const Vec z_star = column_mean_ascending(ws);
  Vec z = Vec::Zero(dim);
  Mat x(dim, n), y(dim, n);

  for (int i = 1; i <= cfg.iterations; ++i) {
    for (int k = 0; k < n; ++k) {
      x.col(k) = (2.0 * ws.col(k) - lambda.col(k) + rho * z) / (2.0 + rho);
      y.col(k) = x.col(k) + lambda.col(k) / rho;
    }
    z = column_mean_ascending(y);

    IterationTrace trace;
    trace.iteration = i;
    trace.ys = y;
    if (cfg.mode == AggMode::Grouped) {
      const ParallelClass& pc = class_for_iteration(cfg.schedule, i);
      for (const Block& blk : pc) {
        std::vector<Vec> member_ys;
        member_ys.reserve(blk.size());
        for (int p : blk) member_ys.push_back(y.col(p));
        trace.partials.push_back(partial_z(member_ys, n));
        trace.groups.push_back(blk);
      }
    }
    trace.z = z;
    trace.residual_l2 = (z - z_star).norm();

    for (int k = 0; k < n; ++k)
      lambda.col(k) += rho * (x.col(k) - z);
    Vec dual_sum = lambda.col(0);
    for (int k = 1; k < n; ++k) dual_sum += lambda.col(k);
    trace.max_dual_sum = dual_sum.cwiseAbs().maxCoeff();

    result.traces.push_back(std::move(trace));
  }

  require(z.allFinite(), Errc::NonFinite, "run_aggregation: non-finite consensus");
  result.z = std::move(z);
  return result;
}

AggregationResult run_aggregation(const std::vector<ParamVector>& ws,
                                  const AdmmConfig& cfg, std::uint64_t seed) {
  require(!ws.empty(), Errc::InvalidArgument, "run_aggregation: no peers");
  for (const ParamVector& w : ws) {
    require(w.same_shape(ws.front()), Errc::ShapeMismatch,
            "run_aggregation: peer inputs differ in shape");
    w.check_finite("run_aggregation input");
  }
  Mat stacked(ws.front().size(), static_cast<Eigen::Index>(ws.size()));
  for (std::size_t k = 0; k < ws.size(); ++k)
    stacked.col(static_cast<Eigen::Index>(k)) = ws[k].data;
  return run_aggregation(stacked, cfg, seed);
}

}  // namespace secdfl
