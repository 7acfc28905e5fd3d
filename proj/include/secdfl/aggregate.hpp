#pragma once

#include <cstdint>
#include <vector>

#include "secdfl/params.hpp"
#include "secdfl/schedule.hpp"

namespace secdfl {

// ADMM consensus averaging. Each peer k holds a private input w_k and the
// network converges on z = (1/n) sum_k w_k without any peer revealing w_k
// directly. Per iteration i (1-indexed), with penalty rho and z^0 = 0:
//
//   x_k^i = (2 w_k - lambda_k^{i-1} + rho z^{i-1}) / (2 + rho)
//   y_k^i = x_k^i + lambda_k^{i-1} / rho          (the only value sent)
//   z^i   = (1/n) sum_k y_k^i
//   lambda_k^i = lambda_k^{i-1} + rho (x_k^i - z^i)
//
// The dual variables sum to zero from i = 1 on, which makes the consensus
// error contract by exactly rho/(rho+2) per iteration from i = 2.

enum class LambdaInit { Uniform01, Zero };
enum class AggMode { AllToAll, Grouped };

struct AdmmConfig {
  double rho = 1.0;
  int iterations = 2;
  LambdaInit lambda_init = LambdaInit::Uniform01;
  AggMode mode = AggMode::AllToAll;
  GroupSchedule schedule;  // used only in Grouped mode
  // Grouped runs refuse iterations > max_secure_iterations unless set
  bool unsafe_override = false;
};

template <typename W, typename L, typename Z>
Vec x_minimize(const Eigen::MatrixBase<W>& w, const Eigen::MatrixBase<L>& lambda,
               const Eigen::MatrixBase<Z>& z, double rho) {
  require(w.size() == lambda.size() && w.size() == z.size(),
          Errc::ShapeMismatch, "x_minimize: shape mismatch");
  return (2.0 * w - lambda + rho * z) / (2.0 + rho);
}

template <typename X, typename L>
Vec y_message(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<L>& lambda,
              double rho) {
  require(x.size() == lambda.size(), Errc::ShapeMismatch,
          "y_message: shape mismatch");
  require(rho > 0.0, Errc::InvalidArgument, "y_message: rho must be positive");
  return x + lambda / rho;
}

// Group partial sum: (1/n) * sum of the group's y values. The divisor is the
// global peer count, so summing the partials of one parallel class gives the
// global consensus value.
Vec partial_z(const std::vector<Vec>& group_ys, int n);

Vec combine_z(const std::vector<Vec>& partials);

template <typename L, typename X, typename Z>
Vec lambda_update(const Eigen::MatrixBase<L>& lambda,
                  const Eigen::MatrixBase<X>& x,
                  const Eigen::MatrixBase<Z>& z, double rho) {
  require(lambda.size() == x.size() && lambda.size() == z.size(),
          Errc::ShapeMismatch, "lambda_update: shape mismatch");
  return lambda + rho * (x - z);
}

struct IterationTrace {
  int iteration = 0;
  Mat ys;                     // dim x n, column k = y_k at this iteration
  std::vector<Vec> partials;  // per group of the active class; empty all-to-all
  std::vector<std::vector<int>> groups;  // members of each partial's group
  Vec z;
  double residual_l2 = 0.0;    // ||z^i - z*||_2, oracle-side diagnostic
  double max_dual_sum = 0.0;   // ||sum_k lambda_k^i||_inf after the update
};

struct AggregationResult {
  Vec z;
  std::vector<IterationTrace> traces;
  Mat lambda0;  // dim x n initial duals, kept for diagnostics
};

// Core engine over the stacked input matrix (column k = peer k's input).
AggregationResult run_aggregation(const Mat& ws, const AdmmConfig& cfg,
                                  std::uint64_t seed);

AggregationResult run_aggregation(const std::vector<ParamVector>& ws,
                                  const AdmmConfig& cfg, std::uint64_t seed);

}  // namespace secdfl
