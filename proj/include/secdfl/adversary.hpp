#pragma once

#include <optional>
#include <string>
#include <vector>

#include "secdfl/simnet.hpp"

namespace secdfl {

// Honest-but-curious reconstruction. The observer follows the protocol but
// keeps every message and tries to recover a target peer's private input w
// from the linear structure of the updates.
//
// Per-coordinate unknowns for a horizon of T iterations, in column order:
//
//   [ w, x^1..x^T, lambda^0..lambda^T, y^i for every i where the target's y
//     was NOT observed, (other group members' y when partial-sum rows are in
//     play) ]
//
// Rows, per iteration i = 1..T:
//   x-update:  (2+rho) x^i - 2 w + lambda^{i-1} = rho z^{i-1}   (z^0 = 0)
//   y-def:     x^i + (1/rho) lambda^{i-1} [- y^i] = [y^i]       (RHS when observed)
//   dual:      lambda^i - lambda^{i-1} - rho x^i = -rho z^i
//
// All coefficients are coordinate-independent, so one matrix serves every
// coordinate with a per-coordinate right-hand side.

struct LinearSystem {
  Mat A;    // equation_count x unknown_count
  Mat rhs;  // equation_count x dim
  std::vector<std::string> unknown_names;
  int unknown_count = 0;
  int equation_count = 0;
  int T = 0;
  double rho = 1.0;
  int dim = 0;
  int w_col = 0;
};

// Direct two-iteration recovery in all-to-all mode:
//   lambda^1 = rho (y^1 - z^1);  x^2 = y^2 - lambda^1 / rho;
//   w = ((2+rho) x^2 + lambda^1 - rho z^1) / 2
ParamVector reconstruct_closed_form(const ObserverView& view, int target);

// include_group_sums forces the partial-sum equations in even when the
// group-size condition says the observer gains nothing from them.
LinearSystem assemble_system(const ObserverView& view, int target, int T,
                             bool include_group_sums = false);

struct ReconstructionResult {
  enum class Status { Unique, Underdetermined };
  Status status = Status::Underdetermined;
  std::optional<ParamVector> w_hat;
  int rank = 0;
  int nullity = 0;
  int unknown_count = 0;
  int equation_count = 0;
  double solve_residual = 0.0;  // ||A u - rhs||_inf of the least-squares solution
};

// SVD rank analysis; Unique iff full column rank with singular values judged
// against the relative threshold 1e-8 * sigma_max.
ReconstructionResult solve(const LinearSystem& sys);

// Bookkeeping totals for the idealized case of a pair co-grouped every
// gap-th iteration: unknowns = (3 T gap - T)/gap + 2, equations = 3 T,
// and whether s > gap/(gap-1) lets the observer discard partial-sum rows.
struct PredictedCounts {
  int unknowns = 0;
  int equations = 0;
  bool discard_intermediate = false;
};

PredictedCounts predicted_counts(int T, int t_g, int s);

}  // namespace secdfl
