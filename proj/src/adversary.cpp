#include "secdfl/adversary.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <map>

namespace secdfl {

namespace {

bool observed_at(const ObserverView& view, int target, int i) {
  const auto& ys = view.visible_ys[static_cast<std::size_t>(i - 1)];
  return ys.count(target) != 0;
}

const Vec& observed_y(const ObserverView& view, int target, int i) {
  return view.visible_ys[static_cast<std::size_t>(i - 1)].at(target);
}

// the partial-sum record of the group containing `target` at iteration i
const std::pair<std::vector<int>, Vec>* find_partial(const ObserverView& view,
                                                     int target, int i) {
  for (const auto& entry : view.partials[static_cast<std::size_t>(i - 1)])
    if (std::find(entry.first.begin(), entry.first.end(), target) !=
        entry.first.end())
      return &entry;
  return nullptr;
}

}  // namespace

ParamVector reconstruct_closed_form(const ObserverView& view, int target) {
  require(target >= 0 && target < view.n, Errc::InvalidArgument,
          "reconstruct_closed_form: unknown target");
  if (target == view.observer) {
    require(view.own_w.has_value(), Errc::MissingData,
            "reconstruct_closed_form: observer's own input not in view");
    return ParamVector::flat(*view.own_w);
  }
  require(view.mode == AggMode::AllToAll, Errc::InvalidArgument,
          "reconstruct_closed_form: requires an all-to-all run");
  require(view.iterations >= 2, Errc::MissingData,
          "reconstruct_closed_form: insufficient iterations (need 2)");
  require(observed_at(view, target, 1) && observed_at(view, target, 2),
          Errc::MissingData,
          "reconstruct_closed_form: target's y missing at iteration 1 or 2");

  const double rho = view.rho;
  const Vec& y1 = observed_y(view, target, 1);
  const Vec& y2 = observed_y(view, target, 2);
  const Vec& z1 = view.zs[0];
  Vec lambda1 = rho * (y1 - z1);
  Vec x2 = y2 - lambda1 / rho;
  Vec w = ((2.0 + rho) * x2 + lambda1 - rho * z1) / 2.0;
  return ParamVector::flat(std::move(w));
}

LinearSystem assemble_system(const ObserverView& view, int target, int T,
                             bool include_group_sums) {
  require(target >= 0 && target < view.n, Errc::InvalidArgument,
          "assemble_system: target not in run");
  require(T >= 1 && T <= view.iterations, Errc::InvalidArgument,
          "assemble_system: T outside the observed range");
  require(!view.zs.empty() && view.zs.front().size() > 0, Errc::MissingData,
          "assemble_system: view has no consensus values");

  const double rho = view.rho;
  const int dim = static_cast<int>(view.zs.front().size());

  // column layout: w, x^1..x^T, lambda^0..lambda^T, then y columns
  LinearSystem sys;
  sys.T = T;
  sys.rho = rho;
  sys.dim = dim;
  sys.w_col = 0;
  const int col_x0 = 1;          // x^i at col_x0 + (i-1)
  const int col_l0 = 1 + T;      // lambda^i at col_l0 + i
  int next_col = col_l0 + T + 1;

  sys.unknown_names.emplace_back("w");
  for (int i = 1; i <= T; ++i) sys.unknown_names.push_back("x" + std::to_string(i));
  for (int i = 0; i <= T; ++i) sys.unknown_names.push_back("l" + std::to_string(i));

  std::map<int, int> y_col;  // iteration -> column of the target's unobserved y
  for (int i = 1; i <= T; ++i)
    if (!observed_at(view, target, i)) {
      y_col[i] = next_col++;
      sys.unknown_names.push_back("y" + std::to_string(i));
    }

  const bool grouped = view.mode == AggMode::Grouped && view.schedule.has_value();
  bool group_rows = false;
  if (grouped) {
    SecureHorizon horizon = max_secure_iterations(*view.schedule);
    group_rows = include_group_sums || !horizon.discard_condition;
  }

  // y columns for the other unobserved members of the target's group
  std::map<std::pair<int, int>, int> member_y_col;  // (iteration, peer) -> col
  if (group_rows) {
    for (int i = 1; i <= T; ++i) {
      const auto* part = find_partial(view, target, i);
      if (part == nullptr) continue;
      for (int u : part->first) {
        if (u == target || observed_at(view, u, i)) continue;
        member_y_col[{i, u}] = next_col++;
        sys.unknown_names.push_back("y" + std::to_string(i) + "#" +
                                    std::to_string(u));
      }
    }
  }

  const int cols = next_col;
  int rows = 3 * T;
  if (group_rows)
    for (int i = 1; i <= T; ++i)
      if (find_partial(view, target, i) != nullptr) ++rows;

  sys.A = Mat::Zero(rows, cols);
  sys.rhs = Mat::Zero(rows, dim);
  int r = 0;

  for (int i = 1; i <= T; ++i) {
    const int xi = col_x0 + (i - 1);
    const int li = col_l0 + i;
    const int li_prev = col_l0 + (i - 1);

    // (2+rho) x^i - 2 w + lambda^{i-1} = rho z^{i-1}, with z^0 = 0
    sys.A(r, xi) = 2.0 + rho;
    sys.A(r, sys.w_col) = -2.0;
    sys.A(r, li_prev) = 1.0;
    if (i >= 2)
      sys.rhs.row(r) = rho * view.zs[static_cast<std::size_t>(i - 2)].transpose();
    ++r;

    // x^i + (1/rho) lambda^{i-1} - [y^i] = [y^i]
    sys.A(r, xi) = 1.0;
    sys.A(r, li_prev) = 1.0 / rho;
    if (observed_at(view, target, i)) {
      sys.rhs.row(r) = observed_y(view, target, i).transpose();
    } else {
      sys.A(r, y_col.at(i)) = -1.0;
    }
    ++r;

    // lambda^i - lambda^{i-1} - rho x^i = -rho z^i
    sys.A(r, li) = 1.0;
    sys.A(r, li_prev) = -1.0;
    sys.A(r, xi) = -rho;
    sys.rhs.row(r) = -rho * view.zs[static_cast<std::size_t>(i - 1)].transpose();
    ++r;
  }

  if (group_rows) {
    // sum of the group's y equals n * z_g
    for (int i = 1; i <= T; ++i) {
      const auto* part = find_partial(view, target, i);
      if (part == nullptr) continue;
      sys.rhs.row(r) =
          static_cast<double>(view.n) * part->second.transpose();
      for (int u : part->first) {
        if (observed_at(view, u, i)) {
          sys.rhs.row(r) -= observed_y(view, u, i).transpose();
        } else if (u == target) {
          sys.A(r, y_col.at(i)) = 1.0;
        } else {
          sys.A(r, member_y_col.at({i, u})) = 1.0;
        }
      }
      ++r;
    }
  }

  sys.unknown_count = cols;
  sys.equation_count = rows;
  return sys;
}

ReconstructionResult solve(const LinearSystem& sys) {
  ReconstructionResult result;
  result.unknown_count = sys.unknown_count;
  result.equation_count = sys.equation_count;

  Eigen::JacobiSVD<Mat> svd(sys.A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-8);  // relative to the largest singular value
  result.rank = static_cast<int>(svd.rank());
  result.nullity = sys.unknown_count - result.rank;

  if (result.nullity > 0) {
    result.status = ReconstructionResult::Status::Underdetermined;
    return result;
  }

  Mat solution = svd.solve(sys.rhs);  // unknown_count x dim
  result.solve_residual =
      (sys.A * solution - sys.rhs).cwiseAbs().maxCoeff();
  result.status = ReconstructionResult::Status::Unique;
  result.w_hat = ParamVector::flat(solution.row(sys.w_col).transpose());
  return result;
}

PredictedCounts predicted_counts(int T, int t_g, int s) {
  require(t_g >= 1, Errc::InvalidArgument, "predicted_counts: gap must be >= 1");
  require(T >= 1, Errc::InvalidArgument, "predicted_counts: T must be >= 1");
  require(T % t_g == 0, Errc::InvalidArgument,
          "predicted_counts: T must be a multiple of the gap");
  PredictedCounts out;
  out.unknowns = 3 * T - T / t_g + 2;
  out.equations = 3 * T;
  out.discard_intermediate = t_g > 1 && s * (t_g - 1) > t_g;
  return out;
}

}  // namespace secdfl
