#include "secdfl/schedule.hpp"

#include <algorithm>
#include <set>

#include "secdfl/error.hpp"
#include "secdfl/rng.hpp"

namespace secdfl {

namespace {

// Residual pair graph: pair_free[a][b] is true while the pair {a,b} is not
// yet covered by any chosen block.
struct PairGraph {
  int n;
  std::vector<char> free_;
  explicit PairGraph(int n) : n(n), free_(static_cast<std::size_t>(n) * n, 1) {}
  bool free_pair(int a, int b) const { return free_[a * n + b] != 0; }
  void cover(int a, int b) { free_[a * n + b] = free_[b * n + a] = 0; }
  void release(int a, int b) { free_[a * n + b] = free_[b * n + a] = 1; }
};

bool block_available(const PairGraph& g, const Block& blk) {
  for (std::size_t i = 0; i < blk.size(); ++i)
    for (std::size_t j = i + 1; j < blk.size(); ++j)
      if (!g.free_pair(blk[i], blk[j])) return false;
  return true;
}

void cover_block(PairGraph& g, const Block& blk) {
  for (std::size_t i = 0; i < blk.size(); ++i)
    for (std::size_t j = i + 1; j < blk.size(); ++j) g.cover(blk[i], blk[j]);
}

void release_block(PairGraph& g, const Block& blk) {
  for (std::size_t i = 0; i < blk.size(); ++i)
    for (std::size_t j = i + 1; j < blk.size(); ++j) g.release(blk[i], blk[j]);
}

// Exact backtracking check: does any valid s-subset of `remaining` exist?
// Cheap at desk scale and lets a stalled class attempt fail fast instead of
// burning its whole sampling budget on an impossible residual.
bool clique_exists(const PairGraph& g, const std::vector<int>& remaining, int s,
                   std::vector<int>& chosen, std::size_t start) {
  if (static_cast<int>(chosen.size()) == s) return true;
  for (std::size_t idx = start; idx < remaining.size(); ++idx) {
    int cand = remaining[idx];
    bool ok = true;
    for (int c : chosen)
      if (!g.free_pair(c, cand)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    chosen.push_back(cand);
    if (clique_exists(g, remaining, s, chosen, idx + 1)) return true;
    chosen.pop_back();
  }
  return false;
}

bool any_clique(const PairGraph& g, const std::vector<int>& remaining, int s) {
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(s));
  return clique_exists(g, remaining, s, chosen, 0);
}

}  // namespace

GroupSchedule generate_schedule(int n, int s, std::uint64_t seed,
                                const SearchBudget& budget) {
  require(s >= 2, Errc::InvalidArgument, "generate_schedule: s must be >= 2");
  require(n >= s, Errc::InvalidArgument, "generate_schedule: n must be >= s");
  require(n % s == 0, Errc::InvalidArgument,
          "generate_schedule: s must divide n (no virtual-peer padding)");
  require(budget.max_sample_attempts_per_class > 0 &&
              budget.max_class_restarts >= 0,
          Errc::InvalidArgument, "generate_schedule: nonpositive budget");

  Rng rng(derive_seed(seed, "schedule-gen", static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(s)));
  PairGraph graph(n);
  GroupSchedule sch;
  sch.n = n;
  sch.s = s;
  sch.seed = seed;

  int restarts_left = budget.max_class_restarts;
  while (!budget.target_classes ||
         sch.gap() < *budget.target_classes) {
    std::vector<int> remaining(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) remaining[static_cast<std::size_t>(i)] = i;
    std::vector<Block> blocks;
    int attempts = 0;
    int reject_streak = 0;
    bool class_failed = false;

    while (!remaining.empty()) {
      if (attempts >= budget.max_sample_attempts_per_class) {
        class_failed = true;
        break;
      }
      // uniform s-subset of the peers not yet placed in this class
      Block cand;
      cand.reserve(static_cast<std::size_t>(s));
      std::vector<int> pool = remaining;
      for (int j = 0; j < s; ++j) {
        int pick = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
        cand.push_back(pool[static_cast<std::size_t>(pick)]);
        pool.erase(pool.begin() + pick);
      }
      ++attempts;
      std::sort(cand.begin(), cand.end());
      if (block_available(graph, cand)) {
        cover_block(graph, cand);
        for (int p : cand)
          remaining.erase(std::find(remaining.begin(), remaining.end(), p));
        blocks.push_back(std::move(cand));
        reject_streak = 0;
      } else if (++reject_streak % 64 == 0 &&
                 !any_clique(graph, remaining, s)) {
        class_failed = true;
        break;
      }
    }

    if (class_failed) {
      for (const Block& blk : blocks) release_block(graph, blk);
      if (restarts_left-- <= 0) break;
    } else {
      std::sort(blocks.begin(), blocks.end());
      sch.classes.push_back(std::move(blocks));
    }
  }

  require(!sch.classes.empty(), Errc::InvalidArgument,
          "generate_schedule: no parallel class found within budget");
  return sch;
}

ValidationReport validate_schedule(const GroupSchedule& sch) {
  ValidationReport report;
  auto flag = [&report](std::string msg) {
    report.violations.push_back(std::move(msg));
  };

  if (sch.n < 2) flag("peer count must be at least 2");
  if (sch.s < 2) flag("group size must be at least 2");
  if (sch.classes.empty()) flag("schedule has no parallel classes");

  std::set<std::pair<int, int>> covered;
  for (std::size_t ci = 0; ci < sch.classes.size(); ++ci) {
    const ParallelClass& pc = sch.classes[ci];
    std::vector<char> seen(static_cast<std::size_t>(std::max(sch.n, 1)), 0);
    int placed = 0;
    for (const Block& blk : pc) {
      if (static_cast<int>(blk.size()) != sch.s)
        flag("class " + std::to_string(ci) + ": block of size " +
             std::to_string(blk.size()) + ", expected " + std::to_string(sch.s));
      for (int p : blk) {
        if (p < 0 || p >= sch.n) {
          flag("class " + std::to_string(ci) + ": peer id " +
               std::to_string(p) + " out of range");
          continue;
        }
        if (seen[static_cast<std::size_t>(p)])
          flag("class " + std::to_string(ci) + ": blocks not disjoint at peer " +
               std::to_string(p));
        seen[static_cast<std::size_t>(p)] = 1;
        ++placed;
      }
      for (std::size_t i = 0; i < blk.size(); ++i)
        for (std::size_t j = i + 1; j < blk.size(); ++j) {
          int a = std::min(blk[i], blk[j]);
          int b = std::max(blk[i], blk[j]);
          if (a < 0 || b >= sch.n || a == b) continue;
          if (!covered.insert({a, b}).second)
            flag("pair (" + std::to_string(a) + "," + std::to_string(b) +
                 ") covered more than once");
        }
    }
    if (placed != sch.n)
      flag("class " + std::to_string(ci) + ": does not partition all " +
           std::to_string(sch.n) + " peers");
  }
  return report;
}

const ParallelClass& class_for_iteration(const GroupSchedule& sch, int i) {
  require(i >= 1, Errc::InvalidArgument, "iterations are 1-indexed");
  require(!sch.classes.empty(), Errc::InvalidArgument, "empty schedule");
  return sch.classes[static_cast<std::size_t>((i - 1) % sch.gap())];
}

SecureHorizon max_secure_iterations(const GroupSchedule& sch) {
  const int t_g = sch.gap();
  SecureHorizon h;
  h.max_iterations = 2 * t_g - 1;
  // s > t_g/(t_g-1), evaluated in integers; unsatisfiable at gap 1
  h.discard_condition = t_g > 1 && sch.s * (t_g - 1) > t_g;
  return h;
}

nlohmann::json schedule_to_json(const GroupSchedule& sch) {
  nlohmann::json j;
  j["n"] = sch.n;
  j["s"] = sch.s;
  j["seed"] = sch.seed;
  j["classes"] = sch.classes;
  return j;
}

GroupSchedule schedule_from_json(const nlohmann::json& j) {
  GroupSchedule sch;
  try {
    sch.n = j.at("n").get<int>();
    sch.s = j.at("s").get<int>();
    sch.seed = j.at("seed").get<std::uint64_t>();
    sch.classes = j.at("classes").get<std::vector<ParallelClass>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::Io, std::string("schedule json: ") + e.what());
  }
  return sch;
}

}  // namespace secdfl
