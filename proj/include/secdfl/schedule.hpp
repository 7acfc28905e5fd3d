#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "secdfl/error.hpp"

namespace secdfl {

// A block is a sorted set of s peer ids; a parallel class partitions all n
// peers into n/s disjoint blocks. Stacking classes such that no unordered
// pair of peers appears in more than one block across the whole stack gives
// a resolvable block design: cycling through the classes guarantees any two
// peers share a group at most once per cycle, i.e. a communication gap equal
// to the class count.
using Block = std::vector<int>;
using ParallelClass = std::vector<Block>;

struct GroupSchedule {
  int n = 0;
  int s = 0;
  std::uint64_t seed = 0;
  std::vector<ParallelClass> classes;

  int gap() const { return static_cast<int>(classes.size()); }
};

// Termination policy for the randomized search. A class attempt samples
// s-subsets uniformly from the peers not yet placed in the current class and
// accepts a subset only if all of its internal pairs are still uncovered.
// When an attempt stalls (sampling budget spent, or no valid subset exists in
// the residual pair graph) the tentative blocks go back to the pool and the
// class restarts. Generation stops at target_classes, or when restarts are
// exhausted.
struct SearchBudget {
  int max_sample_attempts_per_class = 2000;
  int max_class_restarts = 200;
  std::optional<int> target_classes;
};

GroupSchedule generate_schedule(int n, int s, std::uint64_t seed,
                                const SearchBudget& budget = {});

struct ValidationReport {
  std::vector<std::string> violations;
  bool valid() const { return violations.empty(); }
};

ValidationReport validate_schedule(const GroupSchedule& sch);

// 1-indexed iteration i uses classes[(i-1) mod gap]
const ParallelClass& class_for_iteration(const GroupSchedule& sch, int i);

// Iteration horizon the schedule certifies against an honest-but-curious
// observer: 2*gap - 1. discard_condition reports whether the group size is
// large enough (s > gap/(gap-1)) for partial-sum equations to be useless to
// the observer; at gap 1 the condition is unsatisfiable.
struct SecureHorizon {
  int max_iterations;
  bool discard_condition;
};

SecureHorizon max_secure_iterations(const GroupSchedule& sch);

nlohmann::json schedule_to_json(const GroupSchedule& sch);
GroupSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace secdfl
