#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "secdfl/aggregate.hpp"

namespace secdfl {

// Deterministic in-memory message-passing harness. Every value exchanged by
// the aggregation engine is materialized as a Message so an honest-but-curious
// participant's evidence can be reconstructed exactly.

enum class MsgKind { Y, PartialZ, FinalZ };

struct Message {
  int iteration = 0;
  MsgKind kind = MsgKind::Y;
  int sender = -1;            // peer id for Y, group index for PartialZ, -1 for FinalZ
  std::vector<int> audience;  // receiving peers; empty means all peers
  std::vector<int> group;     // Y: the sender's group; PartialZ: the group's members
  Vec payload;
};

struct Transcript {
  int n = 0;
  double rho = 1.0;
  AggMode mode = AggMode::AllToAll;
  std::uint64_t seed = 0;
  int iterations = 0;
  std::optional<GroupSchedule> schedule;
  // total order: (iteration, kind with Y < PartialZ < FinalZ, sender id)
  std::vector<Message> messages;
};

struct SimResult {
  Vec z;
  Transcript transcript;
  AggregationResult engine;
};

SimResult run_simulation(const std::vector<ParamVector>& ws,
                         const AdmmConfig& cfg, std::uint64_t seed);
SimResult run_simulation(const Mat& ws, const AdmmConfig& cfg,
                         std::uint64_t seed);

// Everything one peer legitimately sees: y values of its co-group members at
// each iteration, every group's partial sum, every consensus value, plus run
// metadata. Other peers' w, x, lambda never appear.
struct ObserverView {
  int observer = -1;
  int n = 0;
  double rho = 1.0;
  AggMode mode = AggMode::AllToAll;
  std::optional<GroupSchedule> schedule;
  int iterations = 0;
  // index i-1 holds iteration i
  std::vector<std::map<int, Vec>> visible_ys;
  std::vector<std::vector<std::pair<std::vector<int>, Vec>>> partials;
  std::vector<Vec> zs;
  std::optional<Vec> own_w;  // private state; absent when built from a file
};

ObserverView peer_view(const Transcript& tr, int observer);
ObserverView peer_view(const Transcript& tr, int observer, Vec own_w);

// Recompute the per-iteration consensus from the Y messages alone; used to
// check that a serialized transcript replays to the same values.
std::vector<Vec> replay_consensus(const Transcript& tr);

// JSON-lines: one header record, then one record per message.
void write_transcript_jsonl(const Transcript& tr, std::ostream& os);
Transcript read_transcript_jsonl(std::istream& is);

}  // namespace secdfl
