#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hesp/graph.hpp"
#include "hesp/platform.hpp"

namespace hesp {

enum class Ordering { FCFS, PL };
enum class Selection { RP, FP, EITP, EFTP };
enum class Caching { WT, WB, WA };

const char* to_string(Ordering o);
const char* to_string(Selection s);
const char* to_string(Caching c);
Ordering ordering_from(const std::string& name);
Selection selection_from(const std::string& name);
Caching caching_from(const std::string& name);

struct SchedConfig {
  Ordering ordering = Ordering::FCFS;
  Selection selection = Selection::EITP;
  Caching caching = Caching::WB;
  std::uint64_t seed = 0;
  std::int64_t min_block = 64;
};

struct EventRec {
  enum Kind { TaskStart, TaskEnd, XferStart, XferEnd } kind = TaskStart;
  double time = 0.0;
  std::string subject;   // T<id>:<kind>:b<side> or B<id>
  std::string resource;  // processor id or link "src->dst"
};
const char* to_string(EventRec::Kind kind);

struct Assignment {
  int task = 0;
  int proc = 0;
  double start = 0.0;
  double end = 0.0;
};

struct TransferRec {
  int block = 0;
  std::optional<Region> fragment;  // set when only part of the block moved
  std::vector<std::pair<int, int>> route;
  double start = 0.0;
  double end = 0.0;
  std::int64_t bytes = 0;
  int dst_space = 0;
};

struct ResidencyChange {
  double time = 0.0;
  int space = 0;
  std::int64_t delta_bytes = 0;  // + materialize, - evict/invalidate
  int block = 0;
};

struct LoadTrace {
  // (time, active processor count) steps; constant until the next entry.
  std::vector<std::pair<double, int>> steps;
  double integral() const;
};

struct SimResult {
  std::map<int, Assignment> assignments;
  std::vector<TransferRec> transfers;
  double makespan = 0.0;
  std::vector<EventRec> events;  // time-ordered
  std::map<int, double> idle_avg;
  std::vector<ResidencyChange> residency_log;

  double busy_time() const;
  double avg_load(int processor_count) const;  // in (0,1]
};

// Backflow critical times: ct(t) = mean task time over all processors plus
// the maximum ct among successors.
std::map<int, double> critical_times(const TaskGraph& graph, const PerfModel& model,
                                     const Platform& platform);

struct ReadyEntry {
  int task = 0;
  double release = 0.0;
};

// FCFS: ascending (release, id). PL: descending critical time, ties by id.
std::vector<int> order_ready(const std::vector<ReadyEntry>& ready, Ordering ordering,
                             const std::map<int, double>& ct);

// Decision-time snapshot of one processor for select_processor.
struct ProcView {
  int id = 0;
  std::string type;
  double next_idle = 0.0;
  double est_transfer_ready = 0.0;  // EFT-P only
};

// Deterministic seeded generator (splitmix64 core) used for R-P picks and
// Soft sampling; stable across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();                    // [0,1)
  std::size_t pick(std::size_t size);  // uniform index
 private:
  std::uint64_t state_;
};

// R-P / F-P choose among idle processors only (`idle` flags); EIT-P and
// EFT-P consider every processor. Returns the chosen processor id.
int select_processor(TaskKind kind, std::int64_t b, Selection policy,
                     const std::vector<ProcView>& procs, const std::vector<bool>& idle,
                     const PerfModel& model, double release_time, Rng& rng);

// Per-space block residency used by the coherence protocol. `valid` maps a
// block to the time its copy becomes available; `mat` marks blocks that
// occupy bytes (transferred in or written here), others are views into a
// containing materialized block.
struct SpaceMem {
  std::map<int, double> valid;
  std::set<int> mat;
  std::set<int> dirty;
  std::int64_t used = 0;
};

struct MemoryState {
  std::map<int, SpaceMem> spaces;  // key: space id
  bool is_valid(int space, int block) const;
};

// Write-coherence protocol around one block write: invalidates the block,
// its descendants (through intersection descriptors) and its ancestors in
// every space except the writer's, then validates the block and its
// descendants in the writer space. Ancestors are not validated (a child
// write is a partial update of the parent).
void apply_write_coherence(MemoryState& mem, const DataDag& dag, int block, int writer_space,
                           double when = 0.0);

// Event-driven simulation of the graph's leaves on the platform.
// Deterministic for a fixed config.
SimResult simulate(const TaskGraph& graph, const Platform& platform, const PerfModel& model,
                   const SchedConfig& config);

// Independent replay of a simulation: per-processor interval overlaps,
// dependence ordering, read coherence, and capacity. Empty result == valid.
std::vector<std::string> verify_schedule(const SimResult& result, const TaskGraph& graph,
                                         const Platform& platform);

LoadTrace compute_load_trace(const SimResult& result, const Platform& platform);

}  // namespace hesp
