#pragma once

#include <optional>
#include <vector>

#include "hesp/sim.hpp"

namespace hesp {

enum class TaskSelection { All, CP, Shallow };
enum class Sampling { Hard, Soft };

const char* to_string(TaskSelection s);
const char* to_string(Sampling s);
TaskSelection task_selection_from(const std::string& name);
Sampling sampling_from(const std::string& name);

struct SolverConfig {
  int iterations = 50;
  TaskSelection task_selection = TaskSelection::All;
  Sampling sampling = Sampling::Soft;
  std::uint64_t seed = 0;
  int k_max = 8;
  std::int64_t min_block = 64;
  double overhead_factor = 1.1;
};

enum class ActionKind { Partition, Merge, Repartition };
const char* to_string(ActionKind a);

struct Candidate {
  bool is_cluster = false;
  int target = 0;  // leaf task id, or cluster id when is_cluster
  ActionKind action = ActionKind::Partition;
  double p = 1.0;  // partition parameter; 1 means merge
  double score = 0.0;
  std::int64_t d = 0;  // characteristic block side of the target
};

// One schedule+partition round: metrics come from this round's simulation,
// `applied` is the mutation chosen at the end of the round (if any).
struct IterationRecord {
  int iteration = 0;
  std::optional<Candidate> applied;
  double makespan = 0.0;
  int dag_depth = 0;
  double avg_block_side = 0.0;  // flop-weighted mean leaf block side
  double avg_load_pct = 0.0;
};

struct SolverResult {
  TaskGraph best_graph;
  SimResult best_result;
  std::vector<IterationRecord> history;
};

// Map observed parallelism headroom to a tiling factor:
// k = clamp(ceil(sqrt(I+1)) + 1, 2, min(k_max, d/min_block)), snapped down to
// a divisor grid of d. Returns p = 1/k.
double choose_p(double idle_avg, std::int64_t d, std::int64_t min_block, int k_max);

// Gain estimate for partitioning a scheduled leaf: its recorded duration
// minus overhead * W_sub / min(I+1, s), where W_sub sums the sub-task times
// on the leaf's assigned processor type.
double score_partition(const TaskGraph& graph, int task_id, double p, const SimResult& sim,
                       const PerfModel& model, const Platform& platform,
                       double overhead_factor);

// Gain estimate for merging a cluster: its realized span minus the best
// single-processor-type time of the restored parent.
double score_merge(const TaskGraph& graph, int cluster_id, const SimResult& sim,
                   const PerfModel& model, const Platform& platform);

std::vector<Candidate> collect_candidates(const TaskGraph& graph, const SimResult& sim,
                                          TaskSelection selection, const PerfModel& model,
                                          const Platform& platform, const SolverConfig& config);

// Hard: maximum score (ties by lowest target id). Soft: sampled with
// probability score / sum of scores.
Candidate select_candidate(const std::vector<Candidate>& candidates, Sampling sampling,
                           Rng& rng);

SolverResult solve(const TaskGraph& initial, const Platform& platform, const PerfModel& model,
                   const SchedConfig& sched, const SolverConfig& config);

double flop_weighted_block_side(const TaskGraph& graph);

}  // namespace hesp
