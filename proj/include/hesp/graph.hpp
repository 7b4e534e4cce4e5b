#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hesp/platform.hpp"

namespace hesp {

// A rectangular element range of the matrix. Task-facing blocks are square;
// intersection descriptors between misaligned tilings may be rectangular.
struct Region {
  std::int64_t row = 0;
  std::int64_t col = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  int elem_size = 8;

  std::int64_t bytes() const { return rows * cols * elem_size; }
  bool square() const { return rows == cols; }
  auto key() const { return std::tuple(row, col, rows, cols); }
  bool operator==(const Region& o) const { return key() == o.key(); }
};

std::optional<Region> intersect_regions(const Region& a, const Region& b);
bool region_contains(const Region& outer, const Region& inner);  // non-strict
bool regions_overlap(const Region& a, const Region& b);

// Rectangles of `base` not covered by `cuts` (row-sweep decomposition).
std::vector<Region> subtract_regions(const Region& base, const std::vector<Region>& cuts);

struct DataBlock {
  int id = 0;
  Region region;
  std::vector<int> parents;   // blocks geometrically containing this one
  std::vector<int> children;  // blocks contained in this one
  bool is_intersection = false;
};

// Nesting DAG of data blocks. Links denote geometric containment; partially
// overlapping blocks of misaligned tilings share an intersection descriptor
// as a common child.
class DataDag {
 public:
  const DataBlock& block(int id) const { return blocks_.at(id); }
  bool has_block(int id) const { return blocks_.count(id) > 0; }
  const std::map<int, DataBlock>& blocks() const { return blocks_; }
  std::vector<int> roots() const;
  std::optional<int> find_by_region(const Region& r) const;

  // Transitive closures along nesting links.
  std::set<int> descendants(int id) const;  // excludes id
  std::set<int> ancestors(int id) const;    // excludes id

  // Returns the block with this exact region, creating and wiring it into
  // the containment structure if new. Intersection descriptors for partial
  // overlaps with existing non-nested blocks are added automatically.
  int get_or_create(const Region& r);

  // Drops every block unreferenced by `referenced` (intersection blocks
  // survive only while all their parents do).
  void prune_unreferenced(const std::set<int>& referenced);

  void check_valid() const;

 private:
  int create(const Region& r, bool is_intersection);
  void link(int parent, int child);
  void unlink(int parent, int child);

  std::map<int, DataBlock> blocks_;
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>, int> by_region_;
  int next_id_ = 0;
};

enum class DepKind { RaW, WaR, WaW };
const char* to_string(DepKind kind);

struct Edge {
  int src = 0;
  int dst = 0;
  DepKind kind = DepKind::RaW;
};

struct Task {
  int id = 0;
  TaskKind kind = TaskKind::CHOL;
  std::vector<int> reads;   // block ids; in-place kernels read their output
  std::vector<int> writes;  // block ids
  std::optional<int> cluster;     // cluster this task is a member of
  std::optional<int> subcluster;  // cluster created by partitioning this task
  std::int64_t b = 0;             // side of the write block
  std::vector<int> seq;           // hierarchical program-order key
  std::int64_t creation_index = 0;  // leaf rank in program order

  bool is_leaf() const { return !subcluster.has_value(); }
};

struct TaskCluster {
  int id = 0;
  int parent_task = 0;
  std::vector<int> members;
  double p = 0.0;  // partition parameter used
};

// Hierarchical task DAG over a nested data-block DAG. Partitioning replaces
// a leaf task by the sub-tasks of its kind's blocked algorithm; merging
// restores the parent. Dependences are re-inferred over the current leaves
// after every mutation. Single-writer: mutations must be serialized
// externally; read-only snapshots may be shared across threads.
class TaskGraph {
 public:
  // Single CHOL leaf reading and writing one n x n root block.
  static TaskGraph root_cholesky(std::int64_t n, int elem_size);

  // Arbitrary graph with explicit blocks and edges; partition/merge are
  // unavailable on such graphs. Blocks are laid out disjointly.
  struct CustomTask {
    TaskKind kind;
    std::int64_t b;
    std::vector<int> reads;   // indices into block_sides
    std::vector<int> writes;  // indices into block_sides
  };
  static TaskGraph custom(const std::vector<std::int64_t>& block_sides,
                          const std::vector<CustomTask>& tasks,
                          const std::vector<std::pair<int, int>>& edges, int elem_size = 8);

  // Splits a leaf into its kind's blocked algorithm over an s x s tiling,
  // s = round(1/p) snapped to the nearest divisor of the block side with
  // tile side >= min_block. Returns the new cluster's id.
  int partition_task(int task_id, double p, std::int64_t min_block = 64);

  // Inverse of partition_task for clusters whose members are all leaves.
  // Returns the restored parent task's id.
  int merge_cluster(int cluster_id);

  // merge_cluster followed by partition_task(parent, p_new).
  int repartition_cluster(int cluster_id, double p_new, std::int64_t min_block = 64);

  std::vector<int> leaf_tasks() const;  // program order
  int dag_depth() const;
  int dag_width() const;

  const Task& task(int id) const { return tasks_.at(id); }
  bool has_task(int id) const { return tasks_.count(id) > 0; }
  const TaskCluster& cluster(int id) const;
  const std::map<int, Task>& tasks() const { return tasks_; }
  const std::map<int, TaskCluster>& clusters() const { return clusters_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& preds(int task_id) const;
  const std::vector<int>& succs(int task_id) const;
  const DataDag& data() const { return data_; }
  std::int64_t root_n() const { return root_n_; }
  int elem_size() const { return elem_size_; }
  int root_task() const { return root_task_; }

  int task_depth(int task_id) const;  // enclosing-cluster count
  double total_leaf_flops() const;
  double task_total_flops(int task_id) const;  // flops of one task

  // Innermost clusters: all members are leaves.
  std::vector<int> innermost_clusters() const;

  // Asserts acyclicity of both DAGs, flop conservation against the root,
  // and edge endpoints being overlapping leaves. Throws Err::Internal.
  void check_valid() const;

  std::string to_json() const;

  // Largest s <= k_start that divides d with d/s >= min_block; 0 if none.
  static std::int64_t snap_tiling(std::int64_t d, std::int64_t k_start, std::int64_t min_block);

 private:
  TaskGraph() = default;

  int new_task(TaskKind kind, const std::vector<int>& reads, const std::vector<int>& writes,
               std::int64_t b, std::vector<int> seq);
  void infer_dependences();
  std::set<int> referenced_blocks() const;
  const std::vector<Region> accessed_regions(const Task& t, const std::vector<int>& blocks) const;

  std::map<int, Task> tasks_;
  std::map<int, TaskCluster> clusters_;
  std::vector<Edge> edges_;
  std::map<int, std::vector<int>> preds_, succs_;
  DataDag data_;
  std::int64_t root_n_ = 0;
  int elem_size_ = 8;
  int next_task_id_ = 0;
  int next_cluster_id_ = 0;
  int root_task_ = 0;
  bool frozen_edges_ = false;  // custom graphs keep their explicit edges
};

// Sub-task (kind, read regions, write region) emitted by one partitioner
// invocation; used by partition_task and by the solver's score estimator.
struct SubTaskSpec {
  TaskKind kind;
  std::vector<Region> reads;
  Region write;
};

// Blocked algorithm of `kind` over an s x s tiling of the parent's operand
// regions, in deterministic loop order. Throws Err::UnknownPartitioner for
// kinds without a registered partitioner.
std::vector<SubTaskSpec> enumerate_partition(TaskKind kind, const std::vector<Region>& reads,
                                             const Region& write, std::int64_t s);

}  // namespace hesp
