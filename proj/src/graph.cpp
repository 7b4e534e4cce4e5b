#include "hesp/graph.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <sstream>

#include "json.hpp"

namespace hesp {

const char* to_string(DepKind kind) {
  switch (kind) {
    case DepKind::RaW: return "RaW";
    case DepKind::WaR: return "WaR";
    case DepKind::WaW: return "WaW";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Region geometry

std::optional<Region> intersect_regions(const Region& a, const Region& b) {
  const std::int64_t r0 = std::max(a.row, b.row);
  const std::int64_t c0 = std::max(a.col, b.col);
  const std::int64_t r1 = std::min(a.row + a.rows, b.row + b.rows);
  const std::int64_t c1 = std::min(a.col + a.cols, b.col + b.cols);
  if (r1 <= r0 || c1 <= c0) return std::nullopt;
  return Region{r0, c0, r1 - r0, c1 - c0, a.elem_size};
}

bool region_contains(const Region& outer, const Region& inner) {
  return inner.row >= outer.row && inner.col >= outer.col &&
         inner.row + inner.rows <= outer.row + outer.rows &&
         inner.col + inner.cols <= outer.col + outer.cols;
}

bool regions_overlap(const Region& a, const Region& b) {
  return a.row < b.row + b.rows && b.row < a.row + a.rows && a.col < b.col + b.cols &&
         b.col < a.col + a.cols;
}

std::vector<Region> subtract_regions(const Region& base, const std::vector<Region>& cuts) {
  std::vector<std::int64_t> xs{base.col, base.col + base.cols};
  std::vector<std::int64_t> ys{base.row, base.row + base.rows};
  for (const auto& c : cuts) {
    if (!regions_overlap(base, c)) continue;
    xs.push_back(std::clamp(c.col, base.col, base.col + base.cols));
    xs.push_back(std::clamp(c.col + c.cols, base.col, base.col + base.cols));
    ys.push_back(std::clamp(c.row, base.row, base.row + base.rows));
    ys.push_back(std::clamp(c.row + c.rows, base.row, base.row + base.rows));
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  std::vector<Region> out;
  for (std::size_t yi = 0; yi + 1 < ys.size(); ++yi) {
    // merge uncovered cells along the row strip
    std::optional<Region> run;
    for (std::size_t xi = 0; xi + 1 < xs.size(); ++xi) {
      Region cell{ys[yi], xs[xi], ys[yi + 1] - ys[yi], xs[xi + 1] - xs[xi], base.elem_size};
      bool covered = false;
      for (const auto& c : cuts)
        if (region_contains(c, cell)) {
          covered = true;
          break;
        }
      if (covered) {
        if (run) out.push_back(*run);
        run.reset();
      } else if (run) {
        run->cols += cell.cols;
      } else {
        run = cell;
      }
    }
    if (run) out.push_back(*run);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DataDag

std::vector<int> DataDag::roots() const {
  std::vector<int> out;
  for (const auto& [id, b] : blocks_)
    if (b.parents.empty() && !b.is_intersection) out.push_back(id);
  return out;
}

std::optional<int> DataDag::find_by_region(const Region& r) const {
  auto it = by_region_.find(r.key());
  if (it == by_region_.end()) return std::nullopt;
  return it->second;
}

std::set<int> DataDag::descendants(int id) const {
  std::set<int> seen;
  std::deque<int> work(blocks_.at(id).children.begin(), blocks_.at(id).children.end());
  while (!work.empty()) {
    int cur = work.front();
    work.pop_front();
    if (!seen.insert(cur).second) continue;
    const auto& c = blocks_.at(cur).children;
    work.insert(work.end(), c.begin(), c.end());
  }
  return seen;
}

std::set<int> DataDag::ancestors(int id) const {
  std::set<int> seen;
  std::deque<int> work(blocks_.at(id).parents.begin(), blocks_.at(id).parents.end());
  while (!work.empty()) {
    int cur = work.front();
    work.pop_front();
    if (!seen.insert(cur).second) continue;
    const auto& p = blocks_.at(cur).parents;
    work.insert(work.end(), p.begin(), p.end());
  }
  return seen;
}

void DataDag::link(int parent, int child) {
  auto& p = blocks_.at(parent).children;
  if (std::find(p.begin(), p.end(), child) == p.end()) p.push_back(child);
  auto& c = blocks_.at(child).parents;
  if (std::find(c.begin(), c.end(), parent) == c.end()) c.push_back(parent);
}

void DataDag::unlink(int parent, int child) {
  auto& p = blocks_.at(parent).children;
  p.erase(std::remove(p.begin(), p.end(), child), p.end());
  auto& c = blocks_.at(child).parents;
  c.erase(std::remove(c.begin(), c.end(), parent), c.end());
}

int DataDag::create(const Region& r, bool is_intersection) {
  const int id = next_id_++;

  // Containment wiring: immediate parents are the minimal strict containers,
  // immediate children the maximal strictly contained blocks.
  std::vector<int> parent_cand, child_cand;
  for (const auto& [bid, blk] : blocks_) {
    if (blk.region == r) continue;
    if (region_contains(blk.region, r))
      parent_cand.push_back(bid);
    else if (region_contains(r, blk.region))
      child_cand.push_back(bid);
  }
  auto strictly_inside = [&](int a, int b) {  // region(a) strictly inside region(b)
    return !(blocks_.at(a).region == blocks_.at(b).region) &&
           region_contains(blocks_.at(b).region, blocks_.at(a).region);
  };
  std::vector<int> parents, children;
  for (int p : parent_cand) {
    bool minimal = true;
    for (int q : parent_cand)
      if (q != p && strictly_inside(q, p)) {
        minimal = false;
        break;
      }
    if (minimal) parents.push_back(p);
  }
  for (int c : child_cand) {
    bool maximal = true;
    for (int d : child_cand)
      if (d != c && strictly_inside(c, d)) {
        maximal = false;
        break;
      }
    if (maximal) children.push_back(c);
  }

  blocks_[id] = DataBlock{id, r, {}, {}, is_intersection};
  by_region_[r.key()] = id;
  for (int p : parents)
    for (int c : children) {
      auto& pc = blocks_.at(p).children;
      if (std::find(pc.begin(), pc.end(), c) != pc.end()) unlink(p, c);
    }
  for (int p : parents) link(p, id);
  for (int c : children) link(id, c);
  return id;
}

int DataDag::get_or_create(const Region& r) {
  if (auto existing = find_by_region(r)) return *existing;
  const int id = create(r, false);

  // Partial overlaps between real blocks get an intersection descriptor as
  // a common child; nested pairs use the containment link instead.
  std::vector<std::pair<int, Region>> sects;
  for (const auto& [bid, blk] : blocks_) {
    if (bid == id || blk.is_intersection) continue;
    if (region_contains(blk.region, r) || region_contains(r, blk.region)) continue;
    if (auto sect = intersect_regions(blk.region, r)) sects.emplace_back(bid, *sect);
  }
  for (const auto& [other, sect] : sects) {
    if (auto ex = find_by_region(sect)) {
      link(id, *ex);
      link(other, *ex);
    } else {
      create(sect, true);
    }
  }
  return id;
}

void DataDag::prune_unreferenced(const std::set<int>& referenced) {
  std::set<int> dead;
  for (const auto& [id, blk] : blocks_) {
    if (blk.is_intersection) continue;
    if (!referenced.count(id)) dead.insert(id);
  }
  for (const auto& [id, blk] : blocks_) {
    if (!blk.is_intersection) continue;
    for (int p : blk.parents)
      if (dead.count(p)) {
        dead.insert(id);
        break;
      }
  }
  // surviving blocks inherit links from their nearest alive ancestors
  auto alive_ancestors = [&](int start) {
    std::set<int> out, seen;
    std::deque<int> work{start};
    while (!work.empty()) {
      int cur = work.front();
      work.pop_front();
      if (!seen.insert(cur).second) continue;
      for (int p : blocks_.at(cur).parents) {
        if (dead.count(p))
          work.push_back(p);
        else
          out.insert(p);
      }
    }
    return out;
  };
  std::vector<std::pair<int, int>> relinks;
  for (const auto& [id, blk] : blocks_) {
    if (dead.count(id)) continue;
    bool has_dead_parent = false;
    for (int p : blk.parents)
      if (dead.count(p)) has_dead_parent = true;
    if (!has_dead_parent) continue;
    for (int a : alive_ancestors(id)) relinks.emplace_back(a, id);
  }

  for (int id : dead) {
    const DataBlock blk = blocks_.at(id);
    for (int p : blk.parents)
      if (blocks_.count(p)) unlink(p, id);
    for (int c : blk.children)
      if (blocks_.count(c)) unlink(id, c);
    by_region_.erase(blk.region.key());
    blocks_.erase(id);
  }
  for (auto [p, c] : relinks)
    if (blocks_.count(p) && blocks_.count(c)) link(p, c);
}

void DataDag::check_valid() const {
  std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>> regions;
  for (const auto& [id, blk] : blocks_) {
    if (!regions.insert(blk.region.key()).second)
      fail(Err::Internal, "duplicate region for block " + std::to_string(id));
    if (blk.is_intersection && blk.parents.size() < 2)
      fail(Err::Internal, "intersection block " + std::to_string(id) + " has < 2 parents");
    for (int c : blk.children) {
      const auto& child = blocks_.at(c);
      if (!region_contains(blk.region, child.region) || child.region == blk.region)
        fail(Err::Internal, "nesting link without strict containment");
    }
  }
  // acyclicity: containment strictly shrinks area along links
  for (const auto& [id, blk] : blocks_)
    for (int c : blk.children)
      if (blocks_.at(c).region.rows * blocks_.at(c).region.cols >=
          blk.region.rows * blk.region.cols)
        fail(Err::Internal, "nesting link does not shrink");
}

// ---------------------------------------------------------------------------
// Blocked-algorithm partitioners

namespace {

Region tile(const Region& r, std::int64_t s, std::int64_t i, std::int64_t j) {
  const std::int64_t tb = r.rows / s;
  return Region{r.row + i * tb, r.col + j * tb, tb, tb, r.elem_size};
}

}  // namespace

std::vector<SubTaskSpec> enumerate_partition(TaskKind kind, const std::vector<Region>& reads,
                                             const Region& write, std::int64_t s) {
  if (!write.square() || write.rows % s != 0)
    fail(Err::Internal, "partitioner tiling does not divide the block");
  for (const auto& r : reads)
    if (!r.square() || r.rows != write.rows)
      fail(Err::Internal, "partitioner operands must be same-side squares");

  std::vector<SubTaskSpec> out;
  const Region& a = write;

  switch (kind) {
    case TaskKind::CHOL: {
      // Right-looking tiled Cholesky on the lower triangle.
      for (std::int64_t k = 0; k < s; ++k) {
        Region akk = tile(a, s, k, k);
        out.push_back({TaskKind::CHOL, {akk}, akk});
        for (std::int64_t i = k + 1; i < s; ++i) {
          Region aik = tile(a, s, i, k);
          out.push_back({TaskKind::TRSM, {akk, aik}, aik});
        }
        for (std::int64_t i = k + 1; i < s; ++i) {
          Region aik = tile(a, s, i, k);
          for (std::int64_t j = k + 1; j < i; ++j) {
            Region ajk = tile(a, s, j, k);
            Region aij = tile(a, s, i, j);
            out.push_back({TaskKind::GEMM, {aik, ajk, aij}, aij});
          }
          Region aii = tile(a, s, i, i);
          out.push_back({TaskKind::SYRK, {aik, aii}, aii});
        }
      }
      break;
    }
    case TaskKind::TRSM: {
      // B := B L^-T with lower-triangular L: column sweep with trailing
      // updates against already-solved columns.
      if (reads.size() != 1) fail(Err::Internal, "TRSM partitioner expects one read operand");
      const Region& l = reads[0];
      for (std::int64_t j = 0; j < s; ++j) {
        Region ljj = tile(l, s, j, j);
        for (std::int64_t i = 0; i < s; ++i) {
          Region bij = tile(a, s, i, j);
          for (std::int64_t k = 0; k < j; ++k) {
            Region bik = tile(a, s, i, k);
            Region ljk = tile(l, s, j, k);
            out.push_back({TaskKind::GEMM, {bik, ljk, bij}, bij});
          }
          out.push_back({TaskKind::TRSM, {ljj, bij}, bij});
        }
      }
      break;
    }
    case TaskKind::SYRK: {
      // C := C - A A^T on the lower triangle of C.
      if (reads.size() != 1) fail(Err::Internal, "SYRK partitioner expects one read operand");
      const Region& src = reads[0];
      for (std::int64_t i = 0; i < s; ++i) {
        for (std::int64_t j = 0; j <= i; ++j) {
          Region cij = tile(a, s, i, j);
          for (std::int64_t k = 0; k < s; ++k) {
            Region aik = tile(src, s, i, k);
            if (i == j) {
              out.push_back({TaskKind::SYRK, {aik, cij}, cij});
            } else {
              Region ajk = tile(src, s, j, k);
              out.push_back({TaskKind::GEMM, {aik, ajk, cij}, cij});
            }
          }
        }
      }
      break;
    }
    case TaskKind::GEMM: {
      // C := C - A B^T over the full tile grid.
      if (reads.size() != 2) fail(Err::Internal, "GEMM partitioner expects two read operands");
      const Region& ma = reads[0];
      const Region& mb = reads[1];
      for (std::int64_t i = 0; i < s; ++i)
        for (std::int64_t j = 0; j < s; ++j) {
          Region cij = tile(a, s, i, j);
          for (std::int64_t k = 0; k < s; ++k) {
            Region aik = tile(ma, s, i, k);
            Region bjk = tile(mb, s, j, k);
            out.push_back({TaskKind::GEMM, {aik, bjk, cij}, cij});
          }
        }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// TaskGraph

TaskGraph TaskGraph::root_cholesky(std::int64_t n, int elem_size) {
  if (n < 1) fail(Err::InvalidSize, "matrix side must be >= 1");
  if (elem_size < 1) fail(Err::InvalidSize, "element size must be >= 1");
  TaskGraph g;
  g.root_n_ = n;
  g.elem_size_ = elem_size;
  int root_block = g.data_.get_or_create(Region{0, 0, n, n, elem_size});
  g.root_task_ = g.new_task(TaskKind::CHOL, {root_block}, {root_block}, n, {});
  g.infer_dependences();
  return g;
}

TaskGraph TaskGraph::custom(const std::vector<std::int64_t>& block_sides,
                            const std::vector<CustomTask>& tasks,
                            const std::vector<std::pair<int, int>>& edges, int elem_size) {
  TaskGraph g;
  g.elem_size_ = elem_size;
  g.frozen_edges_ = true;
  std::vector<int> block_ids;
  std::int64_t off = 0;
  for (std::int64_t side : block_sides) {
    block_ids.push_back(g.data_.get_or_create(Region{off, off, side, side, elem_size}));
    off += side;
  }
  g.root_n_ = off;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    std::vector<int> reads, writes;
    for (int r : t.reads) reads.push_back(block_ids.at(r));
    for (int w : t.writes) writes.push_back(block_ids.at(w));
    g.new_task(t.kind, reads, writes, t.b, {static_cast<int>(i)});
  }
  g.root_task_ = g.tasks_.begin()->first;
  for (auto [src, dst] : edges) g.edges_.push_back({src, dst, DepKind::RaW});
  g.infer_dependences();
  return g;
}

int TaskGraph::new_task(TaskKind kind, const std::vector<int>& reads,
                        const std::vector<int>& writes, std::int64_t b, std::vector<int> seq) {
  if (writes.empty()) fail(Err::Internal, "task must write at least one block");
  const int id = next_task_id_++;
  Task t;
  t.id = id;
  t.kind = kind;
  t.reads = reads;
  t.writes = writes;
  t.b = b;
  t.seq = std::move(seq);
  tasks_[id] = std::move(t);
  return id;
}

std::int64_t TaskGraph::snap_tiling(std::int64_t d, std::int64_t k_start, std::int64_t min_block) {
  for (std::int64_t s = k_start; s >= 2; --s)
    if (d % s == 0 && d / s >= min_block) return s;
  return 0;
}

int TaskGraph::partition_task(int task_id, double p, std::int64_t min_block) {
  if (!tasks_.count(task_id)) fail(Err::Validation, "unknown task " + std::to_string(task_id));
  if (frozen_edges_)
    fail(Err::UnknownPartitioner, "graph with explicit edges has no partitioners");
  Task& t = tasks_.at(task_id);
  if (!t.is_leaf()) fail(Err::NotALeaf, "task " + std::to_string(task_id) + " is partitioned");
  if (!(p > 0.0 && p < 1.0)) fail(Err::Validation, "partition parameter must lie in (0,1)");

  const std::int64_t d = t.b;
  const std::int64_t s0 = std::max<std::int64_t>(2, std::llround(1.0 / p));
  const std::int64_t s_hi = d / std::max<std::int64_t>(1, min_block);

  // snap s to the nearest divisor of d with tiles >= min_block (ties coarser)
  std::int64_t s = 0;
  for (std::int64_t delta = 0; delta <= s0 + s_hi && s == 0; ++delta) {
    for (std::int64_t cand : {s0 - delta, s0 + delta}) {
      if (cand < 2 || cand > s_hi) continue;
      if (d % cand == 0) {
        s = cand;
        break;
      }
    }
  }
  if (s == 0)
    fail(Err::IndivisibleGrain, "no tiling of block side " + std::to_string(d) +
                                    " with tiles >= " + std::to_string(min_block));

  std::vector<Region> read_regions;
  for (int r : t.reads)
    if (std::find(t.writes.begin(), t.writes.end(), r) == t.writes.end())
      read_regions.push_back(data_.block(r).region);
  const Region write_region = data_.block(t.writes.front()).region;

  auto specs = enumerate_partition(t.kind, read_regions, write_region, s);

  const int cluster_id = next_cluster_id_++;
  TaskCluster cluster;
  cluster.id = cluster_id;
  cluster.parent_task = task_id;
  cluster.p = 1.0 / static_cast<double>(s);

  for (std::size_t m = 0; m < specs.size(); ++m) {
    const auto& spec = specs[m];
    std::vector<int> reads, writes;
    for (const auto& rr : spec.reads) reads.push_back(data_.get_or_create(rr));
    writes.push_back(data_.get_or_create(spec.write));
    std::vector<int> seq = tasks_.at(task_id).seq;
    seq.push_back(static_cast<int>(m));
    const int sub = new_task(spec.kind, reads, writes, spec.write.rows, std::move(seq));
    tasks_.at(sub).cluster = cluster_id;
    cluster.members.push_back(sub);
  }

  tasks_.at(task_id).subcluster = cluster_id;
  clusters_[cluster_id] = std::move(cluster);
  infer_dependences();
  return cluster_id;
}

const TaskCluster& TaskGraph::cluster(int id) const {
  auto it = clusters_.find(id);
  if (it == clusters_.end()) fail(Err::UnknownCluster, "cluster " + std::to_string(id));
  return it->second;
}

int TaskGraph::merge_cluster(int cluster_id) {
  auto it = clusters_.find(cluster_id);
  if (it == clusters_.end()) fail(Err::UnknownCluster, "cluster " + std::to_string(cluster_id));
  const TaskCluster cl = it->second;
  for (int m : cl.members)
    if (!tasks_.at(m).is_leaf())
      fail(Err::NestedCluster,
           "cluster " + std::to_string(cluster_id) + " has a partitioned member");

  for (int m : cl.members) tasks_.erase(m);
  clusters_.erase(cluster_id);
  tasks_.at(cl.parent_task).subcluster.reset();
  data_.prune_unreferenced(referenced_blocks());
  infer_dependences();
  return cl.parent_task;
}

int TaskGraph::repartition_cluster(int cluster_id, double p_new, std::int64_t min_block) {
  const int parent = merge_cluster(cluster_id);
  return partition_task(parent, p_new, min_block);
}

std::set<int> TaskGraph::referenced_blocks() const {
  std::set<int> out;
  for (const auto& [id, t] : tasks_) {
    out.insert(t.reads.begin(), t.reads.end());
    out.insert(t.writes.begin(), t.writes.end());
  }
  return out;
}

std::vector<int> TaskGraph::leaf_tasks() const {
  std::vector<int> leaves;
  for (const auto& [id, t] : tasks_)
    if (t.is_leaf()) leaves.push_back(id);
  std::sort(leaves.begin(), leaves.end(), [this](int a, int b) {
    const auto& sa = tasks_.at(a).seq;
    const auto& sb = tasks_.at(b).seq;
    return sa != sb ? sa < sb : a < b;
  });
  return leaves;
}

int TaskGraph::task_depth(int task_id) const {
  int depth = 0;
  std::optional<int> cur = tasks_.at(task_id).cluster;
  while (cur) {
    ++depth;
    cur = tasks_.at(clusters_.at(*cur).parent_task).cluster;
  }
  return depth;
}

int TaskGraph::dag_depth() const {
  int depth = 0;
  for (const auto& [id, t] : tasks_)
    if (t.is_leaf()) depth = std::max(depth, task_depth(id));
  return depth;
}

int TaskGraph::dag_width() const {
  const auto leaves = leaf_tasks();
  std::map<int, int> level;
  for (int id : leaves) level[id] = 0;
  // leaves are topologically ordered by creation rank; edges point forward
  for (int id : leaves)
    for (int s : succs(id)) level[s] = std::max(level[s], level[id] + 1);
  std::map<int, int> count;
  int width = 0;
  for (int id : leaves) width = std::max(width, ++count[level[id]]);
  return width;
}

const std::vector<int>& TaskGraph::preds(int task_id) const {
  static const std::vector<int> none;
  auto it = preds_.find(task_id);
  return it == preds_.end() ? none : it->second;
}

const std::vector<int>& TaskGraph::succs(int task_id) const {
  static const std::vector<int> none;
  auto it = succs_.find(task_id);
  return it == succs_.end() ? none : it->second;
}

double TaskGraph::task_total_flops(int task_id) const {
  const Task& t = tasks_.at(task_id);
  return task_flops(t.kind, t.b);
}

double TaskGraph::total_leaf_flops() const {
  double sum = 0;
  for (const auto& [id, t] : tasks_)
    if (t.is_leaf()) sum += task_flops(t.kind, t.b);
  return sum;
}

std::vector<int> TaskGraph::innermost_clusters() const {
  std::vector<int> out;
  for (const auto& [id, cl] : clusters_) {
    bool flat = true;
    for (int m : cl.members)
      if (!tasks_.at(m).is_leaf()) {
        flat = false;
        break;
      }
    if (flat) out.push_back(id);
  }
  return out;
}

void TaskGraph::infer_dependences() {
  const auto leaves = leaf_tasks();
  const int n = static_cast<int>(leaves.size());
  std::map<int, int> rank;
  for (int i = 0; i < n; ++i) {
    rank[leaves[i]] = i;
    tasks_.at(leaves[i]).creation_index = i;
  }

  if (!frozen_edges_) {
    // candidate pairs via per-block toucher lists over overlapping blocks
    std::map<int, std::vector<int>> touchers;  // block -> leaf ranks
    std::map<int, std::vector<int>> acc_reads, acc_writes;
    for (int i = 0; i < n; ++i) {
      const Task& t = tasks_.at(leaves[i]);
      std::set<int> acc(t.reads.begin(), t.reads.end());
      acc.insert(t.writes.begin(), t.writes.end());
      for (int b : acc) touchers[b].push_back(i);
      acc_reads[i] = t.reads;
      acc_writes[i] = t.writes;
    }
    std::vector<int> used;
    for (const auto& [b, _] : touchers) used.push_back(b);

    std::set<std::pair<int, int>> cand;
    for (std::size_t x = 0; x < used.size(); ++x)
      for (std::size_t y = x; y < used.size(); ++y) {
        const Region& rx = data_.block(used[x]).region;
        const Region& ry = data_.block(used[y]).region;
        if (!regions_overlap(rx, ry)) continue;
        for (int i : touchers[used[x]])
          for (int j : touchers[used[y]]) {
            if (i == j) continue;
            cand.insert({std::min(i, j), std::max(i, j)});
          }
      }

    auto any_overlap = [this](const std::vector<int>& as, const std::vector<int>& bs) {
      for (int a : as)
        for (int b : bs)
          if (regions_overlap(data_.block(a).region, data_.block(b).region)) return true;
      return false;
    };

    struct CandEdge {
      int src, dst;
      DepKind kind;
    };
    std::vector<CandEdge> cedges;
    std::map<int, std::vector<int>> direct;  // src rank -> dst ranks
    for (const auto& [i, j] : cand) {
      DepKind kind;
      if (any_overlap(acc_writes[i], acc_reads[j]))
        kind = DepKind::RaW;
      else if (any_overlap(acc_writes[i], acc_writes[j]))
        kind = DepKind::WaW;
      else if (any_overlap(acc_reads[i], acc_writes[j]))
        kind = DepKind::WaR;
      else
        continue;
      cedges.push_back({i, j, kind});
      direct[i].push_back(j);
    }

    // transitive reduction: drop (u,v) when v is reachable through a
    // successor of u
    const std::size_t words = (n + 63) / 64;
    std::vector<std::uint64_t> reach(static_cast<std::size_t>(n) * words, 0);
    auto bit = [&](int node, int target) -> bool {
      return (reach[static_cast<std::size_t>(node) * words + target / 64] >>
              (target % 64)) & 1u;
    };
    for (int u = n - 1; u >= 0; --u) {
      auto* row = &reach[static_cast<std::size_t>(u) * words];
      auto it = direct.find(u);
      if (it == direct.end()) continue;
      for (int v : it->second) {
        row[v / 64] |= (1ull << (v % 64));
        const auto* vrow = &reach[static_cast<std::size_t>(v) * words];
        for (std::size_t w = 0; w < words; ++w) row[w] |= vrow[w];
      }
    }

    edges_.clear();
    for (const auto& e : cedges) {
      bool redundant = false;
      for (int w : direct[e.src]) {
        if (w == e.dst) continue;
        if (bit(w, e.dst)) {
          redundant = true;
          break;
        }
      }
      if (!redundant) edges_.push_back({leaves[e.src], leaves[e.dst], e.kind});
    }
  }

  preds_.clear();
  succs_.clear();
  for (const auto& e : edges_) {
    succs_[e.src].push_back(e.dst);
    preds_[e.dst].push_back(e.src);
  }
  for (auto& [id, v] : preds_) std::sort(v.begin(), v.end());
  for (auto& [id, v] : succs_) std::sort(v.begin(), v.end());
}

void TaskGraph::check_valid() const {
  data_.check_valid();

  for (const auto& e : edges_) {
    const Task& src = tasks_.at(e.src);
    const Task& dst = tasks_.at(e.dst);
    if (!src.is_leaf() || !dst.is_leaf()) fail(Err::Internal, "edge endpoint is not a leaf");
    if (!frozen_edges_) {
      if (src.creation_index >= dst.creation_index)
        fail(Err::Internal, "edge violates program order");
      bool overlap = false;
      for (int a : src.reads)
        for (int b : dst.reads)
          if (regions_overlap(data_.block(a).region, data_.block(b).region)) overlap = true;
      for (int a : src.writes)
        for (int b : dst.writes)
          if (regions_overlap(data_.block(a).region, data_.block(b).region)) overlap = true;
      if (!overlap) fail(Err::Internal, "edge without region overlap");
    }
  }

  for (const auto& [cid, cl] : clusters_) {
    if (!tasks_.count(cl.parent_task)) fail(Err::Internal, "cluster parent missing");
    if (tasks_.at(cl.parent_task).subcluster != cid)
      fail(Err::Internal, "cluster parent link broken");
    for (int m : cl.members) {
      if (!tasks_.count(m)) fail(Err::Internal, "cluster member missing");
      if (tasks_.at(m).cluster != cid) fail(Err::Internal, "member cluster link broken");
    }
  }

  if (!frozen_edges_) {
    const double expect = task_flops(tasks_.at(root_task_).kind, root_n_);
    const double got = total_leaf_flops();
    if (std::abs(got - expect) > 1e-9 * expect)
      fail(Err::Internal, "leaf flops diverged from the root task");
  }
}

std::string TaskGraph::to_json() const {
  nlohmann::json doc;
  doc["root_n"] = root_n_;
  doc["elem_size"] = elem_size_;
  auto& jt = doc["tasks"] = nlohmann::json::array();
  for (const auto& [id, t] : tasks_) {
    nlohmann::json j;
    j["id"] = id;
    j["kind"] = to_string(t.kind);
    j["b"] = t.b;
    j["reads"] = t.reads;
    j["writes"] = t.writes;
    j["leaf"] = t.is_leaf();
    j["depth"] = task_depth(id);
    if (t.cluster) j["cluster"] = *t.cluster;
    j["creation_index"] = t.creation_index;
    jt.push_back(std::move(j));
  }
  auto& je = doc["edges"] = nlohmann::json::array();
  for (const auto& e : edges_)
    je.push_back({{"src", e.src}, {"dst", e.dst}, {"dep_kind", to_string(e.kind)}});
  auto& jb = doc["blocks"] = nlohmann::json::array();
  for (const auto& [id, b] : data_.blocks()) {
    nlohmann::json j;
    j["id"] = id;
    j["region"] = {{"row", b.region.row},
                   {"col", b.region.col},
                   {"rows", b.region.rows},
                   {"cols", b.region.cols},
                   {"elem_size", b.region.elem_size}};
    j["parents"] = b.parents;
    j["is_intersection"] = b.is_intersection;
    jb.push_back(std::move(j));
  }
  auto& jc = doc["clusters"] = nlohmann::json::array();
  for (const auto& [id, c] : clusters_)
    jc.push_back(
        {{"id", id}, {"parent_task", c.parent_task}, {"members", c.members}, {"p", c.p}});
  return doc.dump(2);
}

}  // namespace hesp
