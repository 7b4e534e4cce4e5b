#include "hesp/sim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <queue>
#include <sstream>

namespace hesp {

const char* to_string(Ordering o) { return o == Ordering::FCFS ? "FCFS" : "PL"; }
const char* to_string(Selection s) {
  switch (s) {
    case Selection::RP: return "R-P";
    case Selection::FP: return "F-P";
    case Selection::EITP: return "EIT-P";
    case Selection::EFTP: return "EFT-P";
  }
  return "?";
}
const char* to_string(Caching c) {
  switch (c) {
    case Caching::WT: return "WT";
    case Caching::WB: return "WB";
    case Caching::WA: return "WA";
  }
  return "?";
}
const char* to_string(EventRec::Kind kind) {
  switch (kind) {
    case EventRec::TaskStart: return "TaskStart";
    case EventRec::TaskEnd: return "TaskEnd";
    case EventRec::XferStart: return "XferStart";
    case EventRec::XferEnd: return "XferEnd";
  }
  return "?";
}

Ordering ordering_from(const std::string& name) {
  if (name == "FCFS") return Ordering::FCFS;
  if (name == "PL") return Ordering::PL;
  fail(Err::Config, "unknown ordering '" + name + "'");
}
Selection selection_from(const std::string& name) {
  if (name == "R-P") return Selection::RP;
  if (name == "F-P") return Selection::FP;
  if (name == "EIT-P") return Selection::EITP;
  if (name == "EFT-P") return Selection::EFTP;
  fail(Err::Config, "unknown selection '" + name + "'");
}
Caching caching_from(const std::string& name) {
  if (name == "WT") return Caching::WT;
  if (name == "WB") return Caching::WB;
  if (name == "WA") return Caching::WA;
  fail(Err::Config, "unknown caching '" + name + "'");
}

std::uint64_t Rng::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
std::size_t Rng::pick(std::size_t size) {
  return static_cast<std::size_t>(uniform() * static_cast<double>(size)) % size;
}

double LoadTrace::integral() const {
  double sum = 0;
  for (std::size_t i = 0; i + 1 < steps.size(); ++i)
    sum += steps[i].second * (steps[i + 1].first - steps[i].first);
  return sum;
}

double SimResult::busy_time() const {
  double sum = 0;
  for (const auto& [id, a] : assignments) sum += a.end - a.start;
  return sum;
}

double SimResult::avg_load(int processor_count) const {
  if (makespan <= 0 || processor_count < 1) return 0;
  return busy_time() / (processor_count * makespan);
}

// ---------------------------------------------------------------------------
// Scheduling primitives

std::map<int, double> critical_times(const TaskGraph& graph, const PerfModel& model,
                                     const Platform& platform) {
  const auto leaves = graph.leaf_tasks();
  std::map<int, double> avg;
  for (int id : leaves) {
    const Task& t = graph.task(id);
    double sum = 0;
    for (const auto& proc : platform.processors()) {
      const std::string& type = platform.types()[proc.type].name;
      if (!model.knows(t.kind, type))
        fail(Err::ModelMiss, std::string("no model entry for (") + to_string(t.kind) + "," +
                                 type + ")");
      sum += model.task_time(t.kind, t.b, type);
    }
    avg[id] = sum / platform.processor_count();
  }
  std::map<int, double> ct;
  for (auto it = leaves.rbegin(); it != leaves.rend(); ++it) {
    double best_succ = 0;
    for (int s : graph.succs(*it)) best_succ = std::max(best_succ, ct.at(s));
    ct[*it] = avg.at(*it) + best_succ;
  }
  return ct;
}

std::vector<int> order_ready(const std::vector<ReadyEntry>& ready, Ordering ordering,
                             const std::map<int, double>& ct) {
  std::vector<ReadyEntry> sorted = ready;
  if (ordering == Ordering::FCFS) {
    std::sort(sorted.begin(), sorted.end(), [](const ReadyEntry& a, const ReadyEntry& b) {
      return a.release != b.release ? a.release < b.release : a.task < b.task;
    });
  } else {
    std::sort(sorted.begin(), sorted.end(), [&ct](const ReadyEntry& a, const ReadyEntry& b) {
      const double ca = ct.at(a.task), cb = ct.at(b.task);
      return ca != cb ? ca > cb : a.task < b.task;
    });
  }
  std::vector<int> out;
  out.reserve(sorted.size());
  for (const auto& e : sorted) out.push_back(e.task);
  return out;
}

int select_processor(TaskKind kind, std::int64_t b, Selection policy,
                     const std::vector<ProcView>& procs, const std::vector<bool>& idle,
                     const PerfModel& model, double release_time, Rng& rng) {
  if (procs.empty()) fail(Err::NoProcessors, "no processors");

  switch (policy) {
    case Selection::RP: {
      std::vector<int> pool;
      for (std::size_t i = 0; i < procs.size(); ++i)
        if (idle[i]) pool.push_back(procs[i].id);
      if (pool.empty()) fail(Err::NoProcessors, "R-P with no idle processor");
      return pool[rng.pick(pool.size())];
    }
    case Selection::FP: {
      int best = -1;
      double best_time = 0;
      for (std::size_t i = 0; i < procs.size(); ++i) {
        if (!idle[i]) continue;
        const double t = model.task_time(kind, b, procs[i].type);
        if (best < 0 || t < best_time) {
          best = procs[i].id;
          best_time = t;
        }
      }
      if (best < 0) fail(Err::NoProcessors, "F-P with no idle processor");
      return best;
    }
    case Selection::EITP: {
      int best = procs.front().id;
      double best_idle = procs.front().next_idle;
      for (const auto& p : procs)
        if (p.next_idle < best_idle) {
          best = p.id;
          best_idle = p.next_idle;
        }
      return best;
    }
    case Selection::EFTP: {
      // ties fall back to next-idle, then id: keeps EFT-P decision-identical
      // to EIT-P on homogeneous single-space platforms
      int best = -1;
      double best_finish = 0, best_idle = 0;
      for (const auto& p : procs) {
        const double finish = std::max({p.next_idle, release_time, p.est_transfer_ready}) +
                              model.task_time(kind, b, p.type);
        if (best < 0 || finish < best_finish ||
            (finish == best_finish && p.next_idle < best_idle)) {
          best = p.id;
          best_finish = finish;
          best_idle = p.next_idle;
        }
      }
      return best;
    }
  }
  fail(Err::Internal, "unreachable");
}

// ---------------------------------------------------------------------------
// Coherence protocol

bool MemoryState::is_valid(int space, int block) const {
  auto it = spaces.find(space);
  return it != spaces.end() && it->second.valid.count(block) > 0;
}

namespace {

std::set<int> invalidation_cone(const DataDag& dag, int block) {
  // the write dirties the block, everything inside it, and every block that
  // contains any of that (partial overlaps join through intersection nodes)
  std::set<int> cone{block};
  for (int d : dag.descendants(block)) cone.insert(d);
  for (int c : std::set<int>(cone))
    for (int a : dag.ancestors(c)) cone.insert(a);
  return cone;
}

}  // namespace

void apply_write_coherence(MemoryState& mem, const DataDag& dag, int block, int writer_space,
                           double when) {
  const auto cone = invalidation_cone(dag, block);
  for (auto& [sid, sp] : mem.spaces) {
    if (sid == writer_space) continue;
    for (int c : cone) {
      if (sp.mat.count(c)) {
        sp.used -= dag.block(c).region.bytes();
        sp.mat.erase(c);
      }
      sp.valid.erase(c);
      sp.dirty.erase(c);
    }
  }
  auto& w = mem.spaces[writer_space];
  w.valid[block] = when;
  if (!w.mat.count(block)) {
    w.mat.insert(block);
    w.used += dag.block(block).region.bytes();
  }
  for (int d : dag.descendants(block)) {
    auto it = w.valid.find(d);
    if (it == w.valid.end() || it->second > when) w.valid[d] = when;
  }
}

// ---------------------------------------------------------------------------
// Simulation engine

namespace {

std::string task_label(const Task& t) {
  std::ostringstream os;
  os << "T" << t.id << ":" << to_string(t.kind) << ":b" << t.b;
  return os.str();
}

std::string link_label(int src, int dst) {
  return std::to_string(src) + "->" + std::to_string(dst);
}

class Engine {
 public:
  Engine(const TaskGraph& graph, const Platform& platform, const PerfModel& model,
         const SchedConfig& config)
      : g_(graph), plat_(platform), model_(model), cfg_(config), rng_(config.seed) {}

  SimResult run();

 private:
  struct PinRelease {
    double time;
    int space;
    int block;
  };

  void init_memory();
  void check_models() const;
  void commit(int task_id, int proc, double now);
  double acquire(int block, int space, double now);
  double gather(int block, int space, double now);
  double plan_transfer(int block, std::optional<Region> fragment, int src_space, int dst_space,
                       double data_ready, double now);
  void reserve_bytes(int block, int space, double at);
  void validate_from(int block, int space, double at);
  void materialize(int block, int space, double at);
  void ensure_capacity(int space, std::int64_t bytes, double at);
  void invalidate_elsewhere(int block, int writer_space, double at);
  void pin(int space, int block, double until);
  void release_pins(double now);
  bool pinned(int space, int block) const;
  std::vector<int> source_spaces(int block) const;
  void compute_idle_avgs();

  const TaskGraph& g_;
  const Platform& plat_;
  const PerfModel& model_;
  SchedConfig cfg_;
  Rng rng_;

  std::map<int, double> proc_free_;
  std::map<std::pair<int, int>, double> link_free_;
  MemoryState mem_;
  std::map<std::pair<int, int>, double> last_use_;  // (space, block) -> LRU stamp
  std::map<std::pair<int, int>, int> pin_count_;
  std::vector<PinRelease> pin_releases_;
  std::vector<Region> written_regions_;

  std::map<int, int> missing_preds_;
  std::map<int, double> release_time_;
  std::set<int> committed_;
  std::map<int, double> ct_;

  SimResult res_;
};

void Engine::check_models() const {
  for (int id : g_.leaf_tasks()) {
    const Task& t = g_.task(id);
    for (const auto& type : plat_.types())
      if (!model_.knows(t.kind, type.name))
        fail(Err::ModelMiss, std::string("leaf ") + std::to_string(id) + " (" +
                                 to_string(t.kind) + ") has no model for type '" + type.name +
                                 "'");
  }
}

void Engine::init_memory() {
  for (const auto& s : plat_.spaces()) mem_.spaces[s.id];
  const int main = plat_.main_space();
  auto& ms = mem_.spaces.at(main);
  for (int root : g_.data().roots()) {
    const std::int64_t bytes = g_.data().block(root).region.bytes();
    ms.mat.insert(root);
    ms.valid[root] = 0.0;
    ms.used += bytes;
    last_use_[{main, root}] = 0.0;
    res_.residency_log.push_back({0.0, main, bytes, root});
  }
  if (ms.used > plat_.space(main).capacity_bytes)
    fail(Err::CapacityInfeasible, "initial data exceeds main space capacity");
  for (const auto& [id, blk] : g_.data().blocks())
    if (!ms.valid.count(id)) ms.valid[id] = 0.0;  // views into the root data
}

std::vector<int> Engine::source_spaces(int block) const {
  std::vector<int> out;
  const int main = plat_.main_space();
  if (mem_.is_valid(main, block)) out.push_back(main);
  for (const auto& [sid, sp] : mem_.spaces) {
    if (sid == main) continue;
    if (sp.valid.count(block)) out.push_back(sid);
  }
  return out;
}

void Engine::pin(int space, int block, double until) {
  ++pin_count_[{space, block}];
  pin_releases_.push_back({until, space, block});
}

void Engine::release_pins(double now) {
  auto it = pin_releases_.begin();
  while (it != pin_releases_.end()) {
    if (it->time <= now) {
      auto key = std::make_pair(it->space, it->block);
      if (--pin_count_[key] <= 0) pin_count_.erase(key);
      it = pin_releases_.erase(it);
    } else {
      ++it;
    }
  }
}

bool Engine::pinned(int space, int block) const {
  return pin_count_.count({space, block}) > 0;
}

void Engine::ensure_capacity(int space, std::int64_t bytes, double at) {
  auto& sp = mem_.spaces.at(space);
  const std::int64_t cap = plat_.space(space).capacity_bytes;
  if (bytes > cap)
    fail(Err::CapacityInfeasible, "block of " + std::to_string(bytes) +
                                      " bytes exceeds space " + std::to_string(space));
  const int main = plat_.main_space();
  while (sp.used + bytes > cap) {
    // LRU victim among unpinned materialized blocks
    int victim = -1;
    double victim_stamp = 0;
    for (int m : sp.mat) {
      if (pinned(space, m)) continue;
      if (space == main) {
        // main is the backing store: never evict roots or sole copies
        if (g_.data().block(m).parents.empty()) continue;
        bool elsewhere = false;
        for (const auto& [sid2, sp2] : mem_.spaces)
          if (sid2 != space && sp2.valid.count(m)) elsewhere = true;
        if (!elsewhere) continue;
      }
      const double stamp = last_use_.at({space, m});
      if (victim < 0 || stamp < victim_stamp || (stamp == victim_stamp && m < victim)) {
        victim = m;
        victim_stamp = stamp;
      }
    }
    if (victim < 0)
      fail(Err::CapacityInfeasible,
           "space " + std::to_string(space) + " cannot free room for " + std::to_string(bytes) +
               " bytes");
    const std::int64_t vbytes = g_.data().block(victim).region.bytes();
    if (sp.dirty.count(victim)) {
      const double ready = sp.valid.at(victim);
      const double arrival =
          plan_transfer(victim, std::nullopt, space, plat_.main_space(), ready, at);
      sp.dirty.erase(victim);
      materialize(victim, plat_.main_space(), arrival);
    }
    sp.mat.erase(victim);
    sp.valid.erase(victim);
    sp.used -= vbytes;
    last_use_.erase({space, victim});
    res_.residency_log.push_back({at, space, -vbytes, victim});
    // views lose their backing when no remaining materialized block covers them
    const Region& vr = g_.data().block(victim).region;
    for (auto it = sp.valid.begin(); it != sp.valid.end();) {
      const int vb = it->first;
      if (sp.mat.count(vb) || !regions_overlap(g_.data().block(vb).region, vr)) {
        ++it;
        continue;
      }
      bool covered = false;
      for (int m : sp.mat)
        if (region_contains(g_.data().block(m).region, g_.data().block(vb).region)) {
          covered = true;
          break;
        }
      if (covered || space == main) {
        ++it;  // main keeps views over never-written residue
      } else {
        it = sp.valid.erase(it);
      }
    }
  }
}

void Engine::reserve_bytes(int block, int space, double at) {
  auto& sp = mem_.spaces.at(space);
  if (sp.mat.count(block)) return;
  const std::int64_t bytes = g_.data().block(block).region.bytes();
  ensure_capacity(space, bytes, at);
  sp.mat.insert(block);
  sp.used += bytes;
  res_.residency_log.push_back({at, space, bytes, block});
  last_use_[{space, block}] = at;
}

void Engine::validate_from(int block, int space, double at) {
  auto& sp = mem_.spaces.at(space);
  auto upd = [&](int b, double t) {
    auto it = sp.valid.find(b);
    if (it == sp.valid.end() || it->second > t) sp.valid[b] = t;
  };
  upd(block, at);
  for (int d : g_.data().descendants(block)) upd(d, at);
  last_use_[{space, block}] = std::max(last_use_[{space, block}], at);
}

void Engine::materialize(int block, int space, double at) {
  reserve_bytes(block, space, at);
  validate_from(block, space, at);
}

double Engine::plan_transfer(int block, std::optional<Region> fragment, int src_space,
                             int dst_space, double data_ready, double now) {
  const std::int64_t bytes =
      fragment ? fragment->bytes() : g_.data().block(block).region.bytes();
  auto plan = transfer_time(plat_, bytes, src_space, dst_space);

  TransferRec rec;
  rec.block = block;
  rec.fragment = fragment;
  rec.bytes = bytes;
  rec.dst_space = dst_space;

  double ready = std::max(data_ready, now);
  double start0 = 0;
  for (const auto& hop : plan.route) {
    auto key = std::make_pair(hop.src, hop.dst);
    double& free = link_free_[key];
    const double start = std::max(free, ready);
    const double end = start + hop.latency_s + static_cast<double>(bytes) / hop.bandwidth_bps;
    free = end;
    ready = end;
    if (rec.route.empty()) start0 = start;
    rec.route.push_back(key);
    const std::string label = "B" + std::to_string(block);
    res_.events.push_back({EventRec::XferStart, start, label, link_label(hop.src, hop.dst)});
    res_.events.push_back({EventRec::XferEnd, end, label, link_label(hop.src, hop.dst)});
  }
  rec.start = start0;
  rec.end = ready;
  res_.transfers.push_back(rec);
  return ready;
}

double Engine::acquire(int block, int space, double now) {
  auto& sp = mem_.spaces.at(space);
  if (auto it = sp.valid.find(block); it != sp.valid.end()) {
    last_use_[{space, block}] = std::max(last_use_[{space, block}], now);
    return it->second;
  }

  auto sources = source_spaces(block);
  std::erase(sources, space);
  if (!sources.empty()) {
    const int src = sources.front();  // main first, then lowest id
    const double ready = mem_.spaces.at(src).valid.at(block);
    const double arrival = plan_transfer(block, std::nullopt, src, space, ready, now);
    pin(src, block, arrival);
    materialize(block, space, arrival);
    return arrival;
  }
  return gather(block, space, now);
}

double Engine::gather(int block, int space, double now) {
  // No whole copy anywhere: assemble the region from valid fragments,
  // falling back to never-written residue still sitting in main.
  const Region target = g_.data().block(block).region;

  struct Piece {
    int id;
    bool local;
    std::int64_t area;
  };
  std::vector<Piece> candidates;
  for (const auto& [bid, blk] : g_.data().blocks()) {
    if (bid == block) continue;
    if (!region_contains(target, blk.region)) continue;
    bool local = mem_.spaces.at(space).valid.count(bid) > 0;
    bool anywhere = local || !source_spaces(bid).empty();
    if (!anywhere) continue;
    candidates.push_back({bid, local, blk.region.rows * blk.region.cols});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Piece& a, const Piece& b) {
    if (a.local != b.local) return a.local;
    if (a.area != b.area) return a.area > b.area;
    return a.id < b.id;
  });

  double arrival = 0;
  std::vector<Region> covered;
  for (const auto& piece : candidates) {
    const Region& pr = g_.data().block(piece.id).region;
    if (subtract_regions(pr, covered).empty()) continue;  // adds nothing
    arrival = std::max(arrival, acquire(piece.id, space, now));
    covered.push_back(pr);
  }

  const auto residue = subtract_regions(target, covered);
  if (!residue.empty()) {
    for (const auto& frag : residue)
      for (const auto& wr : written_regions_)
        if (regions_overlap(frag, wr))
          fail(Err::Coherence, "no valid copy covers written data of block " +
                                   std::to_string(block));
    if (space != plat_.main_space())
      for (const auto& frag : residue)
        arrival = std::max(
            arrival, plan_transfer(block, frag, plat_.main_space(), space, 0.0, now));
  }

  auto& sp = mem_.spaces.at(space);
  auto it = sp.valid.find(block);
  if (it == sp.valid.end() || it->second > arrival) sp.valid[block] = arrival;
  return arrival;
}

void Engine::invalidate_elsewhere(int block, int writer_space, double at) {
  const auto cone = invalidation_cone(g_.data(), block);
  for (auto& [sid, sp] : mem_.spaces) {
    if (sid == writer_space) continue;
    for (int c : cone) {
      if (sp.mat.count(c)) {
        const std::int64_t bytes = g_.data().block(c).region.bytes();
        sp.mat.erase(c);
        sp.used -= bytes;
        last_use_.erase({sid, c});
        res_.residency_log.push_back({at, sid, -bytes, c});
      }
      sp.valid.erase(c);
      sp.dirty.erase(c);
    }
  }
}

void Engine::commit(int task_id, int proc, double now) {
  const Task& t = g_.task(task_id);
  const int space = plat_.space_of(proc);
  const std::string& type = plat_.type_name(proc);

  std::set<int> working(t.reads.begin(), t.reads.end());
  working.insert(t.writes.begin(), t.writes.end());
  std::int64_t wset = 0;
  for (int b : working) wset += g_.data().block(b).region.bytes();
  if (wset > plat_.space(space).capacity_bytes)
    fail(Err::CapacityInfeasible, "task " + std::to_string(task_id) + " working set of " +
                                      std::to_string(wset) + " bytes exceeds space " +
                                      std::to_string(space));

  // inputs are pinned as they land so a later acquire cannot evict them
  double inputs_ready = 0;
  for (int b : working) {
    inputs_ready = std::max(inputs_ready, acquire(b, space, now));
    ++pin_count_[{space, b}];
  }
  const int out = t.writes.front();
  reserve_bytes(out, space, now);

  const double start = std::max({proc_free_[proc], release_time_.at(task_id), inputs_ready});
  const double end = start + model_.task_time(t.kind, t.b, type);
  proc_free_[proc] = end;

  res_.assignments[task_id] = {task_id, proc, start, end};
  res_.events.push_back({EventRec::TaskStart, start, task_label(t), std::to_string(proc)});
  res_.events.push_back({EventRec::TaskEnd, end, task_label(t), std::to_string(proc)});

  for (int b : working) pin_releases_.push_back({end, space, b});

  invalidate_elsewhere(out, space, start);
  auto& sp = mem_.spaces.at(space);
  validate_from(out, space, end);
  sp.valid[out] = end;
  written_regions_.push_back(g_.data().block(out).region);

  const int main = plat_.main_space();
  if (space != main) {
    switch (cfg_.caching) {
      case Caching::WT: {
        const double arrival = plan_transfer(out, std::nullopt, space, main, end, now);
        pin(space, out, arrival);
        materialize(out, main, arrival);
        break;
      }
      case Caching::WB:
        sp.dirty.insert(out);
        break;
      case Caching::WA: {
        const double arrival = plan_transfer(out, std::nullopt, space, main, end, now);
        pin(space, out, arrival);
        materialize(out, main, arrival);
        // write-around: the local copy is dropped once main has the line
        const std::int64_t bytes = g_.data().block(out).region.bytes();
        sp.mat.erase(out);
        sp.used -= bytes;
        last_use_.erase({space, out});
        res_.residency_log.push_back({arrival, space, -bytes, out});
        sp.valid.erase(out);
        for (int d : g_.data().descendants(out)) sp.valid.erase(d);
        break;
      }
    }
  }

  committed_.insert(task_id);
  for (int s : g_.succs(task_id)) {
    if (--missing_preds_.at(s) == 0) {
      double rel = 0;
      for (int p : g_.preds(s)) rel = std::max(rel, res_.assignments.at(p).end);
      release_time_[s] = rel;
    }
  }
}

void Engine::compute_idle_avgs() {
  const int P = plat_.processor_count();
  std::vector<std::pair<double, int>> deltas;
  for (const auto& [id, a] : res_.assignments) {
    deltas.push_back({a.start, +1});
    deltas.push_back({a.end, -1});
  }
  std::sort(deltas.begin(), deltas.end());
  std::vector<double> times;
  std::vector<int> active;  // active count on [times[i], times[i+1])
  std::vector<double> cum;  // cumulative idle integral up to times[i]
  int cur = 0;
  for (std::size_t i = 0; i < deltas.size();) {
    const double t = deltas[i].first;
    while (i < deltas.size() && deltas[i].first == t) cur += deltas[i++].second;
    times.push_back(t);
    active.push_back(cur);
  }
  cum.assign(times.size(), 0.0);
  for (std::size_t i = 1; i < times.size(); ++i)
    cum[i] = cum[i - 1] + (P - active[i - 1]) * (times[i] - times[i - 1]);

  auto idle_up_to = [&](double t) {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0.0;
    const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
    return cum[k] + (P - active[k]) * (t - times[k]);
  };
  for (const auto& [id, a] : res_.assignments) {
    const double dur = a.end - a.start;
    res_.idle_avg[id] = dur > 0 ? (idle_up_to(a.end) - idle_up_to(a.start)) / dur : 0.0;
  }
}

SimResult Engine::run() {
  const auto leaves = g_.leaf_tasks();
  if (leaves.empty()) fail(Err::Validation, "graph has no leaf tasks");
  if (plat_.processor_count() < 1) fail(Err::NoProcessors, "no processors");
  check_models();

  // acyclicity (custom graphs carry explicit edges)
  {
    std::map<int, int> indeg;
    for (int id : leaves) indeg[id] = static_cast<int>(g_.preds(id).size());
    std::deque<int> q;
    for (auto& [id, d] : indeg)
      if (d == 0) q.push_back(id);
    std::size_t seen = 0;
    while (!q.empty()) {
      int cur = q.front();
      q.pop_front();
      ++seen;
      for (int s : g_.succs(cur))
        if (--indeg.at(s) == 0) q.push_back(s);
    }
    if (seen != leaves.size()) fail(Err::Validation, "task graph has a cycle");
  }

  init_memory();
  for (const auto& p : plat_.processors()) proc_free_[p.id] = 0.0;

  if (cfg_.ordering == Ordering::PL) ct_ = critical_times(g_, model_, plat_);

  for (int id : leaves) {
    missing_preds_[id] = static_cast<int>(g_.preds(id).size());
    if (missing_preds_[id] == 0) release_time_[id] = 0.0;
  }

  std::priority_queue<double, std::vector<double>, std::greater<>> epochs;
  epochs.push(0.0);
  std::size_t committed_count = 0;

  while (committed_count < leaves.size()) {
    if (epochs.empty()) fail(Err::Internal, "scheduler stalled with tasks pending");
    const double now = epochs.top();
    while (!epochs.empty() && epochs.top() <= now) epochs.pop();
    release_pins(now);

    std::vector<ReadyEntry> ready;
    for (const auto& [id, rel] : release_time_)
      if (!committed_.count(id) && rel <= now) ready.push_back({id, rel});

    for (int task_id : order_ready(ready, cfg_.ordering, ct_)) {
      const Task& t = g_.task(task_id);
      std::vector<ProcView> views;
      std::vector<bool> idle;
      bool any_idle = false;
      for (const auto& p : plat_.processors()) {
        ProcView v;
        v.id = p.id;
        v.type = plat_.types()[p.type].name;
        v.next_idle = proc_free_.at(p.id);
        if (cfg_.selection == Selection::EFTP) {
          // estimate (no reservation) of when this task's inputs could be
          // local to p's space under the current caching state
          const int sp = p.space;
          double est = 0;
          std::map<std::pair<int, int>, double> acc;
          std::set<int> blocks(t.reads.begin(), t.reads.end());
          blocks.insert(t.writes.begin(), t.writes.end());
          for (int b : blocks) {
            if (auto it = mem_.spaces.at(sp).valid.find(b);
                it != mem_.spaces.at(sp).valid.end()) {
              est = std::max(est, it->second);
              continue;
            }
            auto sources = source_spaces(b);
            std::erase(sources, sp);
            if (sources.empty()) continue;  // assembled on demand; estimate skips it
            const int src = sources.front();
            const auto plan =
                transfer_time(plat_, g_.data().block(b).region.bytes(), src, sp);
            double tarr = std::max(now, mem_.spaces.at(src).valid.at(b));
            for (const auto& hop : plan.route) {
              auto key = std::make_pair(hop.src, hop.dst);
              acc[key] += hop.latency_s +
                          static_cast<double>(g_.data().block(b).region.bytes()) /
                              hop.bandwidth_bps;
              tarr += acc[key];
            }
            est = std::max(est, tarr);
          }
          v.est_transfer_ready = est;
        }
        views.push_back(std::move(v));
        const bool is_idle = proc_free_.at(p.id) <= now;
        idle.push_back(is_idle);
        any_idle = any_idle || is_idle;
      }

      if ((cfg_.selection == Selection::RP || cfg_.selection == Selection::FP) && !any_idle)
        break;  // R-P/F-P wait for the next processor release

      const int proc = select_processor(t.kind, t.b, cfg_.selection, views, idle, model_,
                                        release_time_.at(task_id), rng_);
      commit(task_id, proc, now);
      ++committed_count;
      epochs.push(res_.assignments.at(task_id).end);
    }
  }

  for (const auto& [id, a] : res_.assignments) res_.makespan = std::max(res_.makespan, a.end);

  std::stable_sort(res_.events.begin(), res_.events.end(),
                   [](const EventRec& a, const EventRec& b) {
                     if (a.time != b.time) return a.time < b.time;
                     if (a.kind != b.kind) return a.kind < b.kind;
                     if (a.resource != b.resource) return a.resource < b.resource;
                     return a.subject < b.subject;
                   });
  std::stable_sort(res_.residency_log.begin(), res_.residency_log.end(),
                   [](const ResidencyChange& a, const ResidencyChange& b) {
                     if (a.time != b.time) return a.time < b.time;
                     if (a.space != b.space) return a.space < b.space;
                     if (a.delta_bytes != b.delta_bytes) return a.delta_bytes > b.delta_bytes;
                     return a.block < b.block;
                   });
  std::stable_sort(res_.transfers.begin(), res_.transfers.end(),
                   [](const TransferRec& a, const TransferRec& b) {
                     if (a.start != b.start) return a.start < b.start;
                     return a.block < b.block;
                   });
  compute_idle_avgs();
  return std::move(res_);
}

}  // namespace

SimResult simulate(const TaskGraph& graph, const Platform& platform, const PerfModel& model,
                   const SchedConfig& config) {
  Engine engine(graph, platform, model, config);
  return engine.run();
}

// ---------------------------------------------------------------------------
// Schedule verification (independent replay)

namespace {

struct WriteEvt {
  double end;
  int space;
  Region region;
};

}  // namespace

std::vector<std::string> verify_schedule(const SimResult& result, const TaskGraph& graph,
                                         const Platform& platform) {
  std::vector<std::string> violations;
  const double eps = 1e-9 * std::max(1.0, result.makespan);

  // (a) per-processor intervals disjoint
  std::map<int, std::vector<Assignment>> per_proc;
  for (const auto& [id, a] : result.assignments) per_proc[a.proc].push_back(a);
  for (auto& [proc, list] : per_proc) {
    std::sort(list.begin(), list.end(),
              [](const Assignment& x, const Assignment& y) { return x.start < y.start; });
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i].start < list[i - 1].end - eps)
        violations.push_back("processor " + std::to_string(proc) + ": tasks " +
                             std::to_string(list[i - 1].task) + " and " +
                             std::to_string(list[i].task) + " overlap");
  }

  // (b) dependence ordering
  for (const auto& e : graph.edges()) {
    auto si = result.assignments.find(e.src);
    auto di = result.assignments.find(e.dst);
    if (si == result.assignments.end() || di == result.assignments.end()) {
      violations.push_back("edge endpoint not scheduled");
      continue;
    }
    if (di->second.start < si->second.end - eps)
      violations.push_back("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                           " violated: dst starts before src ends");
  }

  // (c) read coherence: the freshest version of every fragment a task reads
  // must have reached the task's space before the task starts
  std::vector<WriteEvt> writes;
  for (const auto& [id, a] : result.assignments) {
    const Task& t = graph.task(id);
    for (int w : t.writes)
      writes.push_back({a.end, platform.space_of(a.proc), graph.data().block(w).region});
  }
  const int main_space = platform.main_space();

  for (const auto& [id, a] : result.assignments) {
    const Task& t = graph.task(id);
    const int space = platform.space_of(a.proc);
    for (int rblk : t.reads) {
      const Region rreg = graph.data().block(rblk).region;

      // fragment grid induced by all write rectangles
      std::vector<std::int64_t> xs{rreg.col, rreg.col + rreg.cols};
      std::vector<std::int64_t> ys{rreg.row, rreg.row + rreg.rows};
      for (const auto& w : writes) {
        if (!regions_overlap(w.region, rreg)) continue;
        xs.push_back(std::clamp(w.region.col, rreg.col, rreg.col + rreg.cols));
        xs.push_back(std::clamp(w.region.col + w.region.cols, rreg.col, rreg.col + rreg.cols));
        ys.push_back(std::clamp(w.region.row, rreg.row, rreg.row + rreg.rows));
        ys.push_back(std::clamp(w.region.row + w.region.rows, rreg.row, rreg.row + rreg.rows));
      }
      std::sort(xs.begin(), xs.end());
      xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
      std::sort(ys.begin(), ys.end());
      ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

      for (std::size_t yi = 0; yi + 1 < ys.size(); ++yi)
        for (std::size_t xi = 0; xi + 1 < xs.size(); ++xi) {
          const Region cell{ys[yi], xs[xi], ys[yi + 1] - ys[yi], xs[xi + 1] - xs[xi],
                            rreg.elem_size};
          // freshest write of this cell before the read starts
          double w_end = -1;
          int w_space = main_space;
          for (const auto& w : writes) {
            if (w.end > a.start + eps) continue;
            if (!region_contains(w.region, cell)) continue;
            if (w.end > w_end) {
              w_end = w.end;
              w_space = w.space;
            }
          }
          bool ok = false;
          if (w_end >= 0 && w_space == space) ok = true;  // written locally
          if (!ok && w_end < 0 && space == main_space) ok = true;  // initial data
          if (!ok) {
            const double lower = std::max(w_end, 0.0);
            for (const auto& x : result.transfers) {
              if (x.dst_space != space) continue;
              const Region xr = x.fragment ? *x.fragment : graph.data().block(x.block).region;
              if (!region_contains(xr, cell)) continue;
              if (x.end <= a.start + eps && x.end >= lower - eps) {
                ok = true;
                break;
              }
            }
          }
          if (!ok) {
            violations.push_back("task " + std::to_string(id) + " reads block " +
                                 std::to_string(rblk) + " in space " + std::to_string(space) +
                                 " without a fresh local copy");
            goto next_read;
          }
        }
    next_read:;
    }
  }

  // (d) capacity respected at every residency change
  std::map<int, std::int64_t> used;
  for (const auto& rc : result.residency_log) {
    used[rc.space] += rc.delta_bytes;
    if (used[rc.space] > platform.space(rc.space).capacity_bytes)
      violations.push_back("space " + std::to_string(rc.space) + " exceeds capacity at t=" +
                           std::to_string(rc.time));
    if (used[rc.space] < 0)
      violations.push_back("space " + std::to_string(rc.space) + " under-run at t=" +
                           std::to_string(rc.time));
  }

  return violations;
}

LoadTrace compute_load_trace(const SimResult& result, const Platform& platform) {
  (void)platform;
  std::vector<std::pair<double, int>> deltas;
  for (const auto& [id, a] : result.assignments) {
    deltas.push_back({a.start, +1});
    deltas.push_back({a.end, -1});
  }
  std::sort(deltas.begin(), deltas.end());
  LoadTrace trace;
  int active = 0;
  for (std::size_t i = 0; i < deltas.size();) {
    const double t = deltas[i].first;
    while (i < deltas.size() && deltas[i].first == t) active += deltas[i++].second;
    trace.steps.push_back({t, active});
  }
  return trace;
}

}  // namespace hesp
