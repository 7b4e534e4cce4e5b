#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hesp/errors.hpp"

namespace hesp {

// Task kinds of the built-in tiled Cholesky workload. The partitioner
// registry in graph.hpp is the extension point for other workloads.
enum class TaskKind { CHOL, TRSM, SYRK, GEMM };

const char* to_string(TaskKind kind);
TaskKind task_kind_from(const std::string& name);

// Flop counts for a b x b block task. Real-valued, no rounding.
//   CHOL: b^3/3   TRSM: b^3   SYRK: b^3   GEMM: 2 b^3
double task_flops(TaskKind kind, std::int64_t b);

struct ProcessorType {
  std::string name;
  std::string description;
};

struct MemorySpace {
  int id = 0;
  std::int64_t capacity_bytes = 0;
  bool is_main = false;
};

struct Processor {
  int id = 0;
  int type = 0;   // index into Platform::types()
  int space = 0;  // memory space id
};

struct Link {
  int src = 0;
  int dst = 0;
  double latency_s = 0.0;
  double bandwidth_bps = 0.0;  // bytes per second
};

// Immutable description of the hardware: memory spaces, processors,
// interconnect links. Safe to share across threads after construction.
class Platform {
 public:
  // Parses the JSON platform document (see README for the schema) and
  // validates all invariants: exactly one main space, positive capacities,
  // dense processor ids, star links between every non-main space and main.
  static Platform from_json(const std::string& text);

  static Platform make(std::vector<MemorySpace> spaces, std::vector<ProcessorType> types,
                       std::vector<Processor> processors, std::vector<Link> links);

  const std::vector<MemorySpace>& spaces() const { return spaces_; }
  const std::vector<ProcessorType>& types() const { return types_; }
  const std::vector<Processor>& processors() const { return processors_; }
  const std::vector<Link>& links() const { return links_; }

  int processor_count() const { return static_cast<int>(processors_.size()); }
  int main_space() const { return main_space_; }
  const MemorySpace& space(int id) const;
  const Processor& processor(int id) const { return processors_.at(id); }
  int space_of(int proc_id) const { return processors_.at(proc_id).space; }
  const std::string& type_name(int proc_id) const {
    return types_.at(processors_.at(proc_id).type).name;
  }
  const Link* link_between(int src_space, int dst_space) const;
  bool homogeneous() const;  // all processors share one type

 private:
  Platform() = default;
  void validate() const;

  std::vector<MemorySpace> spaces_;
  std::vector<ProcessorType> types_;
  std::vector<Processor> processors_;
  std::vector<Link> links_;
  int main_space_ = 0;
  std::map<std::pair<int, int>, std::size_t> link_index_;
};

struct TransferPlan {
  double seconds = 0.0;
  std::vector<Link> route;  // one or two hops; transfers route via main
};

// Time to move `bytes` from src_space to dst_space: a direct link when
// declared, otherwise two hops through the main space. Each hop costs
// latency + bytes/bandwidth.
TransferPlan transfer_time(const Platform& platform, std::int64_t bytes, int src_space,
                           int dst_space);

// Per-(task kind, processor type) execution-time model. Either tabulated
// from measured samples or analytic with a saturating-efficiency curve:
//   time = flops / (peak_rate * b / (b + b_half))
// Tabulated queries off the sample grid interpolate the flop rate
// log-log-linearly between the bracketing sizes and clamp outside the range.
class PerfModel {
 public:
  enum class Variant { Tabulated, Analytic };

  PerfModel() : variant_(Variant::Tabulated) {}

  // CSV with header `kind,proc_type,b,seconds`. Duplicate (kind,type,b)
  // rows are rejected; times that do not increase with b produce a warning
  // but the data is kept.
  static PerfModel from_table_csv(const std::string& csv);

  // JSON array of {kind, proc_type, peak_flops, b_half}.
  static PerfModel from_analytic_json(const std::string& text);

  static PerfModel analytic(
      const std::vector<std::tuple<TaskKind, std::string, double, double>>& entries);
  static PerfModel tabulated(
      const std::vector<std::tuple<TaskKind, std::string, std::int64_t, double>>& rows);

  double task_time(TaskKind kind, std::int64_t b, const std::string& proc_type) const;
  bool knows(TaskKind kind, const std::string& proc_type) const;
  bool empty() const;
  Variant variant() const { return variant_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct AnalyticEntry {
    double peak_rate = 0.0;  // flops/second at full efficiency
    double b_half = 0.0;     // block side at which efficiency is 1/2
  };

  Variant variant_;
  // (kind, type) -> b -> seconds, b ascending.
  std::map<std::pair<TaskKind, std::string>, std::map<std::int64_t, double>> table_;
  std::map<std::pair<TaskKind, std::string>, AnalyticEntry> analytic_;
  std::vector<std::string> warnings_;
};

}  // namespace hesp
