#include "hesp/platform.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hesp {

const char* to_string(Err code) {
  switch (code) {
    case Err::Parse: return "ParseError";
    case Err::Validation: return "ValidationError";
    case Err::DuplicateEntry: return "DuplicateEntry";
    case Err::UnknownKindOrType: return "UnknownKindOrType";
    case Err::EmptyModel: return "EmptyModel";
    case Err::NoRoute: return "NoRoute";
    case Err::InvalidSize: return "InvalidSize";
    case Err::NotALeaf: return "NotALeaf";
    case Err::IndivisibleGrain: return "IndivisibleGrain";
    case Err::UnknownPartitioner: return "UnknownPartitioner";
    case Err::NestedCluster: return "NestedCluster";
    case Err::UnknownCluster: return "UnknownCluster";
    case Err::ModelMiss: return "ModelMiss";
    case Err::CapacityInfeasible: return "CapacityInfeasible";
    case Err::NoProcessors: return "NoProcessors";
    case Err::GrainTooSmall: return "GrainTooSmall";
    case Err::EmptyCandidates: return "EmptyCandidates";
    case Err::MissingTrace: return "MissingTrace";
    case Err::Config: return "ConfigError";
    case Err::Coherence: return "CoherenceError";
    case Err::Internal: return "InternalError";
  }
  return "Error";
}

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::CHOL: return "CHOL";
    case TaskKind::TRSM: return "TRSM";
    case TaskKind::SYRK: return "SYRK";
    case TaskKind::GEMM: return "GEMM";
  }
  return "?";
}

TaskKind task_kind_from(const std::string& name) {
  if (name == "CHOL") return TaskKind::CHOL;
  if (name == "TRSM") return TaskKind::TRSM;
  if (name == "SYRK") return TaskKind::SYRK;
  if (name == "GEMM") return TaskKind::GEMM;
  fail(Err::Parse, "unknown task kind '" + name + "'");
}

double task_flops(TaskKind kind, std::int64_t b) {
  const double bd = static_cast<double>(b);
  switch (kind) {
    case TaskKind::CHOL: return bd * bd * bd / 3.0;
    case TaskKind::TRSM: return bd * bd * bd;
    case TaskKind::SYRK: return bd * bd * bd;
    case TaskKind::GEMM: return 2.0 * bd * bd * bd;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Platform

Platform Platform::make(std::vector<MemorySpace> spaces, std::vector<ProcessorType> types,
                        std::vector<Processor> processors, std::vector<Link> links) {
  Platform p;
  p.spaces_ = std::move(spaces);
  p.types_ = std::move(types);
  p.processors_ = std::move(processors);
  p.links_ = std::move(links);
  std::sort(p.processors_.begin(), p.processors_.end(),
            [](const Processor& a, const Processor& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < p.links_.size(); ++i) {
    auto key = std::make_pair(p.links_[i].src, p.links_[i].dst);
    if (p.link_index_.count(key))
      fail(Err::Validation, "duplicate link " + std::to_string(key.first) + "->" +
                                std::to_string(key.second));
    p.link_index_[key] = i;
  }
  p.validate();
  return p;
}

void Platform::validate() const {
  int mains = 0;
  std::set<int> space_ids;
  for (const auto& s : spaces_) {
    if (s.capacity_bytes <= 0)
      fail(Err::Validation, "space " + std::to_string(s.id) + " has nonpositive capacity");
    if (!space_ids.insert(s.id).second)
      fail(Err::Validation, "duplicate space id " + std::to_string(s.id));
    if (s.is_main) {
      ++mains;
      const_cast<Platform*>(this)->main_space_ = s.id;
    }
  }
  if (mains != 1)
    fail(Err::Validation, "platform must have exactly one main space, found " +
                              std::to_string(mains));

  std::set<std::string> type_names;
  for (const auto& t : types_)
    if (!type_names.insert(t.name).second)
      fail(Err::Validation, "duplicate processor type '" + t.name + "'");

  if (processors_.empty()) fail(Err::Validation, "platform has no processors");
  for (std::size_t i = 0; i < processors_.size(); ++i) {
    const auto& p = processors_[i];
    if (p.id != static_cast<int>(i))
      fail(Err::Validation, "processor ids must be dense 0..P-1");
    if (p.type < 0 || p.type >= static_cast<int>(types_.size()))
      fail(Err::Validation, "processor " + std::to_string(p.id) + " has unknown type");
    if (!space_ids.count(p.space))
      fail(Err::Validation, "processor " + std::to_string(p.id) + " tied to unknown space");
  }

  for (const auto& l : links_) {
    if (!space_ids.count(l.src) || !space_ids.count(l.dst))
      fail(Err::Validation, "link references unknown space");
    if (l.src == l.dst) fail(Err::Validation, "link with src == dst");
    if (l.latency_s < 0) fail(Err::Validation, "negative link latency");
    if (l.bandwidth_bps <= 0) fail(Err::Validation, "nonpositive link bandwidth");
  }

  for (const auto& s : spaces_) {
    if (s.id == main_space_) continue;
    if (!link_between(s.id, main_space_) || !link_between(main_space_, s.id))
      fail(Err::Validation, "space " + std::to_string(s.id) +
                                " is missing a link to or from the main space");
  }
}

const MemorySpace& Platform::space(int id) const {
  for (const auto& s : spaces_)
    if (s.id == id) return s;
  fail(Err::Validation, "unknown space id " + std::to_string(id));
}

const Link* Platform::link_between(int src_space, int dst_space) const {
  auto it = link_index_.find({src_space, dst_space});
  return it == link_index_.end() ? nullptr : &links_[it->second];
}

bool Platform::homogeneous() const {
  for (const auto& p : processors_)
    if (p.type != processors_.front().type) return false;
  return true;
}

Platform Platform::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::Parse, std::string("platform document: ") + e.what());
  }
  try {
    std::vector<MemorySpace> spaces;
    for (const auto& js : doc.at("spaces"))
      spaces.push_back({js.at("id").get<int>(), js.at("capacity_bytes").get<std::int64_t>(),
                        js.value("is_main", false)});

    std::vector<ProcessorType> types;
    std::map<std::string, int> type_index;
    for (const auto& jt : doc.at("types")) {
      ProcessorType t{jt.at("name").get<std::string>(), jt.value("description", "")};
      type_index[t.name] = static_cast<int>(types.size());
      types.push_back(t);
    }

    std::vector<Processor> procs;
    for (const auto& jp : doc.at("processors")) {
      const std::string tname = jp.at("type").get<std::string>();
      if (!type_index.count(tname))
        fail(Err::Validation, "processor references unknown type '" + tname + "'");
      procs.push_back({jp.at("id").get<int>(), type_index[tname], jp.at("space").get<int>()});
    }

    std::vector<Link> links;
    if (doc.contains("links"))
      for (const auto& jl : doc.at("links"))
        links.push_back({jl.at("src").get<int>(), jl.at("dst").get<int>(),
                         jl.at("latency_s").get<double>(), jl.at("bandwidth_Bps").get<double>()});

    return make(std::move(spaces), std::move(types), std::move(procs), std::move(links));
  } catch (const nlohmann::json::exception& e) {
    fail(Err::Parse, std::string("platform document: ") + e.what());
  }
}

TransferPlan transfer_time(const Platform& platform, std::int64_t bytes, int src_space,
                           int dst_space) {
  if (src_space == dst_space)
    fail(Err::Validation, "transfer_time called with src == dst (space " +
                              std::to_string(src_space) + ")");
  platform.space(src_space);
  platform.space(dst_space);

  auto hop = [bytes](const Link& l) {
    return l.latency_s + static_cast<double>(bytes) / l.bandwidth_bps;
  };

  if (const Link* direct = platform.link_between(src_space, dst_space))
    return {hop(*direct), {*direct}};

  const int main = platform.main_space();
  const Link* up = platform.link_between(src_space, main);
  const Link* down = platform.link_between(main, dst_space);
  if (!up || !down)
    fail(Err::NoRoute, "no route from space " + std::to_string(src_space) + " to " +
                           std::to_string(dst_space));
  return {hop(*up) + hop(*down), {*up, *down}};
}

// ---------------------------------------------------------------------------
// PerfModel

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    // trim
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

PerfModel PerfModel::from_table_csv(const std::string& csv) {
  PerfModel m;
  m.variant_ = Variant::Tabulated;

  std::stringstream ss(csv);
  std::string line;
  bool saw_header = false;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto fields = split_csv_line(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (!saw_header) {
      if (fields != std::vector<std::string>{"kind", "proc_type", "b", "seconds"})
        fail(Err::Parse, "perf table: expected header kind,proc_type,b,seconds");
      saw_header = true;
      continue;
    }
    if (fields.size() != 4)
      fail(Err::Parse, "perf table line " + std::to_string(lineno) + ": expected 4 fields");
    TaskKind kind = task_kind_from(fields[0]);
    std::int64_t b = 0;
    double seconds = 0;
    try {
      b = std::stoll(fields[2]);
      seconds = std::stod(fields[3]);
    } catch (const std::exception&) {
      fail(Err::Parse, "perf table line " + std::to_string(lineno) + ": bad number");
    }
    if (b < 1) fail(Err::Parse, "perf table line " + std::to_string(lineno) + ": b must be >= 1");
    if (seconds <= 0)
      fail(Err::Parse, "perf table line " + std::to_string(lineno) + ": nonpositive time");
    auto& per_size = m.table_[{kind, fields[1]}];
    if (per_size.count(b))
      fail(Err::DuplicateEntry, std::string("perf table: duplicate (") + to_string(kind) + "," +
                                    fields[1] + "," + std::to_string(b) + ")");
    per_size[b] = seconds;
  }

  for (const auto& [key, per_size] : m.table_) {
    double prev = 0;
    for (const auto& [b, t] : per_size) {
      if (t <= prev)
        m.warnings_.push_back(std::string("non-monotone times for (") + to_string(key.first) +
                              "," + key.second + ") at b=" + std::to_string(b));
      prev = t;
    }
  }
  return m;
}

PerfModel PerfModel::from_analytic_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::Parse, std::string("analytic model: ") + e.what());
  }
  std::vector<std::tuple<TaskKind, std::string, double, double>> entries;
  try {
    for (const auto& je : doc)
      entries.emplace_back(task_kind_from(je.at("kind").get<std::string>()),
                           je.at("proc_type").get<std::string>(),
                           je.at("peak_flops").get<double>(), je.at("b_half").get<double>());
  } catch (const nlohmann::json::exception& e) {
    fail(Err::Parse, std::string("analytic model: ") + e.what());
  }
  return analytic(entries);
}

PerfModel PerfModel::analytic(
    const std::vector<std::tuple<TaskKind, std::string, double, double>>& entries) {
  PerfModel m;
  m.variant_ = Variant::Analytic;
  for (const auto& [kind, type, peak, b_half] : entries) {
    if (peak <= 0) fail(Err::Validation, "analytic model: peak_flops must be positive");
    if (b_half <= 0) fail(Err::Validation, "analytic model: b_half must be positive");
    if (m.analytic_.count({kind, type}))
      fail(Err::DuplicateEntry, std::string("analytic model: duplicate (") + to_string(kind) +
                                    "," + type + ")");
    m.analytic_[{kind, type}] = {peak, b_half};
  }
  return m;
}

PerfModel PerfModel::tabulated(
    const std::vector<std::tuple<TaskKind, std::string, std::int64_t, double>>& rows) {
  std::string csv = "kind,proc_type,b,seconds\n";
  for (const auto& [kind, type, b, t] : rows) {
    std::ostringstream os;
    os << to_string(kind) << "," << type << "," << b << "," << std::scientific;
    os.precision(17);
    os << t << "\n";
    csv += os.str();
  }
  return from_table_csv(csv);
}

bool PerfModel::empty() const { return table_.empty() && analytic_.empty(); }

bool PerfModel::knows(TaskKind kind, const std::string& proc_type) const {
  if (variant_ == Variant::Tabulated) return table_.count({kind, proc_type}) > 0;
  return analytic_.count({kind, proc_type}) > 0;
}

double PerfModel::task_time(TaskKind kind, std::int64_t b, const std::string& proc_type) const {
  if (b < 1) fail(Err::InvalidSize, "task_time: b must be >= 1");
  if (empty()) fail(Err::EmptyModel, "task_time on empty model");

  if (variant_ == Variant::Analytic) {
    auto it = analytic_.find({kind, proc_type});
    if (it == analytic_.end())
      fail(Err::UnknownKindOrType, std::string("no analytic entry for (") + to_string(kind) +
                                       "," + proc_type + ")");
    const double eff = static_cast<double>(b) / (static_cast<double>(b) + it->second.b_half);
    return task_flops(kind, b) / (it->second.peak_rate * eff);
  }

  auto it = table_.find({kind, proc_type});
  if (it == table_.end())
    fail(Err::UnknownKindOrType,
         std::string("no tabulated entry for (") + to_string(kind) + "," + proc_type + ")");
  const auto& per_size = it->second;

  auto exact = per_size.find(b);
  if (exact != per_size.end()) return exact->second;

  // Off-grid sizes: interpolate the flop rate log-log-linearly between the
  // bracketing samples; clamp to the nearest endpoint rate outside the range.
  auto rate_at = [&](std::map<std::int64_t, double>::const_iterator e) {
    return task_flops(kind, e->first) / e->second;
  };
  auto hi = per_size.upper_bound(b);
  double rate = 0;
  if (hi == per_size.begin()) {
    rate = rate_at(hi);
  } else if (hi == per_size.end()) {
    rate = rate_at(std::prev(hi));
  } else {
    auto lo = std::prev(hi);
    const double lb = std::log(static_cast<double>(lo->first));
    const double hb = std::log(static_cast<double>(hi->first));
    const double lr = std::log(rate_at(lo));
    const double hr = std::log(rate_at(hi));
    const double t = (std::log(static_cast<double>(b)) - lb) / (hb - lb);
    rate = std::exp(lr + t * (hr - lr));
  }
  return task_flops(kind, b) / rate;
}

}  // namespace hesp
