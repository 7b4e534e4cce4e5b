#pragma once

#include <stdexcept>
#include <string>

namespace hesp {

// Error codes mirror the failure modes of the public operations. A single
// exception type keeps call sites uniform; tests dispatch on the code.
enum class Err {
  Parse,
  Validation,
  DuplicateEntry,
  UnknownKindOrType,
  EmptyModel,
  NoRoute,
  InvalidSize,
  NotALeaf,
  IndivisibleGrain,
  UnknownPartitioner,
  NestedCluster,
  UnknownCluster,
  ModelMiss,
  CapacityInfeasible,
  NoProcessors,
  GrainTooSmall,
  EmptyCandidates,
  MissingTrace,
  Config,
  Coherence,
  Internal,
};

const char* to_string(Err code);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code) {}

  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

}  // namespace hesp
