#pragma once

#include <stdexcept>
#include <string>

namespace nuh {

enum class Errc {
  SingularPoint = 1,
  SingularEncountered,
  NoSuchBranch,
  BranchDomainViolation,
  NotHyperbolic,
  NonConvergent,
  Divergent,
  IllConditioned,
  BlockBoundViolation,
  Underflow,
  DomainEscape,
  OutOfImage,
  AdmissibilityLost,
  ShadowEscape,
  EmptyInput,
  EmptyCore,
  Overflow,
  PathExhausted,
  InvalidArgument,
  ConfigError,
  IoError,
};

const char* errc_name(Errc c);

// index/value carry the payload of e.g. SingularEncountered(3) or NonConvergent(residual)
class Error : public std::runtime_error {
 public:
  Error(Errc c, const std::string& msg, long index = 0, double value = 0.0)
      : std::runtime_error(std::string(errc_name(c)) + ": " + msg), code_(c), index_(index), value_(value) {}
  Errc code() const noexcept { return code_; }
  long index() const noexcept { return index_; }
  double value() const noexcept { return value_; }

 private:
  Errc code_;
  long index_;
  double value_;
};

}  // namespace nuh
