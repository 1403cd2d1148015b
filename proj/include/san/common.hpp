#ifndef SAN_COMMON_HPP
#define SAN_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace san {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;

// Error taxonomy shared with the C API status codes.
enum class ErrorKind {
  kArgument,  // bad value or precondition violation
  kShape,     // tensor/layer shape mismatch
  kIo,        // file system failure
  kFormat,    // malformed file contents
  kNumeric,   // NaN/Inf or other numeric breakdown
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Forward/backward statefulness of layers that distinguish the phases.
// kTrain:  batch statistics, running stats updated.
// kEval:   running statistics, no state change.
// kProbe:  batch statistics but no running-stat update; used for the
//          conv-comparison reference pass and for the frozen-D pass during
//          G updates, which must leave the network bitwise unchanged.
enum class Mode { kTrain, kEval, kProbe };

// Worker-thread cap: SAN_THREADS environment variable, 0 or unset = auto.
int thread_count();

// Applies thread_count() to OpenMP and pins BLAS to one thread per worker.
void configure_threads();

}  // namespace san

#endif  // SAN_COMMON_HPP
