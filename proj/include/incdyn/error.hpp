#pragma once

#include <stdexcept>
#include <string>

namespace incdyn {

/// Failure categories shared by every module. The harness maps these onto
/// process exit codes.
enum class Errc {
  contract_violation,
  no_data,
  diverged,
  non_stabilizable,
  missing_file,
  malformed_line,
  unknown_key,
  out_of_range,
  io,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(Errc::contract_violation, what);
}

}  // namespace incdyn
