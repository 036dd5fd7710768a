// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace adco {

// Error taxonomy mirrored by the CLI exit codes: validation -> 1,
// runtime -> 2, infeasible -> 3.
enum class ErrorKind { Validation, Runtime, Infeasible };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
    throw Error(ErrorKind::Validation, msg);
}
[[noreturn]] inline void fail_runtime(const std::string& msg) {
    throw Error(ErrorKind::Runtime, msg);
}
[[noreturn]] inline void fail_infeasible(const std::string& msg) {
    throw Error(ErrorKind::Infeasible, msg);
}

}  // namespace adco
