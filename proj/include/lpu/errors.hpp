#ifndef LPU_ERRORS_HPP
#define LPU_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lpu {

/// Base of every exception thrown by the library.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (vector length vs. matrix size, non-square system, ...).
class dimension_error : public error {
public:
  using error::error;
};

/// A precondition on a scalar argument or configuration value was violated.
class argument_error : public error {
public:
  using error::error;
};

/// Malformed Matrix Market text, plan file or report. Carries the 1-based line when known.
class parse_error : public error {
public:
  explicit parse_error(const std::string& what, std::size_t line = 0)
      : error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// The emulated laser state became non-finite.
class divergence_error : public error {
public:
  using error::error;
};

/// The small-angle rescaling policy ran out of restarts.
class restart_budget_error : public error {
public:
  using error::error;
};

class io_error : public error {
public:
  using error::error;
};

/// Transport-level failure talking to the matrix collection.
class network_error : public error {
public:
  using error::error;
};

class not_found_error : public error {
public:
  using error::error;
};

class ambiguous_name_error : public error {
public:
  using error::error;
};

class checksum_error : public error {
public:
  using error::error;
};

} // namespace lpu

#endif // LPU_ERRORS_HPP
