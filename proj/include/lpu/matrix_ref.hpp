#ifndef LPU_MATRIX_REF_HPP
#define LPU_MATRIX_REF_HPP

#include <optional>
#include <string>

namespace lpu {

/// A matrix of the public sparse collection, by name and (once resolved) group.
struct MatrixRef {
  std::string name;
  std::optional<std::string> group;

  bool resolved() const noexcept { return group.has_value(); }
  std::string label() const { return group ? *group + "/" + name : name; }

  friend bool operator==(const MatrixRef&, const MatrixRef&) = default;
};

} // namespace lpu

#endif // LPU_MATRIX_REF_HPP
