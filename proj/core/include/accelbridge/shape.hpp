#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace accelbridge {

/// Ordered list of positive tensor dimensions. Rank 0 is a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims);
  explicit Shape(std::vector<int64_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  int64_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<int64_t>& dims() const noexcept { return dims_; }
  int64_t elements() const noexcept;

  auto begin() const noexcept { return dims_.begin(); }
  auto end() const noexcept { return dims_.end(); }

  /// "[2,3]" form, used in diagnostics.
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
  friend auto operator<=>(const Shape&, const Shape&) = default;

 private:
  std::vector<int64_t> dims_;
};

}  // namespace accelbridge
