#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace cogarb {

// Dense row-major array of doubles with a fixed rank. Used for the
// per-(mode, state, action) tables that the solvers index heavily.
template <std::size_t Rank>
class Tensor {
 public:
  using Shape = std::array<std::size_t, Rank>;

  Tensor() { shape_.fill(0); }
  explicit Tensor(const Shape& shape, double fill = 0.0) : shape_(shape) {
    std::size_t n = 1;
    for (auto d : shape_) n *= d;
    data_.assign(n, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t extent(std::size_t dim) const noexcept { return shape_[dim]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  template <typename... Idx>
  double& operator()(Idx... idx) {
    static_assert(sizeof...(Idx) == Rank, "index count must match rank");
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  double operator()(Idx... idx) const {
    static_assert(sizeof...(Idx) == Rank, "index count must match rank");
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  // Contiguous slice over the last dimension for a fixed leading prefix.
  template <typename... Idx>
  std::span<double> row(Idx... idx) {
    static_assert(sizeof...(Idx) == Rank - 1, "row takes Rank-1 indices");
    return {data_.data() + offset({static_cast<std::size_t>(idx)..., 0}), shape_[Rank - 1]};
  }
  template <typename... Idx>
  std::span<const double> row(Idx... idx) const {
    static_assert(sizeof...(Idx) == Rank - 1, "row takes Rank-1 indices");
    return {data_.data() + offset({static_cast<std::size_t>(idx)..., 0}), shape_[Rank - 1]};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(const std::array<std::size_t, Rank>& idx) const {
    std::size_t off = 0;
    for (std::size_t d = 0; d < Rank; ++d) off = off * shape_[d] + idx[d];
    return off;
  }

  Shape shape_;
  std::vector<double> data_;
};

}  // namespace cogarb
