#pragma once

// Binary indexed sum tree over integer weights, supporting O(log n) point
// updates and O(log n) weighted sampling. Weights are kept in exact integer
// arithmetic so that sampling is bit-reproducible from the Rng stream.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "coaglab/rng.hpp"

namespace coaglab {

class SumTree {
 public:
  explicit SumTree(std::size_t n) : size_(n) {
    leaves_ = 1;
    while (leaves_ < n) leaves_ <<= 1;
    node_.assign(2 * leaves_, 0);
  }

  std::size_t size() const { return size_; }
  std::int64_t total() const { return node_[1]; }
  std::int64_t get(std::size_t i) const { return node_[leaves_ + i]; }

  void set(std::size_t i, std::int64_t w) {
    std::size_t k = leaves_ + i;
    const std::int64_t delta = w - node_[k];
    for (; k >= 1; k >>= 1) node_[k] += delta;
  }

  void add(std::size_t i, std::int64_t delta) {
    for (std::size_t k = leaves_ + i; k >= 1; k >>= 1) node_[k] += delta;
  }

  /// Index i with probability get(i)/total(). Requires total() > 0.
  std::size_t sample(Rng& rng) const {
    const std::int64_t t = total();
    if (t <= 0) throw std::logic_error("SumTree::sample on empty tree");
    std::int64_t r = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(t)));
    std::size_t k = 1;
    while (k < leaves_) {
      const std::int64_t left = node_[2 * k];
      if (r < left) {
        k = 2 * k;
      } else {
        r -= left;
        k = 2 * k + 1;
      }
    }
    return k - leaves_;
  }

 private:
  std::size_t size_;
  std::size_t leaves_;
  std::vector<std::int64_t> node_;
};

}  // namespace coaglab
