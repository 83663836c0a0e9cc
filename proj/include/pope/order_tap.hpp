#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace pope {

// Observer fed by the server with every order fact it learns. Block ids are
// server-local insertion counters; ciphertext plaintexts never appear here.
struct OrderTap {
  virtual ~OrderTap() = default;
  // a new block arrived (no order facts yet)
  virtual void on_item(uint64_t id) { (void)id; }
  // item classified strictly above pivot `lo` and ≤ pivot `hi` (absent = unbounded side)
  virtual void on_classified(uint64_t id, std::optional<uint64_t> lo,
                             std::optional<uint64_t> hi) {
    (void)id;
    (void)lo;
    (void)hi;
  }
  // a sorted batch of buffered items became pivots (their total order is now public)
  virtual void on_promoted(const std::vector<uint64_t>& sorted_ids) { (void)sorted_ids; }
  // one item became a pivot at a fully known position (baseline schemes)
  virtual void on_pivot_between(uint64_t id, std::optional<uint64_t> pred,
                                std::optional<uint64_t> succ) {
    (void)id;
    (void)pred;
    (void)succ;
  }
};

} // namespace pope
