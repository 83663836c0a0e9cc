#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pope/codec.hpp"
#include "pope/order_tap.hpp"
#include "pope/protocol.hpp"
#include "pope/rng.hpp"

namespace pope {

// Accountant for everything the server could ever deduce about plaintext
// order. Blocks are tracked by server-side id; knowledge about a non-pivot
// block is a half-open interval between two pivots of the globally ordered
// pivot sequence. Facts only ever refine: pivots accumulate, intervals narrow.
//
// Two blocks are incomparable when no chain of revealed facts orders them;
// with interval knowledge that is precisely "their possible-slot ranges
// overlap". A transitive-closure oracle over the raw fact log is kept for
// cross-checking that claim.

struct Fact {
  uint64_t a, b; // revealed: a precedes b
};

struct KnowledgeSnapshot {
  uint64_t blocks = 0; // everything ever inserted
  uint64_t pivots = 0;
  struct Bucket {
    std::optional<uint64_t> pred, succ; // pivot ids; empty = unbounded side
    uint64_t count = 0;
  };
  std::vector<Bucket> buckets; // ordered along the pivot sequence, sum = blocks − pivots
  std::string table() const;   // plain text rendering
};

class PartialOrderState {
 public:
  enum class Rel { lt, gt, eq, incomparable };

  // ---- structured facts (what the wire protocol reveals)
  void on_item(uint64_t id);
  // id lies strictly above pivot `lo` and at or below pivot `hi`
  void on_classified(uint64_t id, std::optional<uint64_t> lo, std::optional<uint64_t> hi);
  // a sorted batch from one bucket becomes consecutive pivots
  void on_promoted(const std::vector<uint64_t>& sorted_ids);
  // one item becomes a pivot between two adjacent pivots (baseline schemes)
  void on_pivot_between(uint64_t id, std::optional<uint64_t> pred, std::optional<uint64_t> succ);

  // ---- free-form facts (definition-level tests); switches queries to the
  // closure oracle, since arbitrary facts need not fit the interval model
  void record_comparison(uint64_t i, uint64_t j, Rel outcome);

  // ---- queries
  Rel compare(uint64_t a, uint64_t b) const;
  uint64_t incomparable_pairs() const;
  uint64_t tc_incomparable_pairs() const; // closure over the raw fact log
  KnowledgeSnapshot snapshot() const;

  uint64_t block_count() const { return blocks_.size(); }
  uint64_t pivot_count() const { return pivot_order_.size(); }
  const std::vector<uint64_t>& pivot_sequence() const { return pivot_order_; }
  const std::vector<Fact>& history() const { return history_; }

 private:
  struct Knowledge {
    bool pivot = false;
    std::optional<uint64_t> pred, succ; // items only
  };
  // uniform bound pair (P, S): a precedes b iff S_a ≤ P_b. Items get
  // (pred position or −1, succ position or k); a pivot at position p is (p, p).
  std::pair<int64_t, int64_t> slots(uint64_t id) const;
  size_t pivot_pos(uint64_t id) const;
  void refresh_positions() const;
  size_t splice_index(const std::optional<uint64_t>& pred, const std::optional<uint64_t>& succ,
                      const char* who) const;
  void ensure_item(uint64_t id);
  bool reaches(uint64_t from, uint64_t to) const;

  std::vector<uint64_t> pivot_order_;
  mutable std::unordered_map<uint64_t, size_t> pivot_pos_; // rebuilt lazily after splices
  mutable bool stale_pos_ = false;
  std::unordered_map<uint64_t, Knowledge> blocks_;
  std::vector<Fact> history_;
  bool generic_ = false;
};

// OrderTap adapter: plug into a server and the state fills itself
struct LeakageTap : OrderTap {
  PartialOrderState state;

  void on_item(uint64_t id) override { state.on_item(id); }
  void on_classified(uint64_t id, std::optional<uint64_t> lo,
                     std::optional<uint64_t> hi) override {
    state.on_classified(id, lo, hi);
  }
  void on_promoted(const std::vector<uint64_t>& sorted_ids) override {
    state.on_promoted(sorted_ids);
  }
  void on_pivot_between(uint64_t id, std::optional<uint64_t> pred,
                        std::optional<uint64_t> succ) override {
    state.on_pivot_between(id, pred, succ);
  }
};

// lower bound on incomparable pairs after m queries (measured pivot count k):
// (k+1) buckets can't be smaller in aggregate than equal split
struct IncomparabilityFloor {
  uint64_t n = 0, k = 0;
  uint64_t floor_pairs = 0;  // (k+1) · C(⌊(n−k)/(k+1)⌋, 2)
  double k_closed = 0;       // m·L·log_L n — the per-query pivot budget
  double floor_closed = 0;   // the same floor evaluated at k_closed
  bool regime_ok = false;    // mL < n, where the bound is meaningful
};
IncomparabilityFloor incomparability_floor(uint64_t n, uint64_t m, uint64_t L, uint64_t k_measured);

// Fixed randomized total order over operands (Def-style oracle): ties among
// equal values broken once, uniformly; every answer logged.
class RandomizedOrderOracle {
 public:
  // definition-level: rank by (value, random tiebreak)
  static RandomizedOrderOracle from_values(const std::vector<uint64_t>& values, Rng& rng);
  // simulation: the effective-tuple order observed in a real run
  static RandomizedOrderOracle from_tuples(const std::vector<EffectiveTuple>& tuples);

  bool less(uint64_t i, uint64_t j) const;
  uint64_t size() const { return rank_.size(); }
  const std::vector<std::pair<uint64_t, uint64_t>>& query_log() const { return log_; }

 private:
  std::vector<uint64_t> rank_; // operand index -> position in π
  mutable std::vector<std::pair<uint64_t, uint64_t>> log_;
};

// Access-pattern profile of an op sequence: values are gone, only operand
// identities and payload sizes remain. Operand ids number every label operand
// in op order: an insert has one, a search two (left, then right).
struct ProfileOp {
  enum class Kind { insert, search } kind;
  uint64_t a = 0, b = 0;    // operand ids (insert: a; search: a = left, b = right)
  uint32_t payload_len = 0; // inserts only
};

// Replays the whole protocol against a fresh server using only the profile
// and the order oracle: every label ciphertext encrypts 0, payloads are
// zeros of the profiled length. With the sampling seed and chunk size of a
// real run and rord built from its effective-tuple order, the returned
// client-side transcript matches the real one frame for frame in kind,
// length, ciphertext count, and every index reply — only ciphertext bytes
// differ. `sim_key_out` receives the throwaway key, so callers can verify
// the simulated bodies carry nothing but zeros.
Transcript simulate_view(const std::vector<ProfileOp>& profile, const RandomizedOrderOracle& rord,
                         uint32_t cap, uint64_t sampling_seed, uint32_t chunk = kDefaultChunk,
                         SecretKey* sim_key_out = nullptr);

} // namespace pope
