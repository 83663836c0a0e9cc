#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "pope/order_tap.hpp"
#include "pope/protocol.hpp"
#include "pope/session.hpp"

namespace pope {

// Baseline scheme: an interactive order-preserving B-tree. Every insert walks
// root to leaf with one blocking exchange per level, so the block lands at a
// fully determined position — the server ends up knowing the total order of
// everything it stores. Mirrors the buffer-tree modules so the two schemes
// can be benchmarked side by side.

constexpr uint32_t kMopeFanout = 4; // max items per node

struct MopeNode {
  struct Item {
    EncryptedBlock block;
    uint64_t id = 0;
  };
  std::vector<Item> items;                         // sorted, ≤ kMopeFanout
  std::vector<std::unique_ptr<MopeNode>> children; // empty or |items| + 1
  uint64_t size = 0;                               // blocks in this subtree

  bool is_leaf() const { return children.empty(); }
};

// one blocking exchange: show the client a node, learn which slot to take
struct StepOracle {
  virtual ~StepOracle() = default;
  virtual uint32_t step(const std::vector<LabelCt>& items, bool is_leaf) = 0;
};

class MopeTree {
 public:
  MopeTree();

  void insert(EncryptedBlock block, StepOracle& o, OrderTap* tap = nullptr);
  // global in-order rank of an endpoint (number of items strictly before it)
  uint64_t locate(StepOracle& o) const;
  // in-order slice of ranks [lo, hi)
  std::vector<EncryptedBlock> slice(uint64_t lo, uint64_t hi) const;

  const MopeNode* root() const { return root_.get(); }
  uint64_t block_count() const { return root_->size; }
  uint64_t height() const; // levels; 1 for a lone root
  uint64_t next_id() const { return next_id_; }

 private:
  void split_child(MopeNode* parent, size_t child_pos);

  std::unique_ptr<MopeNode> root_;
  uint64_t next_id_ = 0;
};

class MopeServer {
 public:
  explicit MopeServer(OrderTap* tap = nullptr) : tap_(tap) {}

  void serve(Transport& t, Transcript* log = nullptr);

  MopeTree& tree() { return tree_; }
  const MopeTree& tree() const { return tree_; }

 private:
  void run_search(Channel& ch, const Message& f);

  MopeTree tree_;
  OrderTap* tap_;
  std::mutex mu_;
};

// client endpoint, same shape as the buffer-tree session
class MopeClient {
 public:
  MopeClient(SecretKey key, std::unique_ptr<Transport> t, std::unique_ptr<Rng> enc_rng,
             bool capture_frames = false);
  ~MopeClient();

  void insert(uint64_t label, const std::vector<uint8_t>& payload);
  std::vector<ResultRow> search(uint64_t lo, uint64_t hi);
  void close();

  const Metrics& metrics() const { return m_; }
  const Transcript& transcript() const { return log_; }
  uint64_t peak_held() const { return peak_held_; }

 private:
  uint32_t descend(uint8_t want_phase, const EffectiveTuple& x); // until a leaf step

  SecretKey key_;
  std::unique_ptr<Transport> t_;
  std::unique_ptr<Rng> rng_;
  Transcript log_;
  Channel ch_;
  Metrics m_;
  uint64_t peak_held_ = 0;
  bool closed_ = false;
};

} // namespace pope
