#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "pope/codec.hpp"
#include "pope/order_tap.hpp"
#include "pope/rng.hpp"

namespace pope {


// block at rest on the server, tagged with its arrival sequence number
struct Stored {
  EncryptedBlock block;
  uint64_t id = 0;
};

struct PopeNode {
  std::vector<Stored> buffer;
  // internal nodes only: blocks promoted out of a leaf buffer, label-sorted.
  // Their labels are the pivots that partition the children. A block lives in
  // exactly one buffer or one list, never both, so no two pivots anywhere in
  // the tree can share ciphertext bytes.
  std::vector<Stored> list;
  std::vector<std::unique_ptr<PopeNode>> children; // |children| = |list| + 1

  bool is_leaf() const { return children.empty(); }
};

// Server-side handle to the comparison oracle (the client). One call, one
// blocking exchange; the server never sees an ordering except through these.
struct FlushReply {
  std::vector<uint32_t> indices; // 1-based sorted index per streamed label
  uint32_t child = 1;            // 1-based child index for the current endpoint
};

struct SplitOracle {
  virtual ~SplitOracle() = default;
  // announce this node's pivots, stream its buffered labels, learn where each
  // goes and which child the endpoint descends into. pivots_known = the client
  // already holds exactly these pivots (it just sorted them), so a transport
  // oracle need not resend them.
  virtual FlushReply flush_and_locate(const std::vector<LabelCt>& pivots,
                                      const std::vector<LabelCt>& stream,
                                      bool pivots_known = false) = 0;
  // leaf split: have the client sort a sample of ≤ L labels
  virtual std::vector<LabelCt> sort_labels(const std::vector<LabelCt>& sample) = 0;
};

// Buffer tree over opaque blocks. Every node buffers unsorted blocks; internal
// nodes carry ≤ L sorted pivot blocks. For every internal node with pivot
// labels ℓ_1..ℓ_k, child j holds exactly the labels in (ℓ_{j−1}, ℓ_j] under
// the effective-tuple order — maintained by partitioning through the oracle
// only.
class PopeTree {
 public:
  PopeTree(uint32_t cap, std::unique_ptr<Rng> sample_rng);

  void insert(EncryptedBlock block, OrderTap* tap = nullptr);

  // Descend for one endpoint, flushing buffers along the path and splitting
  // oversized leaves. Returns the endpoint's leaf; path buffers end up empty
  // and the leaf holds ≤ cap blocks. Does not rebalance.
  PopeNode* split(SplitOracle& oracle, OrderTap* tap = nullptr);

  // Push oversized pivot lists upward (promote every (cap+1)-th label into the
  // parent, group the rest into fresh siblings). Purely local.
  void rebalance(PopeNode* node);

  // All blocks between the two leaves inclusive: the boundary leaves whole,
  // buffers of interior subtrees strictly between the endpoint paths, and the
  // list blocks sitting between the boundary leaves. No comparisons.
  std::vector<EncryptedBlock> range_collect(const PopeNode* leaf_left,
                                            const PopeNode* leaf_right) const;

  const PopeNode* root() const { return root_.get(); }
  PopeNode* root() { return root_.get(); }
  uint32_t cap() const { return cap_; }
  uint64_t block_count() const { return blocks_; }
  uint64_t next_id() const { return next_id_; }

  // snapshot format: versioned preorder dump, not wire-compatible
  void save(std::ostream& out) const;
  static PopeTree load(std::istream& in);

 private:
  PopeNode* split_leaf(PopeNode* leaf, std::vector<PopeNode*>& path, SplitOracle& oracle,
                       OrderTap* tap);
  void rebalance_path(std::vector<PopeNode*> path);

  std::unique_ptr<PopeNode> root_;
  uint32_t cap_;
  uint64_t blocks_ = 0;
  uint64_t next_id_ = 0;
  std::unique_ptr<Rng> sample_rng_;
};

} // namespace pope
