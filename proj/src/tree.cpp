#include "pope/tree.hpp"

#include <cstring>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "pope/error.hpp"

namespace pope {

namespace {

constexpr char kSnapMagic[4] = {'P', 'T', 'R', 'E'};
constexpr uint8_t kSnapVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, uint32_t(v >> 32));
  put_u32(out, uint32_t(v));
}

uint32_t get_u32(std::istream& in) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail(Errc::io, "snapshot truncated");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

uint64_t get_u64(std::istream& in) {
  uint64_t hi = get_u32(in);
  return (hi << 32) | get_u32(in);
}

} // namespace

PopeTree::PopeTree(uint32_t cap, std::unique_ptr<Rng> sample_rng)
    : root_(std::make_unique<PopeNode>()), cap_(cap), sample_rng_(std::move(sample_rng)) {
  if (cap_ < 2) fail(Errc::config, "capacity must be at least 2");
  if (!sample_rng_) sample_rng_ = secure_rng();
}

void PopeTree::insert(EncryptedBlock block, OrderTap* tap) {
  uint64_t id = next_id_++;
  root_->buffer.push_back(Stored{std::move(block), id});
  ++blocks_;
  if (tap) tap->on_item(id);
}

PopeNode* PopeTree::split(SplitOracle& oracle, OrderTap* tap) {
  std::vector<PopeNode*> path;
  PopeNode* u = root_.get();
  while (true) {
    if (u->is_leaf()) {
      if (u->buffer.size() <= cap_) return u;
      u = split_leaf(u, path, oracle, tap);
      continue;
    }
    size_t k = u->list.size();
    std::vector<LabelCt> pivots;
    pivots.reserve(k);
    for (const auto& e : u->list) pivots.push_back(e.block.label_ct);
    std::vector<LabelCt> stream;
    stream.reserve(u->buffer.size());
    for (const auto& s : u->buffer) stream.push_back(s.block.label_ct);

    FlushReply rep = oracle.flush_and_locate(pivots, stream);
    if (rep.indices.size() != stream.size())
      fail(Errc::protocol, "classification reply size mismatch");
    for (uint32_t idx : rep.indices)
      if (idx < 1 || idx > k + 1) fail(Errc::protocol, "classification index out of range");
    if (rep.child < 1 || rep.child > k + 1)
      fail(Errc::protocol, "descent index out of range");

    for (size_t i = 0; i < u->buffer.size(); ++i) {
      uint32_t idx = rep.indices[i];
      if (tap)
        tap->on_classified(u->buffer[i].id,
                           idx >= 2 ? std::optional<uint64_t>(u->list[idx - 2].id) : std::nullopt,
                           idx <= k ? std::optional<uint64_t>(u->list[idx - 1].id) : std::nullopt);
      u->children[idx - 1]->buffer.push_back(std::move(u->buffer[i]));
    }
    u->buffer.clear();
    path.push_back(u);
    u = u->children[rep.child - 1].get();
  }
}

PopeNode* PopeTree::split_leaf(PopeNode* leaf, std::vector<PopeNode*>& path, SplitOracle& oracle,
                               OrderTap* tap) {
  const uint32_t L = cap_;
  const size_t B = leaf->buffer.size(); // > L by caller's check

  // sample L distinct buffer positions
  std::vector<size_t> pool(B);
  std::iota(pool.begin(), pool.end(), size_t{0});
  for (size_t i = 0; i < L; ++i)
    std::swap(pool[i], pool[i + sample_rng_->below(B - i)]);

  std::vector<bool> is_sampled(B, false);
  for (size_t i = 0; i < L; ++i) is_sampled[pool[i]] = true;

  std::vector<LabelCt> sample;
  sample.reserve(L);
  std::map<std::array<uint8_t, 2 * kBlockBytes>, size_t> by_bytes; // ct -> buffer position
  for (size_t i = 0; i < L; ++i) {
    const Stored& s = leaf->buffer[pool[i]];
    sample.push_back(s.block.label_ct);
    by_bytes[s.block.label_ct.bytes()] = pool[i];
  }

  std::vector<LabelCt> sorted = oracle.sort_labels(sample);
  if (sorted.size() != L) fail(Errc::protocol, "sort reply size mismatch");
  std::vector<size_t> order; // buffer positions in sorted label order
  order.reserve(L);
  for (const auto& ct : sorted) {
    auto it = by_bytes.find(ct.bytes());
    if (it == by_bytes.end()) fail(Errc::protocol, "sort reply is not a permutation of the sample");
    order.push_back(it->second);
    by_bytes.erase(it);
  }

  // classify the unsampled rest before touching any structure, so an oracle
  // failure from here on aborts the whole split with the tree untouched
  std::vector<LabelCt> stream;
  stream.reserve(B - L);
  for (size_t i = 0; i < B; ++i)
    if (!is_sampled[i]) stream.push_back(leaf->buffer[i].block.label_ct);
  FlushReply rep = oracle.flush_and_locate(sorted, stream, /*pivots_known=*/true);
  if (rep.indices.size() != stream.size())
    fail(Errc::protocol, "partition reply size mismatch");
  for (uint32_t idx : rep.indices)
    if (idx < 1 || idx > L + 1) fail(Errc::protocol, "partition index out of range");
  if (rep.child < 1 || rep.child > L + 1) fail(Errc::protocol, "descent index out of range");

  // commit. The sampled blocks leave the buffer for good and become the pivot
  // list; the rest is partitioned across L+1 fresh leaves.
  std::vector<Stored> old_buffer = std::move(leaf->buffer);
  std::vector<Stored> pivots;
  pivots.reserve(L);
  std::vector<uint64_t> promoted_ids;
  promoted_ids.reserve(L);
  for (size_t p : order) {
    pivots.push_back(std::move(old_buffer[p]));
    promoted_ids.push_back(pivots.back().id);
  }
  if (tap) tap->on_promoted(promoted_ids);

  std::vector<std::unique_ptr<PopeNode>> fresh;
  fresh.reserve(L + 1);
  for (size_t i = 0; i < L + 1; ++i) fresh.push_back(std::make_unique<PopeNode>());
  std::vector<PopeNode*> fresh_ptrs;
  for (auto& f : fresh) fresh_ptrs.push_back(f.get());

  if (path.empty()) {
    // leaf was the root: it dies and a new internal root takes its place
    auto nr = std::make_unique<PopeNode>();
    nr->list = std::move(pivots);
    nr->children = std::move(fresh);
    root_ = std::move(nr);
    path.push_back(root_.get());
  } else {
    PopeNode* parent = path.back();
    size_t pos = 0;
    while (pos < parent->children.size() && parent->children[pos].get() != leaf) ++pos;
    if (pos == parent->children.size()) fail(Errc::state, "leaf detached from parent");
    parent->list.insert(parent->list.begin() + pos, std::make_move_iterator(pivots.begin()),
                        std::make_move_iterator(pivots.end()));
    parent->children.erase(parent->children.begin() + pos);
    parent->children.insert(parent->children.begin() + pos,
                            std::make_move_iterator(fresh.begin()),
                            std::make_move_iterator(fresh.end()));
  }
  size_t si = 0;
  for (size_t i = 0; i < B; ++i) {
    if (is_sampled[i]) continue;
    uint32_t idx = rep.indices[si++];
    if (tap)
      tap->on_classified(old_buffer[i].id,
                         idx >= 2 ? std::optional<uint64_t>(promoted_ids[idx - 2]) : std::nullopt,
                         idx <= L ? std::optional<uint64_t>(promoted_ids[idx - 1]) : std::nullopt);
    fresh_ptrs[idx - 1]->buffer.push_back(std::move(old_buffer[i]));
  }
  return fresh_ptrs[rep.child - 1];
}

namespace {

bool find_path(PopeNode* cur, const PopeNode* target, std::vector<PopeNode*>& path) {
  path.push_back(cur);
  if (cur == target) return true;
  for (auto& c : cur->children)
    if (find_path(c.get(), target, path)) return true;
  path.pop_back();
  return false;
}

// Promote every (cap+1)-th pivot of u into parent and regroup the remainder
// into fresh siblings with lists of size ≤ cap.
void restructure(PopeNode* u, PopeNode* parent, uint32_t cap) {
  const size_t k = u->list.size();
  std::vector<Stored> promoted;
  std::vector<std::vector<Stored>> sublists(1);
  std::vector<std::vector<std::unique_ptr<PopeNode>>> groups(1);
  for (size_t i = 0; i < k; ++i) {
    if ((i + 1) % (cap + 1) == 0) {
      promoted.push_back(std::move(u->list[i]));
      groups.back().push_back(std::move(u->children[i]));
      sublists.emplace_back();
      groups.emplace_back();
    } else {
      sublists.back().push_back(std::move(u->list[i]));
      groups.back().push_back(std::move(u->children[i]));
    }
  }
  groups.back().push_back(std::move(u->children[k]));

  size_t pos = 0;
  while (pos < parent->children.size() && parent->children[pos].get() != u) ++pos;
  if (pos == parent->children.size()) fail(Errc::state, "node detached from parent");

  u->list = std::move(sublists[0]);
  u->children = std::move(groups[0]);

  std::vector<std::unique_ptr<PopeNode>> sibs;
  for (size_t t = 1; t < sublists.size(); ++t) {
    auto nd = std::make_unique<PopeNode>();
    nd->list = std::move(sublists[t]);
    nd->children = std::move(groups[t]);
    sibs.push_back(std::move(nd));
  }
  parent->list.insert(parent->list.begin() + pos, std::make_move_iterator(promoted.begin()),
                      std::make_move_iterator(promoted.end()));
  parent->children.insert(parent->children.begin() + pos + 1,
                          std::make_move_iterator(sibs.begin()),
                          std::make_move_iterator(sibs.end()));
}

} // namespace

void PopeTree::rebalance(PopeNode* node) {
  std::vector<PopeNode*> path;
  if (!find_path(root_.get(), node, path)) fail(Errc::state, "node not in tree");
  rebalance_path(std::move(path));
}

void PopeTree::rebalance_path(std::vector<PopeNode*> path) {
  while (!path.empty()) {
    PopeNode* u = path.back();
    if (u->list.size() <= cap_) {
      path.pop_back();
      continue;
    }
    if (path.size() == 1) {
      auto nr = std::make_unique<PopeNode>();
      nr->children.push_back(std::move(root_));
      root_ = std::move(nr);
      path.insert(path.begin(), root_.get());
    }
    restructure(u, path[path.size() - 2], cap_);
    path.pop_back();
  }
}

namespace {

// walks leaves left to right; boundary leaves are returned whole, interior
// internal-node buffers only when their subtree avoids both endpoint paths.
// A list block sits between two adjacent child subtrees in label order, so it
// is returned whenever that seam falls inside the leaf span — the occasional
// boundary pivot just outside the queried range is the client's to drop.
void collect_walk(const PopeNode* nd, size_t& cursor, size_t lo, size_t hi,
                  std::vector<EncryptedBlock>& out) {
  if (nd->is_leaf()) {
    if (cursor >= lo && cursor <= hi)
      for (const auto& s : nd->buffer) out.push_back(s.block);
    ++cursor;
    return;
  }
  size_t first = cursor;
  for (size_t j = 0; j < nd->children.size(); ++j) {
    collect_walk(nd->children[j].get(), cursor, lo, hi, out);
    if (j < nd->list.size() && cursor > lo && cursor <= hi) out.push_back(nd->list[j].block);
  }
  size_t last = cursor - 1;
  if (first > lo && last < hi)
    for (const auto& s : nd->buffer) out.push_back(s.block);
}

bool leaf_index(const PopeNode* nd, const PopeNode* target, size_t& cursor, size_t& out) {
  if (nd->is_leaf()) {
    if (nd == target) {
      out = cursor;
      return true;
    }
    ++cursor;
    return false;
  }
  for (const auto& c : nd->children)
    if (leaf_index(c.get(), target, cursor, out)) return true;
  return false;
}

} // namespace

std::vector<EncryptedBlock> PopeTree::range_collect(const PopeNode* leaf_left,
                                                    const PopeNode* leaf_right) const {
  size_t cursor = 0, lo = 0, hi = 0;
  if (!leaf_index(root_.get(), leaf_left, cursor, lo))
    fail(Errc::protocol, "left leaf not in tree");
  cursor = 0;
  if (!leaf_index(root_.get(), leaf_right, cursor, hi))
    fail(Errc::protocol, "right leaf not in tree");
  if (lo > hi) fail(Errc::protocol, "leaf order violated");
  std::vector<EncryptedBlock> out;
  cursor = 0;
  collect_walk(root_.get(), cursor, lo, hi, out);
  return out;
}

namespace {

void put_stored(std::ostream& out, const Stored& s) {
  auto lb = s.block.label_ct.bytes();
  out.write(reinterpret_cast<const char*>(lb.data()), lb.size());
  put_u32(out, uint32_t(s.block.payload_ct.bytes.size()));
  out.write(reinterpret_cast<const char*>(s.block.payload_ct.bytes.data()),
            std::streamsize(s.block.payload_ct.bytes.size()));
  put_u64(out, s.id);
}

Stored get_stored(std::istream& in) {
  uint8_t lb[2 * kBlockBytes];
  in.read(reinterpret_cast<char*>(lb), sizeof lb);
  Stored s;
  s.block.label_ct = LabelCt::from_bytes(lb);
  uint32_t plen = get_u32(in);
  s.block.payload_ct.bytes.resize(plen);
  in.read(reinterpret_cast<char*>(s.block.payload_ct.bytes.data()), plen);
  s.id = get_u64(in);
  if (!in) fail(Errc::io, "snapshot truncated");
  return s;
}

void save_node(std::ostream& out, const PopeNode* nd) {
  out.put(nd->is_leaf() ? 0 : 1);
  put_u32(out, uint32_t(nd->buffer.size()));
  for (const auto& s : nd->buffer) put_stored(out, s);
  if (nd->is_leaf()) return;
  put_u32(out, uint32_t(nd->list.size()));
  for (const auto& e : nd->list) put_stored(out, e);
  put_u32(out, uint32_t(nd->children.size()));
  for (const auto& c : nd->children) save_node(out, c.get());
}

std::unique_ptr<PopeNode> load_node(std::istream& in, uint64_t& blocks) {
  int tag = in.get();
  if (tag != 0 && tag != 1) fail(Errc::io, "snapshot corrupt: bad node tag");
  auto nd = std::make_unique<PopeNode>();
  uint32_t nbuf = get_u32(in);
  for (uint32_t i = 0; i < nbuf; ++i) {
    nd->buffer.push_back(get_stored(in));
    ++blocks;
  }
  if (tag == 0) return nd;
  uint32_t nlist = get_u32(in);
  for (uint32_t i = 0; i < nlist; ++i) {
    nd->list.push_back(get_stored(in));
    ++blocks;
  }
  uint32_t nkids = get_u32(in);
  if (nkids != nlist + 1) fail(Errc::io, "snapshot corrupt: child count mismatch");
  for (uint32_t i = 0; i < nkids; ++i) nd->children.push_back(load_node(in, blocks));
  return nd;
}

} // namespace

void PopeTree::save(std::ostream& out) const {
  out.write(kSnapMagic, 4);
  out.put(char(kSnapVersion));
  put_u32(out, cap_);
  put_u64(out, next_id_);
  save_node(out, root_.get());
  if (!out) fail(Errc::io, "snapshot write failed");
}

PopeTree PopeTree::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSnapMagic, 4) != 0)
    fail(Errc::io, "not a tree snapshot");
  int v = in.get();
  if (v != kSnapVersion) fail(Errc::io, "unsupported snapshot version");
  uint32_t cap = get_u32(in);
  uint64_t next_id = get_u64(in);
  PopeTree t(cap, nullptr);
  uint64_t blocks = 0;
  t.root_ = load_node(in, blocks);
  t.blocks_ = blocks;
  t.next_id_ = next_id;
  return t;
}

} // namespace pope
