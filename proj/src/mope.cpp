#include "pope/mope.hpp"

#include <algorithm>
#include <chrono>

#include "pope/client.hpp"
#include "pope/error.hpp"

namespace pope {

namespace {

std::vector<LabelCt> node_labels(const MopeNode* n) {
  std::vector<LabelCt> out;
  out.reserve(n->items.size());
  for (const auto& it : n->items) out.push_back(it.block.label_ct);
  return out;
}

uint32_t checked_step(StepOracle& o, const MopeNode* n) {
  uint32_t idx = o.step(node_labels(n), n->is_leaf());
  if (idx < 1 || idx > n->items.size() + 1) fail(Errc::protocol, "step index out of range");
  return idx;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

Counters delta(const Counters& now, const Counters& before) {
  Counters d;
  d.rounds = now.rounds - before.rounds;
  d.one_way = now.one_way - before.one_way;
  d.cts = now.cts - before.cts;
  d.insert_cts = now.insert_cts - before.insert_cts;
  d.endpoint_cts = now.endpoint_cts - before.endpoint_cts;
  d.pivot_cts = now.pivot_cts - before.pivot_cts;
  d.stream_cts = now.stream_cts - before.stream_cts;
  d.sort_cts = now.sort_cts - before.sort_cts;
  d.node_cts = now.node_cts - before.node_cts;
  d.comparison_requests = now.comparison_requests - before.comparison_requests;
  return d;
}

} // namespace

MopeTree::MopeTree() : root_(std::make_unique<MopeNode>()) {}

uint64_t MopeTree::height() const {
  uint64_t h = 1;
  for (const MopeNode* n = root_.get(); !n->is_leaf(); n = n->children.front().get()) ++h;
  return h;
}

void MopeTree::split_child(MopeNode* parent, size_t child_pos) {
  MopeNode* full = parent->children[child_pos].get();
  const size_t mid = full->items.size() / 2; // 5 items -> median index 2

  auto right = std::make_unique<MopeNode>();
  right->items.assign(std::make_move_iterator(full->items.begin() + mid + 1),
                      std::make_move_iterator(full->items.end()));
  MopeNode::Item median = std::move(full->items[mid]);
  full->items.erase(full->items.begin() + mid, full->items.end());
  if (!full->is_leaf()) {
    right->children.assign(std::make_move_iterator(full->children.begin() + mid + 1),
                           std::make_move_iterator(full->children.end()));
    full->children.erase(full->children.begin() + mid + 1, full->children.end());
  }
  auto count = [](const MopeNode* n) {
    uint64_t s = n->items.size();
    for (const auto& c : n->children) s += c->size;
    return s;
  };
  right->size = count(right.get());
  full->size = count(full);

  parent->items.insert(parent->items.begin() + child_pos, std::move(median));
  parent->children.insert(parent->children.begin() + child_pos + 1, std::move(right));
}

void MopeTree::insert(EncryptedBlock block, StepOracle& o, OrderTap* tap) {
  const uint64_t id = next_id_++;
  if (tap) tap->on_item(id);

  // descend; remember the path and the nearest in-order neighbors passed
  std::vector<std::pair<MopeNode*, uint32_t>> path; // node, 1-based step taken
  std::optional<uint64_t> pred, succ;
  MopeNode* u = root_.get();
  for (;;) {
    uint32_t idx = checked_step(o, u);
    if (idx >= 2) pred = u->items[idx - 2].id;
    if (idx <= u->items.size()) succ = u->items[idx - 1].id;
    path.emplace_back(u, idx);
    if (u->is_leaf()) {
      u->items.insert(u->items.begin() + (idx - 1), {std::move(block), id});
      break;
    }
    u = u->children[idx - 1].get();
  }
  for (auto& [n, step] : path) n->size += 1;
  if (tap) tap->on_pivot_between(id, pred, succ);

  // resolve overflows bottom-up; a root overflow grows the tree by one level
  for (size_t level = path.size(); level-- > 0;) {
    MopeNode* n = path[level].first;
    if (n->items.size() <= kMopeFanout) break;
    if (level == 0) {
      auto fresh = std::make_unique<MopeNode>();
      fresh->size = n->size;
      fresh->children.push_back(std::move(root_));
      root_ = std::move(fresh);
      split_child(root_.get(), 0);
    } else {
      split_child(path[level - 1].first, path[level - 1].second - 1);
    }
  }
}

uint64_t MopeTree::locate(StepOracle& o) const {
  const MopeNode* u = root_.get();
  uint64_t rank = 0;
  for (;;) {
    uint32_t idx = checked_step(o, u);
    if (u->is_leaf()) return rank + (idx - 1);
    for (uint32_t j = 0; j + 1 < idx; ++j) rank += u->children[j]->size + 1;
    u = u->children[idx - 1].get();
  }
}

namespace {

void slice_walk(const MopeNode* n, uint64_t& cur, uint64_t lo, uint64_t hi,
                std::vector<EncryptedBlock>& out) {
  if (cur >= hi || cur + n->size <= lo) { // whole subtree out of range
    cur += n->size;
    return;
  }
  if (n->is_leaf()) {
    for (const auto& it : n->items) {
      if (cur >= lo && cur < hi) out.push_back(it.block);
      ++cur;
    }
    return;
  }
  for (size_t j = 0; j < n->children.size(); ++j) {
    slice_walk(n->children[j].get(), cur, lo, hi, out);
    if (j < n->items.size()) {
      if (cur >= lo && cur < hi) out.push_back(n->items[j].block);
      ++cur;
    }
  }
}

} // namespace

std::vector<EncryptedBlock> MopeTree::slice(uint64_t lo, uint64_t hi) const {
  std::vector<EncryptedBlock> out;
  if (lo >= hi) return out;
  uint64_t cur = 0;
  slice_walk(root_.get(), cur, lo, hi, out);
  return out;
}

// ---- server

namespace {

struct WireStep : StepOracle {
  Channel& ch;
  uint8_t phase; // 0 insert descent, 1 left endpoint, 2 right endpoint

  WireStep(Channel& c, uint8_t p) : ch(c), phase(p) {}

  uint32_t step(const std::vector<LabelCt>& items, bool is_leaf) override {
    ch.send(make_mope_node(phase, is_leaf, items));
    return parse_index(ch.recv());
  }
};

} // namespace

void MopeServer::run_search(Channel& ch, const Message& f) {
  parse_search(f); // endpoints stay opaque; the client steers both descents

  WireStep left(ch, 1), right(ch, 2);
  uint64_t lo = tree_.locate(left);
  uint64_t hi = tree_.locate(right);
  ch.send(make_blocks(MsgKind::mope_result, lo < hi ? tree_.slice(lo, hi)
                                                    : std::vector<EncryptedBlock>{}));
}

void MopeServer::serve(Transport& t, Transcript* log) {
  Channel ch(t, log);
  for (;;) {
    Message f;
    try {
      f = ch.recv();
    } catch (const Error& e) {
      if (e.code == Errc::session) return;
      throw;
    }
    if (f.kind == MsgKind::bye) return;
    try {
      std::lock_guard lk(mu_);
      switch (f.kind) {
        case MsgKind::mope_insert: {
          WireStep down(ch, 0);
          tree_.insert(parse_block_op(f), down, tap_);
          break;
        }
        case MsgKind::mope_search:
          run_search(ch, f);
          break;
        default:
          fail(Errc::protocol, "unexpected op frame");
      }
    } catch (const Error& e) {
      if (e.code != Errc::session) {
        try {
          ch.send(make_error(uint8_t(e.code), e.what()));
        } catch (...) {
        }
      }
      throw;
    }
  }
}

// ---- client

MopeClient::MopeClient(SecretKey key, std::unique_ptr<Transport> t, std::unique_ptr<Rng> enc_rng,
                       bool capture_frames)
    : key_(key), t_(std::move(t)), rng_(std::move(enc_rng)), ch_(*t_, &log_) {
  if (!t_ || !rng_) fail(Errc::config, "session needs a transport and an rng");
  log_.capture_bytes = capture_frames;
}

MopeClient::~MopeClient() {
  try {
    close();
  } catch (...) {
  }
}

void MopeClient::close() {
  if (closed_) return;
  closed_ = true;
  ch_.send(Message{MsgKind::bye, {}});
  t_->close();
}

// serve step requests for one descent phase; returns after the leaf step
uint32_t MopeClient::descend(uint8_t want_phase, const EffectiveTuple& x) {
  for (;;) {
    Message f = ch_.recv();
    auto nm = parse_mope_node(f);
    if (nm.phase != want_phase) fail(Errc::protocol, "descent phase out of order");
    auto items = decrypt_all(key_, nm.labels);
    for (size_t i = 0; i + 1 < items.size(); ++i)
      if (!(items[i] < items[i + 1])) fail(Errc::protocol, "node items not sorted");
    if (peak_held_ < items.size() + 2) peak_held_ = items.size() + 2;
    uint32_t idx = classify_one(x, items);
    ch_.send(make_index(MsgKind::mope_step, idx));
    m_.total.node_cts += nm.labels.size();
    m_.total.cts += nm.labels.size();
    m_.total.comparison_requests += 1;
    m_.total.rounds += 1;
    if (nm.is_leaf) return idx;
  }
}

void MopeClient::insert(uint64_t label, const std::vector<uint8_t>& payload) {
  auto t0 = std::chrono::steady_clock::now();
  Counters before = m_.total;
  try {
    EncryptedBlock b{enc_label(key_, label, Origin::insert, *rng_),
                     enc_payload(key_, payload, *rng_)};
    EffectiveTuple x = dec_label(key_, b.label_ct);
    ch_.send(make_block_op(MsgKind::mope_insert, b));
    m_.total.insert_cts += 2;
    m_.total.cts += 2;
    descend(0, x);
    m_.per_op.push_back({MsgKind::mope_insert, delta(m_.total, before), ms_since(t0)});
  } catch (const Error& e) {
    if (e.code != Errc::session) {
      try {
        ch_.send(make_error(uint8_t(e.code), e.what()));
      } catch (...) {
      }
    }
    throw;
  }
}

std::vector<ResultRow> MopeClient::search(uint64_t lo, uint64_t hi) {
  if (lo > hi) fail(Errc::config, "range endpoints out of order");
  auto t0 = std::chrono::steady_clock::now();
  Counters before = m_.total;
  try {
    LabelCt lct = enc_label(key_, lo, Origin::left, *rng_);
    LabelCt rct = enc_label(key_, hi, Origin::right, *rng_);
    EffectiveTuple lo_t = dec_label(key_, lct), hi_t = dec_label(key_, rct);
    ch_.send(make_search(MsgKind::mope_search, lct, rct));
    m_.total.endpoint_cts += 2;
    m_.total.cts += 2;

    descend(1, lo_t);
    descend(2, hi_t);

    Message f = ch_.recv();
    m_.total.rounds += 1;
    std::vector<ResultRow> rows;
    for (const auto& b : parse_blocks(f)) {
      EffectiveTuple t = dec_label(key_, b.label_ct);
      if (lo_t < t && t < hi_t) rows.push_back({t.label, dec_payload(key_, b.payload_ct)});
    }
    std::sort(rows.begin(), rows.end());
    m_.per_op.push_back({MsgKind::mope_search, delta(m_.total, before), ms_since(t0)});
    return rows;
  } catch (const Error& e) {
    if (e.code != Errc::session) {
      try {
        ch_.send(make_error(uint8_t(e.code), e.what()));
      } catch (...) {
      }
    }
    throw;
  }
}

} // namespace pope
