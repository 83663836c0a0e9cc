#include "pope/leakage.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>

#include "pope/error.hpp"
#include "pope/server.hpp"

namespace pope {

namespace {

uint64_t pairs2(uint64_t c) { return c < 2 ? 0 : c * (c - 1) / 2; }

} // namespace

// ---- PartialOrderState

void PartialOrderState::ensure_item(uint64_t id) { blocks_.emplace(id, Knowledge{}); }

void PartialOrderState::refresh_positions() const {
  if (!stale_pos_) return;
  pivot_pos_.clear();
  pivot_pos_.reserve(pivot_order_.size());
  for (size_t i = 0; i < pivot_order_.size(); ++i) pivot_pos_[pivot_order_[i]] = i;
  stale_pos_ = false;
}

size_t PartialOrderState::pivot_pos(uint64_t id) const {
  refresh_positions();
  auto it = pivot_pos_.find(id);
  if (it == pivot_pos_.end()) fail(Errc::integrity, "not a pivot");
  return it->second;
}

std::pair<int64_t, int64_t> PartialOrderState::slots(uint64_t id) const {
  auto it = blocks_.find(id);
  if (it == blocks_.end()) fail(Errc::config, "unknown block id");
  const Knowledge& kn = it->second;
  if (kn.pivot) {
    auto p = int64_t(pivot_pos(id));
    return {p, p};
  }
  int64_t lo = kn.pred ? int64_t(pivot_pos(*kn.pred)) : -1;
  int64_t hi = kn.succ ? int64_t(pivot_pos(*kn.succ)) : int64_t(pivot_order_.size());
  return {lo, hi};
}

// insertion point in the pivot sequence for a splice bounded by (pred, succ);
// the bounds must be adjacent pivots (or the matching end of the sequence)
size_t PartialOrderState::splice_index(const std::optional<uint64_t>& pred,
                                       const std::optional<uint64_t>& succ,
                                       const char* who) const {
  auto is_pivot = [&](uint64_t id) {
    auto it = blocks_.find(id);
    return it != blocks_.end() && it->second.pivot;
  };
  size_t at = 0;
  if (pred) {
    if (!is_pivot(*pred)) fail(Errc::integrity, std::string(who) + ": lower bound is not a pivot");
    // linear scan: splices are rare and must not force a position rebuild
    auto it = std::find(pivot_order_.begin(), pivot_order_.end(), *pred);
    at = size_t(it - pivot_order_.begin()) + 1;
  }
  if (succ) {
    if (!is_pivot(*succ)) fail(Errc::integrity, std::string(who) + ": upper bound is not a pivot");
    if (at == pivot_order_.size() || pivot_order_[at] != *succ)
      fail(Errc::integrity, std::string(who) + ": bounds are not adjacent pivots");
  } else if (at != pivot_order_.size()) {
    fail(Errc::integrity, std::string(who) + ": open upper bound not at the end");
  }
  return at;
}

void PartialOrderState::on_item(uint64_t id) {
  if (!blocks_.emplace(id, Knowledge{}).second) fail(Errc::integrity, "duplicate block id");
}

void PartialOrderState::on_classified(uint64_t id, std::optional<uint64_t> lo,
                                      std::optional<uint64_t> hi) {
  auto it = blocks_.find(id);
  if (it == blocks_.end()) fail(Errc::integrity, "classified an unknown block");
  Knowledge& kn = it->second;
  if (kn.pivot) fail(Errc::integrity, "classified a pivot");
  auto pivot_of = [&](uint64_t b) {
    auto bi = blocks_.find(b);
    if (bi == blocks_.end() || !bi->second.pivot)
      fail(Errc::integrity, "classification bound is not a pivot");
    return int64_t(pivot_pos(b));
  };
  int64_t new_lo = lo ? pivot_of(*lo) : -1;
  int64_t new_hi = hi ? pivot_of(*hi) : int64_t(pivot_order_.size());
  if (new_hi <= new_lo) fail(Errc::integrity, "classified into an empty interval");
  // knowledge intersects: one classification may bound one side afresh while
  // the other side keeps an older, tighter bound
  auto [old_lo, old_hi] = slots(id);
  if (new_lo >= old_lo && lo) kn.pred = lo;
  if (new_hi <= old_hi && hi) kn.succ = hi;
  if (std::max(new_lo, old_lo) >= std::min(new_hi, old_hi))
    fail(Errc::integrity, "classification contradicts earlier knowledge");
  if (lo) history_.push_back({*lo, id});
  if (hi) history_.push_back({id, *hi});
}

void PartialOrderState::on_promoted(const std::vector<uint64_t>& sorted_ids) {
  if (sorted_ids.empty()) fail(Errc::config, "empty promotion");
  std::unordered_set<uint64_t> seen;
  const Knowledge* first = nullptr;
  for (uint64_t id : sorted_ids) {
    auto it = blocks_.find(id);
    if (it == blocks_.end()) fail(Errc::integrity, "promoted an unknown block");
    if (it->second.pivot) fail(Errc::integrity, "promoted a pivot twice");
    if (!seen.insert(id).second) fail(Errc::integrity, "duplicate id in promotion");
    if (!first) {
      first = &it->second;
    } else if (it->second.pred != first->pred || it->second.succ != first->succ) {
      fail(Errc::integrity, "promoted batch spans buckets");
    }
  }
  size_t at = splice_index(first->pred, first->succ, "promotion");
  pivot_order_.insert(pivot_order_.begin() + long(at), sorted_ids.begin(), sorted_ids.end());
  stale_pos_ = true;
  for (uint64_t id : sorted_ids) {
    Knowledge& kn = blocks_[id];
    kn.pivot = true;
    kn.pred.reset();
    kn.succ.reset();
  }
  for (size_t i = 0; i + 1 < sorted_ids.size(); ++i)
    history_.push_back({sorted_ids[i], sorted_ids[i + 1]});
}

void PartialOrderState::on_pivot_between(uint64_t id, std::optional<uint64_t> pred,
                                         std::optional<uint64_t> succ) {
  auto it = blocks_.find(id);
  if (it == blocks_.end()) fail(Errc::integrity, "placed an unknown block");
  Knowledge& kn = it->second;
  if (kn.pivot) fail(Errc::integrity, "placed a pivot twice");
  size_t at = splice_index(pred, succ, "placement");
  if (kn.pred || kn.succ) { // earlier interval must admit this slot
    auto [lo, hi] = slots(id);
    if (int64_t(at) <= lo || int64_t(at) > hi)
      fail(Errc::integrity, "pivot placed outside its known interval");
  }
  pivot_order_.insert(pivot_order_.begin() + long(at), id);
  stale_pos_ = true;
  kn.pivot = true;
  kn.pred.reset();
  kn.succ.reset();
  if (pred) history_.push_back({*pred, id});
  if (succ) history_.push_back({id, *succ});
}

void PartialOrderState::record_comparison(uint64_t i, uint64_t j, Rel outcome) {
  if (outcome != Rel::lt && outcome != Rel::gt)
    fail(Errc::config, "only lt/gt outcomes are recordable facts");
  if (i == j) fail(Errc::config, "a block does not compare to itself");
  ensure_item(i);
  ensure_item(j);
  uint64_t a = outcome == Rel::lt ? i : j;
  uint64_t b = outcome == Rel::lt ? j : i;
  generic_ = true; // arbitrary facts need not fit the interval model
  if (reaches(b, a)) fail(Errc::integrity, "fact contradicts earlier facts");
  history_.push_back({a, b});
}

// depth-first over the fact digraph; fine at definition-test scale
bool PartialOrderState::reaches(uint64_t from, uint64_t to) const {
  std::unordered_map<uint64_t, std::vector<uint64_t>> adj;
  for (const Fact& f : history_) adj[f.a].push_back(f.b);
  std::unordered_set<uint64_t> seen{from};
  std::vector<uint64_t> stack{from};
  while (!stack.empty()) {
    uint64_t v = stack.back();
    stack.pop_back();
    if (v == to) return true;
    auto it = adj.find(v);
    if (it == adj.end()) continue;
    for (uint64_t w : it->second)
      if (seen.insert(w).second) stack.push_back(w);
  }
  return false;
}

PartialOrderState::Rel PartialOrderState::compare(uint64_t a, uint64_t b) const {
  if (!blocks_.count(a) || !blocks_.count(b)) fail(Errc::config, "unknown block id");
  if (a == b) return Rel::eq;
  if (generic_) {
    if (reaches(a, b)) return Rel::lt;
    if (reaches(b, a)) return Rel::gt;
    return Rel::incomparable;
  }
  auto [pa, sa] = slots(a);
  auto [pb, sb] = slots(b);
  if (sa <= pb) return Rel::lt;
  if (sb <= pa) return Rel::gt;
  return Rel::incomparable;
}

uint64_t PartialOrderState::incomparable_pairs() const {
  if (generic_) return tc_incomparable_pairs();
  refresh_positions();
  const uint64_t k = pivot_order_.size();
  // group items by their bound pair; pivots are handled analytically
  std::unordered_map<uint64_t, uint64_t> groups;
  for (const auto& [id, kn] : blocks_) {
    if (kn.pivot) continue;
    auto [p, s] = slots(id);
    groups[uint64_t(p + 1) * (k + 2) + uint64_t(s)] += 1;
  }
  struct G {
    int64_t p, s;
    uint64_t c;
  };
  std::vector<G> g;
  g.reserve(groups.size());
  for (auto [key, c] : groups)
    g.push_back({int64_t(key / (k + 2)) - 1, int64_t(key % (k + 2)), c});
  uint64_t total = 0;
  for (const G& x : g) {
    total += pairs2(x.c);                  // same interval: never ordered
    total += x.c * uint64_t(x.s - x.p - 1); // pivots strictly inside the interval
  }
  for (size_t i = 0; i < g.size(); ++i)
    for (size_t j = i + 1; j < g.size(); ++j)
      if (!(g[i].s <= g[j].p || g[j].s <= g[i].p)) total += g[i].c * g[j].c;
  return total;
}

uint64_t PartialOrderState::tc_incomparable_pairs() const {
  std::vector<uint64_t> ids;
  ids.reserve(blocks_.size());
  for (const auto& [id, kn] : blocks_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  const size_t n = ids.size();
  std::unordered_map<uint64_t, size_t> ix;
  ix.reserve(n);
  for (size_t i = 0; i < n; ++i) ix[ids[i]] = i;
  std::vector<std::vector<uint32_t>> adj(n);
  for (const Fact& f : history_) {
    auto a = ix.find(f.a), b = ix.find(f.b);
    if (a == ix.end() || b == ix.end()) fail(Errc::integrity, "fact about an unknown block");
    adj[a->second].push_back(uint32_t(b->second));
  }
  const size_t words = (n + 63) / 64;
  std::vector<uint64_t> reach(n * words, 0);
  std::vector<uint32_t> stack;
  for (size_t s = 0; s < n; ++s) {
    uint64_t* row = reach.data() + s * words;
    stack.assign(1, uint32_t(s));
    while (!stack.empty()) {
      uint32_t v = stack.back();
      stack.pop_back();
      for (uint32_t w : adj[v]) {
        uint64_t& word = row[w >> 6];
        uint64_t bit = 1ull << (w & 63);
        if (!(word & bit)) {
          word |= bit;
          stack.push_back(w);
        }
      }
    }
  }
  auto bit = [&](size_t i, size_t j) {
    return (reach[i * words + (j >> 6)] >> (j & 63)) & 1u;
  };
  uint64_t total = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      if (!bit(i, j) && !bit(j, i)) ++total;
  return total;
}

KnowledgeSnapshot PartialOrderState::snapshot() const {
  refresh_positions();
  KnowledgeSnapshot s;
  s.blocks = blocks_.size();
  s.pivots = pivot_order_.size();
  std::map<std::pair<int64_t, int64_t>, KnowledgeSnapshot::Bucket> buckets;
  for (const auto& [id, kn] : blocks_) {
    if (kn.pivot) continue;
    auto key = slots(id);
    auto& b = buckets[key];
    b.pred = kn.pred;
    b.succ = kn.succ;
    b.count += 1;
  }
  s.buckets.reserve(buckets.size());
  for (auto& [key, b] : buckets) s.buckets.push_back(b);
  return s;
}

std::string KnowledgeSnapshot::table() const {
  std::ostringstream os;
  os << "blocks " << blocks << "  pivots " << pivots << "  buckets " << buckets.size() << "\n";
  for (const auto& b : buckets) {
    os << "  (";
    if (b.pred) os << *b.pred;
    else os << "-inf";
    os << ", ";
    if (b.succ) os << *b.succ;
    else os << "+inf";
    os << "]  " << b.count << "\n";
  }
  return os.str();
}

// ---- bound on what any adversary still cannot order

IncomparabilityFloor incomparability_floor(uint64_t n, uint64_t m, uint64_t L, uint64_t k_measured) {
  IncomparabilityFloor r;
  r.n = n;
  r.k = k_measured;
  r.regime_ok = m * L < n;
  if (k_measured < n) {
    uint64_t b = (n - k_measured) / (k_measured + 1);
    r.floor_pairs = (k_measured + 1) * pairs2(b);
  }
  if (L >= 2 && n >= 1) {
    double kc = double(m) * double(L) * std::log(double(n)) / std::log(double(L));
    r.k_closed = kc;
    if (kc < double(n)) {
      double b = (double(n) - kc) / (kc + 1);
      if (b > 1) r.floor_closed = (kc + 1) * b * (b - 1) / 2;
    }
  }
  return r;
}

// ---- RandomizedOrderOracle

RandomizedOrderOracle RandomizedOrderOracle::from_values(const std::vector<uint64_t>& values,
                                                         Rng& rng) {
  const size_t n = values.size();
  std::vector<uint64_t> tie(n);
  for (auto& t : tie) t = rng.next_u64();
  std::vector<uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](uint64_t a, uint64_t b) {
    return std::tie(values[a], tie[a], a) < std::tie(values[b], tie[b], b);
  });
  RandomizedOrderOracle o;
  o.rank_.resize(n);
  for (size_t pos = 0; pos < n; ++pos) o.rank_[order[pos]] = pos;
  return o;
}

RandomizedOrderOracle RandomizedOrderOracle::from_tuples(const std::vector<EffectiveTuple>& ts) {
  const size_t n = ts.size();
  std::vector<uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](uint64_t a, uint64_t b) { return ts[a] < ts[b]; });
  RandomizedOrderOracle o;
  o.rank_.resize(n);
  for (size_t pos = 0; pos < n; ++pos) o.rank_[order[pos]] = pos;
  return o;
}

bool RandomizedOrderOracle::less(uint64_t i, uint64_t j) const {
  if (i >= rank_.size() || j >= rank_.size()) fail(Errc::config, "operand outside the order");
  log_.emplace_back(i, j);
  return rank_[i] < rank_[j];
}

// ---- view simulator: the whole protocol without a single plaintext

Transcript simulate_view(const std::vector<ProfileOp>& profile, const RandomizedOrderOracle& rord,
                         uint32_t cap, uint64_t sampling_seed, uint32_t chunk,
                         SecretKey* sim_key_out) {
  uint64_t next = 0;
  for (const auto& op : profile) {
    if (op.kind == ProfileOp::Kind::insert) {
      if (op.a != next) fail(Errc::config, "profile operands not numbered in op order");
      next += 1;
    } else {
      if (op.a != next || op.b != next + 1)
        fail(Errc::config, "profile operands not numbered in op order");
      next += 2;
    }
  }
  if (rord.size() < next) fail(Errc::config, "order oracle smaller than the profile");

  auto [cl, sv] = InprocPipe::create();
  PopeServer server(cap, seeded_rng(derive_seed(sampling_seed, 0)), nullptr, chunk);
  std::exception_ptr srv_err;
  std::thread th([&, svp = sv.get()] {
    try {
      server.serve(*svp);
    } catch (...) {
      srv_err = std::current_exception();
    }
  });

  Transcript log;
  log.capture_bytes = true;
  Channel ch(*cl, &log);
  SecretKey key = keygen(derive_seed(sampling_seed, 0x51));
  if (sim_key_out) *sim_key_out = key;
  auto rng = seeded_rng(derive_seed(sampling_seed, 0x52));

  std::unordered_map<std::string, uint64_t> who; // ct bytes -> operand id
  auto remember = [&](const LabelCt& c, uint64_t id) {
    auto b = c.bytes();
    who.emplace(std::string(reinterpret_cast<const char*>(b.data()), b.size()), id);
  };
  auto id_of = [&](const LabelCt& c) {
    auto b = c.bytes();
    auto it = who.find(std::string(reinterpret_cast<const char*>(b.data()), b.size()));
    if (it == who.end()) fail(Errc::protocol, "ciphertext the client never sent");
    return it->second;
  };

  try {
    for (const auto& op : profile) {
      if (op.kind == ProfileOp::Kind::insert) {
        LabelCt ct = enc_label(key, 0, Origin::insert, *rng);
        PayloadCt pct = enc_payload(key, std::vector<uint8_t>(op.payload_len, 0), *rng);
        remember(ct, op.a);
        ch.send(make_block_op(MsgKind::insert, {ct, pct}));
        continue;
      }
      LabelCt lo = enc_label(key, 0, Origin::left, *rng);
      LabelCt hi = enc_label(key, 0, Origin::right, *rng);
      remember(lo, op.a);
      remember(hi, op.b);
      ch.send(make_search(MsgKind::search, lo, hi));

      std::vector<uint64_t> pivots; // operand ids, ascending under the oracle
      auto place = [&](uint64_t x) { // matches the real client: 1-based lower bound
        auto it = std::lower_bound(pivots.begin(), pivots.end(), x,
                                   [&](uint64_t p, uint64_t v) { return rord.less(p, v); });
        return uint32_t(it - pivots.begin()) + 1;
      };

      for (bool done = false; !done;) {
        Message f = ch.recv();
        switch (f.kind) {
          case MsgKind::split_pivots: {
            pivots.clear();
            for (const auto& c : parse_labels(f)) pivots.push_back(id_of(c));
            for (size_t i = 0; i + 1 < pivots.size(); ++i)
              if (!rord.less(pivots[i], pivots[i + 1])) fail(Errc::protocol, "pivots not sorted");
            break;
          }
          case MsgKind::split_stream: {
            auto cts = parse_labels(f);
            std::vector<uint32_t> idx;
            idx.reserve(cts.size());
            for (const auto& c : cts) idx.push_back(place(id_of(c)));
            ch.send(make_indices(idx));
            break;
          }
          case MsgKind::sort_request: {
            auto cts = parse_labels(f);
            std::vector<size_t> order(cts.size());
            std::iota(order.begin(), order.end(), 0);
            std::vector<uint64_t> ids;
            ids.reserve(cts.size());
            for (const auto& c : cts) ids.push_back(id_of(c));
            std::sort(order.begin(), order.end(),
                      [&](size_t x, size_t y) { return rord.less(ids[x], ids[y]); });
            std::vector<LabelCt> sorted;
            sorted.reserve(cts.size());
            pivots.clear();
            for (size_t x : order) {
              sorted.push_back(cts[x]);
              pivots.push_back(ids[x]); // retained: the partition that follows uses them
            }
            ch.send(make_labels(MsgKind::sort_reply, sorted));
            break;
          }
          case MsgKind::locate_request: {
            uint8_t phase = parse_locate(f);
            ch.send(make_index(MsgKind::locate_reply, place(phase == 0 ? op.a : op.b)));
            break;
          }
          case MsgKind::range_result: {
            parse_blocks(f);
            done = true;
            break;
          }
          default:
            fail(Errc::protocol, "unexpected frame during simulated search");
        }
      }
    }
    ch.send(Message{MsgKind::bye, {}});
    cl->close();
  } catch (...) {
    cl->close();
    th.join();
    throw;
  }
  th.join();
  if (srv_err) std::rethrow_exception(srv_err);
  return log;
}

} // namespace pope
