#include "pope/session.hpp"

#include <algorithm>
#include <chrono>

#include "pope/error.hpp"

namespace pope {

namespace {

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

ClientSession::ClientSession(SecretKey key, uint32_t cap, std::unique_ptr<Transport> t,
                             std::unique_ptr<Rng> enc_rng, bool capture_frames)
    : key_(key), cap_(cap), t_(std::move(t)), rng_(std::move(enc_rng)), ch_(*t_, &log_) {
  if (!t_ || !rng_) fail(Errc::config, "session needs a transport and an rng");
  log_.capture_bytes = capture_frames;
}

ClientSession::~ClientSession() {
  try {
    close();
  } catch (...) {
  }
}

void ClientSession::close() {
  if (closed_) return;
  closed_ = true;
  ch_.send(Message{MsgKind::bye, {}});
  t_->close();
}

void ClientSession::note_held(uint64_t n) {
  if (n > peak_held_) peak_held_ = n;
}

void ClientSession::insert(uint64_t label, const std::vector<uint8_t>& payload) {
  auto t0 = std::chrono::steady_clock::now();
  Counters before = m_.total;
  EncryptedBlock b{enc_label(key_, label, Origin::insert, *rng_), enc_payload(key_, payload, *rng_)};
  note_held(1);
  ch_.send(make_block_op(MsgKind::insert, b));
  m_.total.one_way += 1;
  m_.total.insert_cts += 2;
  m_.total.cts += 2;
  m_.per_op.push_back({MsgKind::insert, delta(m_.total, before), ms_since(t0)});
}

std::vector<ResultRow> ClientSession::search(uint64_t lo, uint64_t hi) {
  if (lo > hi) fail(Errc::config, "range endpoints out of order");
  auto t0 = std::chrono::steady_clock::now();
  Counters before = m_.total;

  LabelCt lct = enc_label(key_, lo, Origin::left, *rng_);
  LabelCt rct = enc_label(key_, hi, Origin::right, *rng_);
  EffectiveTuple lo_t = dec_label(key_, lct);
  EffectiveTuple hi_t = dec_label(key_, rct);
  note_held(2);

  std::vector<EffectiveTuple> pivots; // decrypted, strictly increasing
  std::vector<ResultRow> rows;

  auto install_pivots = [&](const std::vector<LabelCt>& cts) {
    if (cap_ && cts.size() > cap_) fail(Errc::capacity, "pivot list exceeds working-set bound");
    pivots = decrypt_all(key_, cts);
    for (size_t i = 0; i + 1 < pivots.size(); ++i)
      if (!(pivots[i] < pivots[i + 1])) fail(Errc::protocol, "pivots not sorted");
    note_held(pivots.size() + 2);
  };

  try {
    ch_.send(make_search(MsgKind::search, lct, rct));
    m_.total.endpoint_cts += 2;
    m_.total.cts += 2;

    for (;;) {
      Message f = ch_.recv();
      switch (f.kind) {
        case MsgKind::split_pivots:
          install_pivots(parse_labels(f));
          m_.total.pivot_cts += pivots.size();
          m_.total.cts += pivots.size();
          break;

        case MsgKind::split_stream: {
          auto cts = parse_labels(f);
          std::vector<uint32_t> idx;
          idx.reserve(cts.size());
          for (const auto& c : cts) {
            // one label in hand at a time on top of the pivot list
            note_held(pivots.size() + 3);
            idx.push_back(classify_one(dec_label(key_, c), pivots));
          }
          ch_.send(make_indices(idx));
          m_.total.stream_cts += cts.size();
          m_.total.cts += cts.size();
          m_.total.comparison_requests += cts.size();
          break;
        }

        case MsgKind::sort_request: {
          auto cts = parse_labels(f);
          if (cap_ && cts.size() > cap_) fail(Errc::capacity, "sample exceeds working-set bound");
          pivots.clear();
          note_held(cts.size() + 2);
          auto sorted = sort_pivots(key_, cts, cap_);
          ch_.send(make_labels(MsgKind::sort_reply, sorted));
          install_pivots(sorted); // retained: the partition that follows uses them
          m_.total.sort_cts += 2 * cts.size();
          m_.total.cts += 2 * cts.size();
          m_.total.comparison_requests += cts.size();
          m_.total.rounds += 1;
          break;
        }

        case MsgKind::locate_request: {
          uint8_t phase = parse_locate(f);
          note_held(pivots.size() + 3);
          uint32_t idx = classify_one(phase == 0 ? lo_t : hi_t, pivots);
          ch_.send(make_index(MsgKind::locate_reply, idx));
          m_.total.comparison_requests += 1;
          m_.total.rounds += 1;
          break;
        }

        case MsgKind::range_result: {
          m_.total.rounds += 1;
          for (const auto& b : parse_blocks(f)) {
            EffectiveTuple t = dec_label(key_, b.label_ct);
            if (lo_t < t && t < hi_t) rows.push_back({t.label, dec_payload(key_, b.payload_ct)});
          }
          std::sort(rows.begin(), rows.end());
          m_.per_op.push_back({MsgKind::search, delta(m_.total, before), ms_since(t0)});
          return rows;
        }

        default:
          fail(Errc::protocol, "unexpected frame during a search");
      }
    }
  } catch (const Error& e) {
    // tell the peer why we are going away, then fail stop
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
