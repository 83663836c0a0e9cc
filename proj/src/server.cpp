#include "pope/server.hpp"

#include <deque>

#include "pope/error.hpp"

namespace pope {

namespace {

// SplitOracle that asks the connected client. Streamed chunks are pipelined;
// on a windowed transport (sockets) replies are drained while sending so
// neither peer's buffers can fill up and deadlock.
struct WireOracle : SplitOracle {
  Channel& ch;
  uint32_t chunk;
  uint8_t phase = 0; // 0 = left endpoint, 1 = right endpoint

  WireOracle(Channel& c, uint32_t chunk_size) : ch(c), chunk(chunk_size) {}

  FlushReply flush_and_locate(const std::vector<LabelCt>& pivots,
                              const std::vector<LabelCt>& stream, bool pivots_known) override {
    if (!pivots_known) ch.send(make_labels(MsgKind::split_pivots, pivots));

    const uint32_t window = ch.transport().send_window();
    std::deque<uint32_t> outstanding; // chunk sizes awaiting a classify reply
    FlushReply rep;
    rep.indices.reserve(stream.size());

    auto drain_one = [&] {
      auto idx = parse_indices(ch.recv());
      if (idx.size() != outstanding.front()) fail(Errc::protocol, "classify reply size mismatch");
      outstanding.pop_front();
      rep.indices.insert(rep.indices.end(), idx.begin(), idx.end());
    };

    for (size_t off = 0; off < stream.size(); off += chunk) {
      size_t n = std::min<size_t>(chunk, stream.size() - off);
      ch.send(make_labels(MsgKind::split_stream,
                          {stream.begin() + off, stream.begin() + off + n}));
      outstanding.push_back(uint32_t(n));
      while (window && outstanding.size() > window) drain_one();
    }
    ch.send(make_locate(phase));
    while (!outstanding.empty()) drain_one();
    rep.child = parse_index(ch.recv());
    return rep;
  }

  std::vector<LabelCt> sort_labels(const std::vector<LabelCt>& sample) override {
    ch.send(make_labels(MsgKind::sort_request, sample));
    auto sorted = parse_labels(ch.recv());
    if (sorted.size() != sample.size()) fail(Errc::protocol, "sort reply size mismatch");
    return sorted;
  }
};

} // namespace

PopeServer::PopeServer(uint32_t cap, std::unique_ptr<Rng> sample_rng, OrderTap* tap, uint32_t chunk)
    : tree_(cap, std::move(sample_rng)), tap_(tap), chunk_(chunk == 0 ? kDefaultChunk : chunk) {}

void PopeServer::run_search(Channel& ch, const Message& f) {
  parse_search(f); // endpoints arrive with the request but only the client compares

  WireOracle oracle(ch, chunk_);
  oracle.phase = 0;
  PopeNode* leaf_l = tree_.split(oracle, tap_);
  tree_.rebalance(leaf_l);
  oracle.phase = 1;
  PopeNode* leaf_r = tree_.split(oracle, tap_);
  tree_.rebalance(leaf_r);

  ch.send(make_blocks(MsgKind::range_result, tree_.range_collect(leaf_l, leaf_r)));
}

void PopeServer::serve(Transport& t, Transcript* log) {
  Channel ch(t, log);
  for (;;) {
    Message f;
    try {
      f = ch.recv();
    } catch (const Error& e) {
      if (e.code == Errc::session) return; // peer went away between ops
      throw;
    }
    if (f.kind == MsgKind::bye) return;
    try {
      std::lock_guard lk(mu_);
      switch (f.kind) {
        case MsgKind::insert:
          tree_.insert(parse_block_op(f), tap_);
          break;
        case MsgKind::search:
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
      throw; // fail stop: one broken op ends the session
    }
  }
}

} // namespace pope
