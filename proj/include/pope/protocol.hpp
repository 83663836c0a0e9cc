#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pope/codec.hpp"

namespace pope {

// Wire format: 4-byte big-endian frame length (version + kind + body),
// 1-byte version, 1-byte kind, kind-specific body. All integers big-endian.
// Label ciphertexts are fixed 32 bytes; payload ciphertexts length-prefixed.
constexpr uint8_t kProtoVersion = 1;
constexpr size_t kMaxFrameBody = 64u << 20; // sanity cap, not a protocol limit
constexpr uint32_t kDefaultChunk = 64;      // labels per stream frame

enum class MsgKind : uint8_t {
  // client -> server operations
  insert = 1,      // label ct + payload ct; one-way, never answered
  search = 2,      // left label ct + right label ct
  // server -> client requests during a split, and their replies
  split_pivots = 3,   // u32 k, k label cts: the node's sorted list
  split_stream = 4,   // u32 c, c label cts: a chunk of buffered labels
  classify_reply = 5, // u32 c, c u32 1-based sorted indices
  sort_request = 6,   // u32 k, k label cts to sort (k <= client capacity)
  sort_reply = 7,     // u32 k, the same cts in tuple order
  locate_request = 8, // u8 phase (0 = left endpoint, 1 = right endpoint)
  locate_reply = 9,   // u32 1-based child index
  range_result = 10,  // u32 n, n blocks; completes a search
  error_msg = 11,     // u8 code, u16 len, utf-8 text; fail-stop
  bye = 12,           // clean client shutdown
  // baseline scheme, same framing
  mope_insert = 13, // label ct + payload ct; answered by a descent
  mope_search = 14, // left ct + right ct
  mope_node = 15,   // u8 phase (0 insert, 1 left, 2 right), u8 is_leaf, u32 k, k label cts
  mope_step = 16,   // u32 1-based position among the node's items
  mope_result = 17, // u32 n, n blocks; completes a search
};

struct Message {
  MsgKind kind;
  std::vector<uint8_t> body;
  bool operator==(const Message&) const = default;
};

std::vector<uint8_t> frame(const Message& m);
Message unframe(const uint8_t* data, size_t len); // whole frame, length prefix included
// number of ciphertexts a frame carries (labels + payloads), for accounting
uint32_t ct_count(const Message& m);

// ---- per-kind builders and parsers (throw Errc::protocol on malformed bodies)

Message make_block_op(MsgKind kind, const EncryptedBlock& b); // insert / mope_insert
EncryptedBlock parse_block_op(const Message& m);

Message make_search(MsgKind kind, const LabelCt& left, const LabelCt& right);
std::pair<LabelCt, LabelCt> parse_search(const Message& m);

Message make_labels(MsgKind kind, const std::vector<LabelCt>& labels);
std::vector<LabelCt> parse_labels(const Message& m);

Message make_indices(const std::vector<uint32_t>& idx); // classify_reply
std::vector<uint32_t> parse_indices(const Message& m);

Message make_index(MsgKind kind, uint32_t idx); // locate_reply / mope_step
uint32_t parse_index(const Message& m);

Message make_locate(uint8_t phase);
uint8_t parse_locate(const Message& m);

Message make_blocks(MsgKind kind, const std::vector<EncryptedBlock>& blocks);
std::vector<EncryptedBlock> parse_blocks(const Message& m);

Message make_error(uint8_t code, const std::string& text);
std::pair<uint8_t, std::string> parse_error(const Message& m);

Message make_mope_node(uint8_t phase, bool is_leaf, const std::vector<LabelCt>& labels);
struct MopeNodeMsg {
  uint8_t phase;
  bool is_leaf;
  std::vector<LabelCt> labels;
};
MopeNodeMsg parse_mope_node(const Message& m);

// ---- transports

struct Transport {
  virtual ~Transport() = default;
  virtual void send(const std::vector<uint8_t>& frame) = 0; // never blocks on peer
  virtual std::vector<uint8_t> recv() = 0;                  // blocks; Errc::session when closed
  virtual void close() = 0;
  // frames the sender may have in flight before it must drain replies;
  // 0 = unbounded (no flow-control stalls)
  virtual uint32_t send_window() const { return 0; }
};

// In-process pair of endpoints over two queues. Each frame arrives
// `latency/2` after it was sent (one-way propagation), so a blocking
// request→reply exchange pays the full configured latency and pipelined
// flights pay it once.
struct InprocPipe {
  static std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> create(
      std::chrono::microseconds latency = {});
};

// Loopback TCP. listen_loopback binds an ephemeral port; accept_one blocks
// for the peer. Socket endpoints use a bounded send window.
class Listener {
 public:
  Listener();
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;
  uint16_t port() const { return port_; }
  std::unique_ptr<Transport> accept_one();

 private:
  int fd_;
  uint16_t port_;
};
std::unique_ptr<Transport> connect_loopback(uint16_t port);

// ---- session accounting

struct FrameInfo {
  MsgKind kind;
  uint32_t body_len;
  uint32_t cts;
  bool operator==(const FrameInfo&) const = default;
};

// one side's view of a session: every frame it sent and received, in order.
// Per-direction order is deterministic; cross-direction interleaving is not
// and is deliberately not recorded. Set capture_bytes before the session to
// also keep whole frames (for byte-level determinism checks).
struct Transcript {
  std::vector<FrameInfo> sent, received;
  bool capture_bytes = false;
  std::vector<std::vector<uint8_t>> sent_bytes, received_bytes;
  bool operator==(const Transcript& o) const {
    return sent == o.sent && received == o.received && sent_bytes == o.sent_bytes &&
           received_bytes == o.received_bytes;
  }
};

struct Counters {
  uint64_t rounds = 0;   // blocking exchanges: one per sort/locate request and
                         // per awaited result or node flight
  uint64_t one_way = 0;  // messages never answered (inserts)
  uint64_t cts = 0;      // label + payload ciphertexts, result bodies excluded
  // decomposition of cts (accounting identity: the components sum to cts)
  uint64_t insert_cts = 0, endpoint_cts = 0, pivot_cts = 0, stream_cts = 0, sort_cts = 0,
           node_cts = 0;
  // labels the server asked the client to place (stream + sort + locate)
  uint64_t comparison_requests = 0;
  bool operator==(const Counters&) const = default;
  Counters& operator+=(const Counters& o);
};

struct OpStats {
  MsgKind op;
  Counters c;
  double wall_ms = 0; // excluded from determinism comparisons
};

struct Metrics {
  Counters total;
  std::vector<OpStats> per_op;
};

// Rebuild the counters (minus wall time) from a raw frame log alone; sessions
// assert this equals the live counters. `client_view` flips which direction
// counts as client-sent.
Counters recompute(const Transcript& t, bool client_view = true);

// logging wrapper every session talks through
class Channel {
 public:
  Channel(Transport& t, Transcript* log) : t_(t), log_(log) {}
  void send(const Message& m);
  Message recv();
  Transport& transport() { return t_; }

 private:
  Transport& t_;
  Transcript* log_;
};

} // namespace pope
