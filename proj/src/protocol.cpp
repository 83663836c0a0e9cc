#include "pope/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "pope/error.hpp"

namespace pope {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(uint8_t(v >> s));
}

// bounds-checked body reader; every parser must consume exactly the body
struct Reader {
  const uint8_t* p;
  size_t n, off = 0;

  void need(size_t k) const {
    if (n - off < k) fail(Errc::protocol, "frame body truncated");
  }
  uint8_t u8() {
    need(1);
    return p[off++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p[off]) << 8 | p[off + 1];
    off += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | p[off + i];
    off += 4;
    return v;
  }
  LabelCt label() {
    need(kLabelCtBytes);
    LabelCt c = LabelCt::from_bytes(p + off);
    off += kLabelCtBytes;
    return c;
  }
  std::vector<uint8_t> bytes(size_t k) {
    need(k);
    std::vector<uint8_t> v(p + off, p + off + k);
    off += k;
    return v;
  }
  void done() const {
    if (off != n) fail(Errc::protocol, "trailing bytes in frame body");
  }
};

void put_label(std::vector<uint8_t>& out, const LabelCt& c) {
  auto b = c.bytes();
  out.insert(out.end(), b.begin(), b.end());
}

void put_block(std::vector<uint8_t>& out, const EncryptedBlock& b) {
  put_label(out, b.label_ct);
  put_u32(out, uint32_t(b.payload_ct.bytes.size()));
  out.insert(out.end(), b.payload_ct.bytes.begin(), b.payload_ct.bytes.end());
}

EncryptedBlock get_block(Reader& r) {
  EncryptedBlock b;
  b.label_ct = r.label();
  uint32_t plen = r.u32();
  if (plen > kMaxFrameBody) fail(Errc::protocol, "payload length out of range");
  b.payload_ct.bytes = r.bytes(plen);
  return b;
}

void check_kind(const Message& m, MsgKind k) {
  if (m.kind != k) fail(Errc::protocol, "unexpected message kind");
}

void check_kind2(const Message& m, MsgKind a, MsgKind b) {
  if (m.kind != a && m.kind != b) fail(Errc::protocol, "unexpected message kind");
}

bool valid_kind(uint8_t k) {
  return k >= uint8_t(MsgKind::insert) && k <= uint8_t(MsgKind::mope_result);
}

} // namespace

std::vector<uint8_t> frame(const Message& m) {
  if (m.body.size() > kMaxFrameBody) fail(Errc::protocol, "frame body too large");
  std::vector<uint8_t> out;
  out.reserve(6 + m.body.size());
  put_u32(out, uint32_t(2 + m.body.size()));
  out.push_back(kProtoVersion);
  out.push_back(uint8_t(m.kind));
  out.insert(out.end(), m.body.begin(), m.body.end());
  return out;
}

Message unframe(const uint8_t* data, size_t len) {
  Reader r{data, len};
  uint32_t flen = r.u32();
  if (flen < 2) fail(Errc::protocol, "frame shorter than header");
  if (flen > 2 + kMaxFrameBody) fail(Errc::protocol, "frame length out of range");
  if (size_t(flen) + 4 != len) fail(Errc::protocol, "frame length mismatch");
  uint8_t ver = r.u8();
  if (ver != kProtoVersion) fail(Errc::protocol, "unsupported protocol version");
  uint8_t kind = r.u8();
  if (!valid_kind(kind)) fail(Errc::protocol, "unknown message kind");
  Message m{MsgKind(kind), {}};
  m.body.assign(data + r.off, data + len);
  return m;
}

uint32_t ct_count(const Message& m) {
  switch (m.kind) {
    case MsgKind::insert:
    case MsgKind::mope_insert:
    case MsgKind::search:
    case MsgKind::mope_search:
      return 2;
    case MsgKind::split_pivots:
    case MsgKind::split_stream:
    case MsgKind::sort_request:
    case MsgKind::sort_reply: {
      Reader r{m.body.data(), m.body.size()};
      return r.u32();
    }
    case MsgKind::mope_node: {
      Reader r{m.body.data(), m.body.size()};
      r.u8();
      r.u8();
      return r.u32();
    }
    case MsgKind::range_result:
    case MsgKind::mope_result: {
      // carried but excluded from bandwidth accounting by convention
      return 0;
    }
    default:
      return 0;
  }
}

Message make_block_op(MsgKind kind, const EncryptedBlock& b) {
  Message m{kind, {}};
  put_block(m.body, b);
  return m;
}

EncryptedBlock parse_block_op(const Message& m) {
  check_kind2(m, MsgKind::insert, MsgKind::mope_insert);
  Reader r{m.body.data(), m.body.size()};
  EncryptedBlock b = get_block(r);
  r.done();
  return b;
}

Message make_search(MsgKind kind, const LabelCt& left, const LabelCt& right) {
  Message m{kind, {}};
  put_label(m.body, left);
  put_label(m.body, right);
  return m;
}

std::pair<LabelCt, LabelCt> parse_search(const Message& m) {
  check_kind2(m, MsgKind::search, MsgKind::mope_search);
  Reader r{m.body.data(), m.body.size()};
  LabelCt a = r.label(), b = r.label();
  r.done();
  return {a, b};
}

Message make_labels(MsgKind kind, const std::vector<LabelCt>& labels) {
  Message m{kind, {}};
  put_u32(m.body, uint32_t(labels.size()));
  for (const auto& c : labels) put_label(m.body, c);
  return m;
}

std::vector<LabelCt> parse_labels(const Message& m) {
  switch (m.kind) {
    case MsgKind::split_pivots:
    case MsgKind::split_stream:
    case MsgKind::sort_request:
    case MsgKind::sort_reply:
      break;
    default:
      fail(Errc::protocol, "unexpected message kind");
  }
  Reader r{m.body.data(), m.body.size()};
  uint32_t k = r.u32();
  if (size_t(k) * kLabelCtBytes != r.n - r.off) fail(Errc::protocol, "label count mismatch");
  std::vector<LabelCt> out;
  out.reserve(k);
  for (uint32_t i = 0; i < k; ++i) out.push_back(r.label());
  r.done();
  return out;
}

Message make_indices(const std::vector<uint32_t>& idx) {
  Message m{MsgKind::classify_reply, {}};
  put_u32(m.body, uint32_t(idx.size()));
  for (uint32_t v : idx) put_u32(m.body, v);
  return m;
}

std::vector<uint32_t> parse_indices(const Message& m) {
  check_kind(m, MsgKind::classify_reply);
  Reader r{m.body.data(), m.body.size()};
  uint32_t k = r.u32();
  if (size_t(k) * 4 != r.n - r.off) fail(Errc::protocol, "index count mismatch");
  std::vector<uint32_t> out;
  out.reserve(k);
  for (uint32_t i = 0; i < k; ++i) out.push_back(r.u32());
  r.done();
  return out;
}

Message make_index(MsgKind kind, uint32_t idx) {
  Message m{kind, {}};
  put_u32(m.body, idx);
  return m;
}

uint32_t parse_index(const Message& m) {
  check_kind2(m, MsgKind::locate_reply, MsgKind::mope_step);
  Reader r{m.body.data(), m.body.size()};
  uint32_t v = r.u32();
  r.done();
  return v;
}

Message make_locate(uint8_t phase) {
  Message m{MsgKind::locate_request, {phase}};
  return m;
}

uint8_t parse_locate(const Message& m) {
  check_kind(m, MsgKind::locate_request);
  Reader r{m.body.data(), m.body.size()};
  uint8_t p = r.u8();
  r.done();
  if (p > 1) fail(Errc::protocol, "bad locate phase");
  return p;
}

Message make_blocks(MsgKind kind, const std::vector<EncryptedBlock>& blocks) {
  Message m{kind, {}};
  put_u32(m.body, uint32_t(blocks.size()));
  for (const auto& b : blocks) put_block(m.body, b);
  return m;
}

std::vector<EncryptedBlock> parse_blocks(const Message& m) {
  check_kind2(m, MsgKind::range_result, MsgKind::mope_result);
  Reader r{m.body.data(), m.body.size()};
  uint32_t n = r.u32();
  std::vector<EncryptedBlock> out;
  out.reserve(std::min<uint32_t>(n, 1u << 16));
  for (uint32_t i = 0; i < n; ++i) out.push_back(get_block(r));
  r.done();
  return out;
}

Message make_error(uint8_t code, const std::string& text) {
  Message m{MsgKind::error_msg, {}};
  m.body.push_back(code);
  std::string t = text.size() > 0xffff ? text.substr(0, 0xffff) : text;
  put_u16(m.body, uint16_t(t.size()));
  m.body.insert(m.body.end(), t.begin(), t.end());
  return m;
}

std::pair<uint8_t, std::string> parse_error(const Message& m) {
  check_kind(m, MsgKind::error_msg);
  Reader r{m.body.data(), m.body.size()};
  uint8_t code = r.u8();
  uint16_t len = r.u16();
  auto bytes = r.bytes(len);
  r.done();
  return {code, std::string(bytes.begin(), bytes.end())};
}

Message make_mope_node(uint8_t phase, bool is_leaf, const std::vector<LabelCt>& labels) {
  Message m{MsgKind::mope_node, {}};
  m.body.push_back(phase);
  m.body.push_back(is_leaf ? 1 : 0);
  put_u32(m.body, uint32_t(labels.size()));
  for (const auto& c : labels) put_label(m.body, c);
  return m;
}

MopeNodeMsg parse_mope_node(const Message& m) {
  check_kind(m, MsgKind::mope_node);
  Reader r{m.body.data(), m.body.size()};
  MopeNodeMsg out;
  out.phase = r.u8();
  if (out.phase > 2) fail(Errc::protocol, "bad descent phase");
  uint8_t leaf = r.u8();
  if (leaf > 1) fail(Errc::protocol, "bad leaf flag");
  out.is_leaf = leaf != 0;
  uint32_t k = r.u32();
  if (size_t(k) * kLabelCtBytes != r.n - r.off) fail(Errc::protocol, "label count mismatch");
  out.labels.reserve(k);
  for (uint32_t i = 0; i < k; ++i) out.labels.push_back(r.label());
  r.done();
  return out;
}

// ---- in-process transport

namespace {

struct InprocQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::pair<std::chrono::steady_clock::time_point, std::vector<uint8_t>>> q;
  bool closed = false;

  void push(std::vector<uint8_t> f, std::chrono::steady_clock::time_point at) {
    {
      std::lock_guard lk(mu);
      if (closed) return; // peer is gone; drop like a broken pipe
      q.emplace_back(at, std::move(f));
    }
    cv.notify_one();
  }

  std::vector<uint8_t> pop() {
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return closed || !q.empty(); });
    if (q.empty()) fail(Errc::session, "transport closed");
    auto at = q.front().first;
    if (at > std::chrono::steady_clock::now()) {
      // frame still "in flight" (simulated propagation); sleep without the
      // lock so the sender never blocks. Sole consumer, so front is stable.
      lk.unlock();
      std::this_thread::sleep_until(at);
      lk.lock();
    }
    auto f = std::move(q.front().second);
    q.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class InprocEndpoint : public Transport {
 public:
  InprocEndpoint(std::shared_ptr<InprocQueue> out, std::shared_ptr<InprocQueue> in,
                 std::chrono::microseconds one_way)
      : out_(std::move(out)), in_(std::move(in)), one_way_(one_way) {}

  void send(const std::vector<uint8_t>& f) override {
    out_->push(f, std::chrono::steady_clock::now() + one_way_);
  }
  std::vector<uint8_t> recv() override { return in_->pop(); }
  void close() override {
    out_->close();
    in_->close();
  }

 private:
  std::shared_ptr<InprocQueue> out_, in_;
  std::chrono::microseconds one_way_;
};

} // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> InprocPipe::create(
    std::chrono::microseconds latency) {
  auto a = std::make_shared<InprocQueue>();
  auto b = std::make_shared<InprocQueue>();
  auto half = latency / 2;
  return {std::make_unique<InprocEndpoint>(a, b, half),
          std::make_unique<InprocEndpoint>(b, a, half)};
}

// ---- loopback TCP transport

namespace {

class SocketTransport : public Transport {
 public:
  explicit SocketTransport(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketTransport() override { close(); }

  void send(const std::vector<uint8_t>& f) override {
    size_t off = 0;
    while (off < f.size()) {
      ssize_t k = ::send(fd_, f.data() + off, f.size() - off, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        fail(Errc::session, std::string("socket send: ") + std::strerror(errno));
      }
      off += size_t(k);
    }
  }

  std::vector<uint8_t> recv() override {
    uint8_t hdr[4];
    read_all(hdr, 4);
    uint32_t flen = 0;
    for (int i = 0; i < 4; ++i) flen = flen << 8 | hdr[i];
    if (flen < 2 || flen > 2 + kMaxFrameBody) fail(Errc::protocol, "frame length out of range");
    std::vector<uint8_t> f(4 + flen);
    std::memcpy(f.data(), hdr, 4);
    read_all(f.data() + 4, flen);
    return f;
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  uint32_t send_window() const override { return 32; }

 private:
  void read_all(uint8_t* dst, size_t n) {
    size_t off = 0;
    while (off < n) {
      ssize_t k = ::read(fd_, dst + off, n - off);
      if (k == 0) fail(Errc::session, "transport closed");
      if (k < 0) {
        if (errno == EINTR) continue;
        fail(Errc::session, std::string("socket read: ") + std::strerror(errno));
      }
      off += size_t(k);
    }
  }

  int fd_;
};

} // namespace

Listener::Listener() {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) fail(Errc::io, "socket() failed");
  int one = 1;
  setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 1) < 0)
    fail(Errc::io, "bind/listen failed");
  socklen_t alen = sizeof addr;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &alen) < 0)
    fail(Errc::io, "getsockname failed");
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> Listener::accept_one() {
  int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) fail(Errc::io, "accept failed");
  return std::make_unique<SocketTransport>(c);
}

std::unique_ptr<Transport> connect_loopback(uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail(Errc::io, "socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  for (int tries = 0;; ++tries) {
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) break;
    if (errno == EINTR) continue;
    if ((errno == ECONNREFUSED || errno == EAGAIN) && tries < 50) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }
    ::close(fd);
    fail(Errc::io, std::string("connect failed: ") + std::strerror(errno));
  }
  return std::make_unique<SocketTransport>(fd);
}

// ---- accounting

Counters& Counters::operator+=(const Counters& o) {
  rounds += o.rounds;
  one_way += o.one_way;
  cts += o.cts;
  insert_cts += o.insert_cts;
  endpoint_cts += o.endpoint_cts;
  pivot_cts += o.pivot_cts;
  stream_cts += o.stream_cts;
  sort_cts += o.sort_cts;
  node_cts += o.node_cts;
  comparison_requests += o.comparison_requests;
  return *this;
}

Counters recompute(const Transcript& t, bool client_view) {
  const auto& client_sent = client_view ? t.sent : t.received;
  const auto& client_recv = client_view ? t.received : t.sent;
  Counters c;
  for (const auto& f : client_sent) {
    switch (f.kind) {
      case MsgKind::insert:
      case MsgKind::mope_insert:
        c.insert_cts += f.cts;
        if (f.kind == MsgKind::insert) c.one_way += 1;
        break;
      case MsgKind::search:
      case MsgKind::mope_search:
        c.endpoint_cts += f.cts;
        break;
      case MsgKind::sort_reply:
        c.sort_cts += f.cts;
        break;
      default:
        break;
    }
  }
  for (const auto& f : client_recv) {
    switch (f.kind) {
      case MsgKind::split_pivots:
        c.pivot_cts += f.cts;
        break;
      case MsgKind::split_stream:
        c.stream_cts += f.cts;
        c.comparison_requests += f.cts;
        break;
      case MsgKind::sort_request:
        c.sort_cts += f.cts;
        c.comparison_requests += f.cts;
        c.rounds += 1;
        break;
      case MsgKind::locate_request:
        c.comparison_requests += 1;
        c.rounds += 1;
        break;
      case MsgKind::mope_node:
        c.node_cts += f.cts;
        c.comparison_requests += 1;
        c.rounds += 1;
        break;
      case MsgKind::range_result:
      case MsgKind::mope_result:
        c.rounds += 1;
        break;
      default:
        break;
    }
  }
  c.cts = c.insert_cts + c.endpoint_cts + c.pivot_cts + c.stream_cts + c.sort_cts + c.node_cts;
  return c;
}

void Channel::send(const Message& m) {
  auto f = frame(m);
  if (log_) {
    log_->sent.push_back({m.kind, uint32_t(m.body.size()), ct_count(m)});
    if (log_->capture_bytes) log_->sent_bytes.push_back(f);
  }
  t_.send(f);
}

Message Channel::recv() {
  auto f = t_.recv();
  Message m = unframe(f.data(), f.size());
  if (log_) {
    log_->received.push_back({m.kind, uint32_t(m.body.size()), ct_count(m)});
    if (log_->capture_bytes) log_->received_bytes.push_back(f);
  }
  if (m.kind == MsgKind::error_msg) {
    auto [code, text] = parse_error(m);
    fail(Errc(code), "remote failure: " + text);
  }
  return m;
}

} // namespace pope
