#pragma once

#include <memory>
#include <mutex>

#include "pope/order_tap.hpp"
#include "pope/protocol.hpp"
#include "pope/tree.hpp"

namespace pope {

// Owns the buffer tree and answers one connection at a time with serve();
// ops are serialized by a coarse mutex so several connections may be served
// from different threads against the same tree. Never inspects plaintext:
// every ordering decision goes back over the wire. Fail-stop: the first
// failed op sends an error frame and rethrows.
class PopeServer {
 public:
  PopeServer(uint32_t cap, std::unique_ptr<Rng> sample_rng, OrderTap* tap = nullptr,
             uint32_t chunk = kDefaultChunk);

  // handle ops until the peer says bye or closes between ops
  void serve(Transport& t, Transcript* log = nullptr);

  PopeTree& tree() { return tree_; }
  const PopeTree& tree() const { return tree_; }
  uint32_t chunk() const { return chunk_; }

 private:
  void run_search(Channel& ch, const Message& f);

  PopeTree tree_;
  OrderTap* tap_;
  uint32_t chunk_;
  std::mutex mu_;
};

} // namespace pope
