#pragma once

#include <memory>
#include <vector>

#include "pope/client.hpp"
#include "pope/protocol.hpp"
#include "pope/rng.hpp"

namespace pope {

struct ResultRow {
  uint64_t label;
  std::vector<uint8_t> payload;
  bool operator==(const ResultRow&) const = default;
  auto operator<=>(const ResultRow&) const = default;
};

// Client endpoint of a session. Persistent state is the key and the capacity
// bound; everything else lives for the duration of one call. Counts metrics
// live and logs every frame; peak_held() reports the most label units
// (ciphertext or decrypted tuple) the call logic ever retained at once —
// the working-set contract is cap + O(1).
class ClientSession {
 public:
  ClientSession(SecretKey key, uint32_t cap, std::unique_ptr<Transport> t,
                std::unique_ptr<Rng> enc_rng, bool capture_frames = false);
  ~ClientSession();

  void insert(uint64_t label, const std::vector<uint8_t>& payload);
  // inclusive range; rows decrypted, boundary residue filtered, sorted
  std::vector<ResultRow> search(uint64_t lo, uint64_t hi);

  void close(); // polite shutdown; destructor closes quietly

  const Metrics& metrics() const { return m_; }
  const Transcript& transcript() const { return log_; }
  uint64_t peak_held() const { return peak_held_; }
  uint32_t cap() const { return cap_; }

 private:
  void note_held(uint64_t n);

  SecretKey key_;
  uint32_t cap_;
  std::unique_ptr<Transport> t_;
  std::unique_ptr<Rng> rng_;
  Transcript log_;
  Channel ch_;
  Metrics m_;
  uint64_t peak_held_ = 0;
  bool closed_ = false;
};

} // namespace pope
