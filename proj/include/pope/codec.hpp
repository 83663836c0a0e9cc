#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <vector>

#include "pope/error.hpp"
#include "pope/rng.hpp"

namespace pope {

constexpr size_t kBlockBytes = 16; // cipher block, 128 bits
using Block = std::array<uint8_t, kBlockBytes>;

// Two origin bits order range endpoints around equal inserted labels:
// a left endpoint sorts before every insert of the same label, a right
// endpoint after, so inclusive ranges fall out of plain comparison.
enum class Origin : uint8_t { left = 0b00, insert = 0b01, right = 0b11 };

struct SecretKey {
  std::array<uint8_t, 16> label_key{};  // PRP key (label masking + tiebreak)
  std::array<uint8_t, 32> payload_key{}; // independent authenticated-encryption key
  uint32_t label_bits = 64;              // W, label width in bits
};

// keygen(): fresh random keys; keygen(seed): reproducible keys.
SecretKey keygen(std::optional<uint64_t> seed = std::nullopt, uint32_t label_bits = 64);

// Label ciphertext: random block r and PRP_k(r+1) XOR (label ‖ origin ‖ zero pad).
struct LabelCt {
  Block r{};
  Block masked{};

  std::array<uint8_t, 2 * kBlockBytes> bytes() const; // r ‖ masked, serialization order
  static LabelCt from_bytes(const uint8_t* p);
  bool operator==(const LabelCt&) const = default;
};

// Decrypted view of a label ciphertext. The tiebreak is PRP_k(r+2), so two
// encryptions of the same label land in a fresh random relative order; ctbytes
// is a last deterministic tie level making the order total.
struct EffectiveTuple {
  uint64_t label = 0;
  uint8_t origin = 0; // raw two bits; garbage ciphertexts may carry 0b10
  Block tiebreak{};
  std::array<uint8_t, 2 * kBlockBytes> ctbytes{};

  auto operator<=>(const EffectiveTuple&) const = default;
};

enum class Ordering { LT, EQ, GT };

LabelCt enc_label(const SecretKey& key, uint64_t label, Origin origin, Rng& rng);
EffectiveTuple dec_label(const SecretKey& key, const LabelCt& ct);
Ordering compare(const SecretKey& key, const LabelCt& a, const LabelCt& b);

inline Ordering compare(const EffectiveTuple& a, const EffectiveTuple& b) {
  auto c = a <=> b;
  return c < 0 ? Ordering::LT : c > 0 ? Ordering::GT : Ordering::EQ;
}

// Payload encryption: nonce ‖ body ‖ tag, authenticated. Tampering raises
// Errc::integrity on decryption.
struct PayloadCt {
  std::vector<uint8_t> bytes;
  bool operator==(const PayloadCt&) const = default;
};

PayloadCt enc_payload(const SecretKey& key, const std::vector<uint8_t>& plain, Rng& rng);
std::vector<uint8_t> dec_payload(const SecretKey& key, const PayloadCt& ct);

constexpr size_t kLabelCtBytes = 2 * kBlockBytes; // serialized LabelCt width

// the unit everything stores and ships: one label ct and its payload ct
struct EncryptedBlock {
  LabelCt label_ct;
  PayloadCt payload_ct;
  bool operator==(const EncryptedBlock&) const = default;
};

// raw single-block PRP evaluation (exposed for tie-break recomputation)
Block prp_block(const std::array<uint8_t, 16>& key, const Block& in);
// wrapping big-endian add on a block
Block block_add(Block b, uint64_t delta);

} // namespace pope
