#include "pope/codec.hpp"

#include <cstring>

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

namespace pope {

namespace {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SecureRng final : Rng {
  void fill(uint8_t* out, size_t n) override {
    if (RAND_bytes(out, static_cast<int>(n)) != 1) fail(Errc::state, "system rng failure");
  }
};

struct SeededRng final : Rng {
  uint64_t state;
  explicit SeededRng(uint64_t seed) : state(seed) {}
  void fill(uint8_t* out, size_t n) override {
    while (n >= 8) {
      uint64_t v = splitmix64(state);
      std::memcpy(out, &v, 8);
      out += 8;
      n -= 8;
    }
    if (n) {
      uint64_t v = splitmix64(state);
      std::memcpy(out, &v, n);
    }
  }
};

} // namespace

uint64_t Rng::next_u64() {
  uint8_t b[8];
  fill(b, 8);
  uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

uint64_t Rng::below(uint64_t bound) {
  if (bound == 0) fail(Errc::config, "rng bound must be positive");
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

double Rng::unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::unique_ptr<Rng> secure_rng() { return std::make_unique<SecureRng>(); }
std::unique_ptr<Rng> seeded_rng(uint64_t seed) { return std::make_unique<SeededRng>(seed); }

uint64_t derive_seed(uint64_t seed, uint64_t lane) {
  uint64_t s = seed ^ (0xa0761d6478bd642fULL * (lane + 1));
  splitmix64(s);
  return splitmix64(s);
}

SecretKey keygen(std::optional<uint64_t> seed, uint32_t label_bits) {
  if (label_bits == 0 || label_bits > 64) fail(Errc::config, "label width must be 1..64 bits");
  SecretKey k;
  k.label_bits = label_bits;
  if (seed) {
    // domain-separated digests of the seed; reproducible
    uint8_t material[16];
    std::memcpy(material, &*seed, 8);
    uint8_t digest[SHA256_DIGEST_LENGTH];
    std::memcpy(material + 8, "labelkey", 8);
    SHA256(material, 16, digest);
    std::memcpy(k.label_key.data(), digest, 16);
    std::memcpy(material + 8, "paylokey", 8);
    SHA256(material, 16, digest);
    std::memcpy(k.payload_key.data(), digest, 32);
  } else {
    SecureRng r;
    r.fill(k.label_key.data(), k.label_key.size());
    r.fill(k.payload_key.data(), k.payload_key.size());
  }
  return k;
}

Block prp_block(const std::array<uint8_t, 16>& key, const Block& in) {
  // single-block AES-128; context cached per thread, re-keyed on key change
  thread_local EVP_CIPHER_CTX* ctx = nullptr;
  thread_local std::array<uint8_t, 16> cached_key{};
  thread_local bool have_key = false;
  if (!ctx) {
    ctx = EVP_CIPHER_CTX_new();
    if (!ctx) fail(Errc::state, "cipher context allocation failed");
  }
  if (!have_key || cached_key != key) {
    if (EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.data(), nullptr) != 1)
      fail(Errc::state, "cipher init failed");
    EVP_CIPHER_CTX_set_padding(ctx, 0);
    cached_key = key;
    have_key = true;
  }
  Block out;
  int len = 0;
  if (EVP_EncryptUpdate(ctx, out.data(), &len, in.data(), kBlockBytes) != 1 ||
      len != static_cast<int>(kBlockBytes))
    fail(Errc::state, "block encryption failed");
  return out;
}

Block block_add(Block b, uint64_t delta) {
  for (int i = kBlockBytes - 1; i >= 0 && delta; --i) {
    uint64_t v = b[i] + (delta & 0xff);
    b[i] = static_cast<uint8_t>(v);
    delta = (delta >> 8) + (v >> 8);
  }
  return b;
}

namespace {

// W-bit big-endian label, then two origin bits, then zero padding
Block pack_label(uint64_t label, uint8_t origin, uint32_t width) {
  Block b{};
  for (uint32_t i = 0; i < width; ++i) {
    uint32_t bit = (label >> (width - 1 - i)) & 1;
    if (bit) b[i / 8] |= static_cast<uint8_t>(0x80u >> (i % 8));
  }
  for (uint32_t j = 0; j < 2; ++j) {
    uint32_t i = width + j;
    if ((origin >> (1 - j)) & 1) b[i / 8] |= static_cast<uint8_t>(0x80u >> (i % 8));
  }
  return b;
}

void unpack_label(const Block& b, uint32_t width, uint64_t& label, uint8_t& origin) {
  label = 0;
  for (uint32_t i = 0; i < width; ++i)
    label = (label << 1) | ((b[i / 8] >> (7 - i % 8)) & 1);
  origin = 0;
  for (uint32_t j = 0; j < 2; ++j) {
    uint32_t i = width + j;
    origin = static_cast<uint8_t>((origin << 1) | ((b[i / 8] >> (7 - i % 8)) & 1));
  }
}

} // namespace

std::array<uint8_t, 2 * kBlockBytes> LabelCt::bytes() const {
  std::array<uint8_t, 2 * kBlockBytes> out;
  std::memcpy(out.data(), r.data(), kBlockBytes);
  std::memcpy(out.data() + kBlockBytes, masked.data(), kBlockBytes);
  return out;
}

LabelCt LabelCt::from_bytes(const uint8_t* p) {
  LabelCt ct;
  std::memcpy(ct.r.data(), p, kBlockBytes);
  std::memcpy(ct.masked.data(), p + kBlockBytes, kBlockBytes);
  return ct;
}

LabelCt enc_label(const SecretKey& key, uint64_t label, Origin origin, Rng& rng) {
  if (key.label_bits < 64 && (label >> key.label_bits) != 0)
    fail(Errc::encoding, "label exceeds configured width");
  LabelCt ct;
  rng.fill(ct.r.data(), ct.r.size());
  Block mask = prp_block(key.label_key, block_add(ct.r, 1));
  Block plain = pack_label(label, static_cast<uint8_t>(origin), key.label_bits);
  for (size_t i = 0; i < kBlockBytes; ++i) ct.masked[i] = mask[i] ^ plain[i];
  return ct;
}

EffectiveTuple dec_label(const SecretKey& key, const LabelCt& ct) {
  Block mask = prp_block(key.label_key, block_add(ct.r, 1));
  Block plain;
  for (size_t i = 0; i < kBlockBytes; ++i) plain[i] = mask[i] ^ ct.masked[i];
  EffectiveTuple t;
  unpack_label(plain, key.label_bits, t.label, t.origin);
  t.tiebreak = prp_block(key.label_key, block_add(ct.r, 2));
  t.ctbytes = ct.bytes();
  return t;
}

Ordering compare(const SecretKey& key, const LabelCt& a, const LabelCt& b) {
  return compare(dec_label(key, a), dec_label(key, b));
}

PayloadCt enc_payload(const SecretKey& key, const std::vector<uint8_t>& plain, Rng& rng) {
  PayloadCt ct;
  ct.bytes.resize(12 + plain.size() + 16);
  rng.fill(ct.bytes.data(), 12);
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  if (!ctx) fail(Errc::state, "cipher context allocation failed");
  int len = 0;
  bool ok = EVP_EncryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.payload_key.data(),
                               ct.bytes.data()) == 1;
  if (ok && !plain.empty())
    ok = EVP_EncryptUpdate(ctx, ct.bytes.data() + 12, &len, plain.data(),
                           static_cast<int>(plain.size())) == 1;
  int fin = 0;
  ok = ok && EVP_EncryptFinal_ex(ctx, ct.bytes.data() + 12 + len, &fin) == 1;
  ok = ok && EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, 16,
                                 ct.bytes.data() + 12 + plain.size()) == 1;
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) fail(Errc::state, "payload encryption failed");
  return ct;
}

std::vector<uint8_t> dec_payload(const SecretKey& key, const PayloadCt& ct) {
  if (ct.bytes.size() < 12 + 16) fail(Errc::integrity, "payload ciphertext truncated");
  size_t body = ct.bytes.size() - 12 - 16;
  std::vector<uint8_t> plain(body);
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  if (!ctx) fail(Errc::state, "cipher context allocation failed");
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.payload_key.data(),
                               ct.bytes.data()) == 1;
  if (ok && body)
    ok = EVP_DecryptUpdate(ctx, plain.data(), &len, ct.bytes.data() + 12,
                           static_cast<int>(body)) == 1;
  std::array<uint8_t, 16> tag;
  std::memcpy(tag.data(), ct.bytes.data() + 12 + body, 16);
  ok = ok && EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, 16, tag.data()) == 1;
  int fin = 0;
  bool auth = ok && EVP_DecryptFinal_ex(ctx, plain.data() + len, &fin) == 1;
  EVP_CIPHER_CTX_free(ctx);
  if (!ok) fail(Errc::state, "payload decryption failed");
  if (!auth) fail(Errc::integrity, "payload authentication failed");
  return plain;
}

} // namespace pope
