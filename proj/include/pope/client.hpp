#pragma once

#include <cstdint>
#include <vector>

#include "pope/codec.hpp"

namespace pope {

// The client's entire persistent state is the key; everything here is a pure
// function of (key, request). Capacity checks enforce the ≤ cap working-set
// contract; cap = 0 means uncapped (trusted local use).

// sorted by effective tuple; same multiset
std::vector<LabelCt> sort_pivots(const SecretKey& key, const std::vector<LabelCt>& labels,
                                 uint32_t cap = 0);

// 1-based index i per streamed ciphertext: pivot_{i−1} < x ≤ pivot_i
std::vector<uint32_t> classify_stream(const SecretKey& key,
                                      const std::vector<LabelCt>& sorted_pivots,
                                      const std::vector<LabelCt>& stream, uint32_t cap = 0);

uint32_t locate_endpoint(const SecretKey& key, const std::vector<LabelCt>& sorted_pivots,
                         const LabelCt& endpoint, uint32_t cap = 0);

// decrypted pivots, one item at a time (the streaming inner loop)
uint32_t classify_one(const EffectiveTuple& x, const std::vector<EffectiveTuple>& pivots);

std::vector<EffectiveTuple> decrypt_all(const SecretKey& key, const std::vector<LabelCt>& cts);

} // namespace pope
