#include "pope/client.hpp"

#include <algorithm>

#include "pope/error.hpp"

namespace pope {

namespace {

void check_cap(size_t n, uint32_t cap) {
  if (cap && n > cap) fail(Errc::capacity, "request exceeds client working-set capacity");
}

} // namespace

std::vector<EffectiveTuple> decrypt_all(const SecretKey& key, const std::vector<LabelCt>& cts) {
  std::vector<EffectiveTuple> out;
  out.reserve(cts.size());
  for (const auto& ct : cts) out.push_back(dec_label(key, ct));
  return out;
}

std::vector<LabelCt> sort_pivots(const SecretKey& key, const std::vector<LabelCt>& labels,
                                 uint32_t cap) {
  check_cap(labels.size(), cap);
  std::vector<EffectiveTuple> ts = decrypt_all(key, labels);
  std::sort(ts.begin(), ts.end());
  std::vector<LabelCt> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(LabelCt::from_bytes(t.ctbytes.data()));
  return out;
}

uint32_t classify_one(const EffectiveTuple& x, const std::vector<EffectiveTuple>& pivots) {
  // first pivot with x ≤ pivot; past-the-end means the open right bucket
  auto it = std::lower_bound(pivots.begin(), pivots.end(), x);
  return uint32_t(it - pivots.begin()) + 1;
}

std::vector<uint32_t> classify_stream(const SecretKey& key,
                                      const std::vector<LabelCt>& sorted_pivots,
                                      const std::vector<LabelCt>& stream, uint32_t cap) {
  check_cap(sorted_pivots.size(), cap);
  std::vector<EffectiveTuple> pivots = decrypt_all(key, sorted_pivots);
  for (size_t i = 1; i < pivots.size(); ++i)
    if (!(pivots[i - 1] < pivots[i])) fail(Errc::protocol, "pivots not sorted");
  std::vector<uint32_t> out;
  out.reserve(stream.size());
  for (const auto& ct : stream) out.push_back(classify_one(dec_label(key, ct), pivots));
  return out;
}

uint32_t locate_endpoint(const SecretKey& key, const std::vector<LabelCt>& sorted_pivots,
                         const LabelCt& endpoint, uint32_t cap) {
  check_cap(sorted_pivots.size(), cap);
  std::vector<EffectiveTuple> pivots = decrypt_all(key, sorted_pivots);
  return classify_one(dec_label(key, endpoint), pivots);
}

} // namespace pope
