#include "rankft/rouge.hpp"

#include <bit>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace rankft {

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // `b` is now the shorter sequence; its positions are the bit columns.
  const std::size_t m = b.size();
  if (m == 0) return 0;
  const std::size_t words = (m + 63) / 64;

  std::unordered_map<std::string_view, std::vector<std::uint64_t>> match;
  for (std::size_t i = 0; i < m; ++i) {
    auto& mask = match[b[i]];
    if (mask.empty()) mask.assign(words, 0);
    mask[i / 64] |= std::uint64_t{1} << (i % 64);
  }

  // V holds ones where the LCS row has not advanced yet.
  std::vector<std::uint64_t> v(words, ~std::uint64_t{0});
  for (const auto& tok : a) {
    const auto it = match.find(tok);
    if (it == match.end()) continue;
    const auto& mask = it->second;
    std::uint64_t carry = 0;
    for (std::size_t w = 0; w < words; ++w) {
      const std::uint64_t u = v[w] & mask[w];
      const std::uint64_t sum = v[w] + u;
      const std::uint64_t c1 = sum < v[w] ? 1 : 0;
      const std::uint64_t total = sum + carry;
      const std::uint64_t c2 = total < sum ? 1 : 0;
      v[w] = total | (v[w] & ~mask[w]);
      carry = c1 | c2;
    }
  }

  std::size_t ones = 0;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t word = v[w];
    if (w == words - 1 && m % 64 != 0) word &= (std::uint64_t{1} << (m % 64)) - 1;
    ones += static_cast<std::size_t>(std::popcount(word));
  }
  return m - ones;
}

double rouge_l(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t lcs = lcs_length(a, b);
  if (lcs == 0) return 0.0;
  const double precision = static_cast<double>(lcs) / static_cast<double>(b.size());
  const double recall = static_cast<double>(lcs) / static_cast<double>(a.size());
  return 2.0 * precision * recall / (precision + recall);
}

double rouge_l(std::string_view a, std::string_view b, const Tokenizer& tok) {
  const auto ta = tok.tokenize(a);
  const auto tb = tok.tokenize(b);
  return rouge_l(ta, tb);
}

}  // namespace rankft
