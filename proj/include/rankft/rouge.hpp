#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "rankft/tokenizer.hpp"

namespace rankft {

// Length of the longest common subsequence of two token sequences.
// Bit-parallel over the shorter sequence: O(|a| * |b| / 64).
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// ROUGE-L F1 between token sequences. With L = LCS(a, b), P = L/|b| and
// R = L/|a|, returns 2PR / (P + R), or 0 when L = 0 (which covers empty input).
double rouge_l(std::span<const std::string> a, std::span<const std::string> b);

// Convenience overload that tokenizes both texts first.
double rouge_l(std::string_view a, std::string_view b, const Tokenizer& tok = Tokenizer{});

}  // namespace rankft
