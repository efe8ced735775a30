#include "rankft/tokenizer.hpp"

#include <algorithm>

#include "rankft/errors.hpp"

namespace rankft {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

Tokenizer::Tokenizer(std::string id) : id_(std::move(id)) {
  if (id_ == kWhitespace) {
    kind_ = Kind::whitespace;
  } else if (id_ == kChar) {
    kind_ = Kind::character;
  } else if (!id_.empty()) {
    kind_ = Kind::external;
  } else {
    throw ValidationError("tokenizer", "empty tokenizer id");
  }
}

Tokens Tokenizer::tokenize(std::string_view text) const {
  switch (kind_) {
    case Kind::whitespace:
      return whitespace_tokens(text);
    case Kind::character: {
      Tokens out;
      for (std::size_t i = 0; i < text.size();) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
        len = std::min(len, text.size() - i);
        out.emplace_back(text.substr(i, len));
        i += len;
      }
      return out;
    }
    case Kind::external:
      break;
  }
  throw Error("tokenizer '" + id_ + "' is not available locally");
}

std::size_t Tokenizer::count(std::string_view text) const { return tokenize(text).size(); }

Tokens whitespace_tokens(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string join_tokens(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace rankft
