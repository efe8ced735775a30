#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rankft {

using Tokens = std::vector<std::string>;

// A named tokenization convention. "whitespace" splits on ASCII whitespace,
// "char" yields one token per UTF-8 code point. Any other id (for example
// "teacher:text-davinci-003") names a tokenizer that only a remote backend
// can apply; token counts under it are recorded but cannot be recomputed.
class Tokenizer {
 public:
  static constexpr std::string_view kWhitespace = "whitespace";
  static constexpr std::string_view kChar = "char";

  explicit Tokenizer(std::string id = std::string(kWhitespace));

  const std::string& id() const noexcept { return id_; }
  bool is_local() const noexcept { return kind_ != Kind::external; }

  Tokens tokenize(std::string_view text) const;
  std::size_t count(std::string_view text) const;

 private:
  enum class Kind { whitespace, character, external };
  std::string id_;
  Kind kind_;
};

Tokens whitespace_tokens(std::string_view text);
std::string join_tokens(const Tokens& tokens, std::string_view sep = " ");

}  // namespace rankft
