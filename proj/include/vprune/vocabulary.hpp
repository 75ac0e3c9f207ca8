#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/utf8.hpp"

namespace vprune {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::array<std::string_view, 4> kReservedTokens = {kPadToken, kUnkToken,
                                                                    kClsToken, kSepToken};

// Ordered token list; a token's id is its position. Immutable once built.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
      if (!inserted) {
        throw FormatError("duplicate token '" + tokens_[i] + "' at lines " +
                          std::to_string(it->second + 1) + " and " + std::to_string(i + 1));
      }
      max_token_bytes_ = std::max(max_token_bytes_, tokens_[i].size());
    }
    for (auto reserved : kReservedTokens) {
      if (auto id = find(reserved)) special_ids_.push_back(*id);
    }
    std::sort(special_ids_.begin(), special_ids_.end());
    auto unk = find(kUnkToken);
    if (!unk) throw FormatError("vocabulary has no [UNK] token");
    unk_id_ = *unk;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId unk_id() const noexcept { return unk_id_; }
  // Sorted ascending.
  const std::vector<TokenId>& special_ids() const noexcept { return special_ids_; }
  bool is_special(TokenId id) const {
    return std::binary_search(special_ids_.begin(), special_ids_.end(), id);
  }
  std::size_t max_token_bytes() const noexcept { return max_token_bytes_; }

 private:
  std::vector<std::string> tokens_;
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>> index_;
  std::vector<TokenId> special_ids_;
  TokenId unk_id_ = 0;
  std::size_t max_token_bytes_ = 0;
};

// Parses a vocab file: UTF-8, one token per line, optional trailing newline.
inline Vocabulary parse_vocab(std::string_view text) {
  if (auto bad = utf8::find_invalid(text); bad != std::string_view::npos) {
    throw DecodeError("vocab is not valid UTF-8 at byte offset " + std::to_string(bad));
  }
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      throw FormatError("empty token at line " + std::to_string(tokens.size() + 1));
    }
    tokens.emplace_back(line);
    pos = end + 1;
  }
  return Vocabulary(std::move(tokens));
}

inline Vocabulary load_vocab(const std::filesystem::path& path) {
  return parse_vocab(io::read_file(path));
}

}  // namespace vprune
