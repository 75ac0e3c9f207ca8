#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vprune/utf8.hpp"
#include "vprune/vocabulary.hpp"

namespace vprune {

inline constexpr std::string_view kContinuationPrefix = "##";

// Lowercases and splits text into words: whitespace separates words and every
// punctuation character is a word of its own.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (const auto& cp : utf8::decode(text)) {
    if (utf8::is_space(cp.value)) {
      flush();
    } else if (utf8::is_punct(cp.value)) {
      flush();
      utf8::append(current, cp.value);
      flush();
    } else if (cp.value == utf8::kReplacement) {
      // keep malformed bytes as-is so they can only ever match nothing
      current.append(text.substr(cp.offset, cp.length));
    } else {
      utf8::append(current, utf8::to_lower(cp.value));
    }
  }
  flush();
  return words;
}

// Greedy longest-match segmentation of one (already normalized) word.
// Appends to `out`; a word with any unmatched position becomes a single [UNK].
inline void segment_word(const Vocabulary& vocab, std::string_view word, TokenSequence& out) {
  // byte offsets of code point boundaries, so pieces never split a code point
  std::vector<std::size_t> bounds;
  for (const auto& cp : utf8::decode(word)) bounds.push_back(cp.offset);
  bounds.push_back(word.size());

  const std::size_t first_out = out.size();
  std::string piece;
  std::size_t start = 0;  // index into bounds
  while (start + 1 < bounds.size()) {
    bool matched = false;
    for (std::size_t end = bounds.size() - 1; end > start; --end) {
      const std::size_t len = bounds[end] - bounds[start];
      const std::size_t prefix = start > 0 ? kContinuationPrefix.size() : 0;
      if (len + prefix > vocab.max_token_bytes()) continue;
      piece.assign(start > 0 ? kContinuationPrefix : std::string_view{});
      piece.append(word.substr(bounds[start], len));
      if (auto id = vocab.find(piece)) {
        out.push_back(*id);
        start = end;
        matched = true;
        break;
      }
    }
    if (!matched) {
      out.resize(first_out);
      out.push_back(vocab.unk_id());
      return;
    }
  }
}

inline TokenSequence tokenize(const Vocabulary& vocab, std::string_view text) {
  TokenSequence ids;
  for (const auto& word : split_words(text)) segment_word(vocab, word, ids);
  return ids;
}

}  // namespace vprune
