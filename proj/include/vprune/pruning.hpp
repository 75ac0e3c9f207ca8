#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "vprune/corpus.hpp"
#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/matrix.hpp"
#include "vprune/parallel.hpp"
#include "vprune/vocabulary.hpp"

namespace vprune {

struct KeptToken {
  TokenId original_id;
  std::string token;

  friend bool operator==(const KeptToken&, const KeptToken&) = default;
};

// Task vocabulary: special tokens (ascending id) followed by content tokens in
// descending frequency, ties by ascending original id.
struct PrunedVocabulary {
  std::vector<KeptToken> kept;

  std::size_t size() const noexcept { return kept.size(); }
  std::vector<std::size_t> original_ids() const {
    std::vector<std::size_t> ids;
    ids.reserve(kept.size());
    for (const auto& k : kept) ids.push_back(k.original_id);
    return ids;
  }

  friend bool operator==(const PrunedVocabulary&, const PrunedVocabulary&) = default;
};

// Dense map from every original token id to an index into PrunedVocabulary::kept.
struct RemapTable {
  std::vector<std::uint32_t> map;

  friend bool operator==(const RemapTable&, const RemapTable&) = default;
};

inline PrunedVocabulary select_top_k(const FrequencyTable& freq, const Vocabulary& vocab, std::size_t k) {
  if (k < 1) throw ConfigError("K must be at least 1");
  if (freq.vocab_size() != vocab.size()) throw DimensionError("frequency table does not match vocabulary");

  PrunedVocabulary out;
  for (TokenId id : vocab.special_ids()) out.kept.push_back({id, vocab.token(id)});

  std::vector<TokenId> content;
  for (TokenId id = 0; id < vocab.size(); ++id) {
    if (!vocab.is_special(id) && freq.count(id) > 0) content.push_back(id);
  }
  const auto by_rank = [&](TokenId a, TokenId b) {
    const auto ca = freq.count(a), cb = freq.count(b);
    return ca != cb ? ca > cb : a < b;
  };
  const std::size_t keep = std::min(k, content.size());
  std::partial_sort(content.begin(), content.begin() + static_cast<std::ptrdiff_t>(keep), content.end(), by_rank);
  for (std::size_t i = 0; i < keep; ++i) out.kept.push_back({content[i], vocab.token(content[i])});
  return out;
}

namespace detail {

// Squared Euclidean distance, accumulated left to right in double. Returns
// early with a value > `bound` once the partial sum exceeds it; the partial
// sums are non-decreasing, so that never changes which candidate wins.
inline double squared_distance_bounded(std::span<const float> a, std::span<const float> b, double bound) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
    if (acc > bound) return acc;
  }
  return acc;
}

}  // namespace detail

// For each original token, the kept token nearest in Euclidean distance over
// the full embedding rows; ties go to the smallest original id. Kept tokens
// map to themselves. Work is sharded over original ids across `workers`.
inline RemapTable build_remap(const Vocabulary& vocab, const PrunedVocabulary& pruned,
                              const EmbeddingMatrix& emb, std::size_t workers = 1) {
  if (emb.rows() != vocab.size()) {
    throw DimensionError("embedding rows (" + std::to_string(emb.rows()) + ") != vocabulary size (" +
                         std::to_string(vocab.size()) + ")");
  }
  if (pruned.kept.empty()) throw ConfigError("pruned vocabulary is empty");

  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> self_index(vocab.size(), kNone);
  for (std::size_t j = 0; j < pruned.kept.size(); ++j) {
    const auto id = pruned.kept[j].original_id;
    if (id >= vocab.size()) throw DimensionError("kept token id out of range");
    self_index[id] = static_cast<std::uint32_t>(j);
  }

  // candidates in ascending original id, so the first strict minimum is the tie winner
  std::vector<std::uint32_t> order(pruned.kept.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return pruned.kept[a].original_id < pruned.kept[b].original_id; });

  RemapTable table{std::vector<std::uint32_t>(vocab.size())};
  for_each_shard(vocab.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      if (self_index[t] != kNone) {
        table.map[t] = self_index[t];
        continue;
      }
      const auto row = emb.row(t);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_j = order.front();
      for (auto j : order) {
        const double d = detail::squared_distance_bounded(row, emb.row(pruned.kept[j].original_id), best);
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      table.map[t] = best_j;
    }
  });
  return table;
}

inline TokenSequence remap_tokens(const RemapTable& table, const TokenSequence& seq) {
  TokenSequence out;
  out.reserve(seq.size());
  for (TokenId id : seq) {
    if (id >= table.map.size()) {
      throw DimensionError("token id " + std::to_string(id) + " out of range for remap of size " +
                           std::to_string(table.map.size()));
    }
    out.push_back(table.map[id]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remap artifact: {"kept": [[original_id, "token"], ...], "map": [int, ...]}
// ---------------------------------------------------------------------------

inline std::string encode_remap(const PrunedVocabulary& pruned, const RemapTable& table) {
  nlohmann::ordered_json doc;
  auto kept = nlohmann::json::array();
  for (const auto& k : pruned.kept) kept.push_back({k.original_id, k.token});
  doc["kept"] = std::move(kept);
  doc["map"] = table.map;
  return doc.dump() + "\n";
}

struct RemapArtifact {
  PrunedVocabulary pruned;
  RemapTable table;
};

inline RemapArtifact decode_remap(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("remap: malformed JSON: ") + e.what());
  }
  RemapArtifact out;
  try {
    for (const auto& entry : doc.at("kept")) {
      if (!entry.is_array() || entry.size() != 2) throw FormatError("remap: kept entries must be [id, token]");
      out.pruned.kept.push_back({entry[0].get<TokenId>(), entry[1].get<std::string>()});
    }
    out.table.map = doc.at("map").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("remap: ") + e.what());
  }
  for (auto m : out.table.map) {
    if (m >= out.pruned.kept.size()) throw FormatError("remap: map entry " + std::to_string(m) + " out of range");
  }
  return out;
}

inline void save_remap(const PrunedVocabulary& pruned, const RemapTable& table, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_remap(pruned, table));
}

inline RemapArtifact load_remap(const std::filesystem::path& path) {
  try {
    return decode_remap(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vprune
