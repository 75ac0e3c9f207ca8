#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/parallel.hpp"
#include "vprune/tokenizer.hpp"
#include "vprune/vocabulary.hpp"

namespace vprune {

struct Utterance {
  std::string text;
  std::string label;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Labeled utterances. Label ids are positions in labels(), in first-appearance order.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Utterance> utterances) {
    for (auto& u : utterances) add(std::move(u));
  }

  void add(Utterance u) {
    if (trim(u.text).empty()) throw FormatError("utterance text is empty");
    intern_label(u.label);
    utterances_.push_back(std::move(u));
  }

  const std::vector<Utterance>& utterances() const noexcept { return utterances_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return utterances_.size(); }
  bool empty() const noexcept { return utterances_.empty(); }

  std::size_t label_id(const std::string& label) const {
    auto it = label_index_.find(label);
    if (it == label_index_.end()) throw ConfigError("unknown label '" + label + "'");
    return it->second;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.utterances_ == b.utterances_ && a.labels_ == b.labels_;
  }

 private:
  void intern_label(const std::string& label) {
    if (label_index_.contains(label)) return;
    label_index_.emplace(label, labels_.size());
    labels_.push_back(label);
  }

  std::vector<Utterance> utterances_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> label_index_;
};

// JSON-lines, one {"text": ..., "label": ...} object per line. Blank lines are skipped.
inline Dataset parse_corpus(std::string_view text) {
  Dataset ds;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    const auto where = " at line " + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("malformed JSON" + where + ": " + e.what());
    }
    if (!obj.is_object()) throw FormatError("expected a JSON object" + where);
    for (const char* field : {"text", "label"}) {
      auto it = obj.find(field);
      if (it == obj.end()) throw FormatError(std::string("missing field \"") + field + "\"" + where);
      if (!it->is_string()) throw FormatError(std::string("field \"") + field + "\" is not a string" + where);
    }
    Utterance u{obj["text"].get<std::string>(), obj["label"].get<std::string>()};
    if (trim(u.text).empty()) throw FormatError("empty \"text\"" + where);
    ds.add(std::move(u));
  }
  return ds;
}

inline Dataset load_corpus(const std::filesystem::path& path) {
  try {
    return parse_corpus(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string encode_corpus(const Dataset& ds) {
  std::string out;
  for (const auto& u : ds.utterances()) {
    nlohmann::ordered_json obj;
    obj["text"] = u.text;
    obj["label"] = u.label;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_corpus(ds));
}

// Dense per-token occurrence counts over a vocabulary.
class FrequencyTable {
 public:
  explicit FrequencyTable(std::size_t vocab_size) : counts_(vocab_size, 0) {}

  std::uint64_t count(TokenId id) const { return counts_.at(id); }
  std::uint64_t total() const noexcept { return total_; }
  std::size_t vocab_size() const noexcept { return counts_.size(); }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  void add(TokenId id, std::uint64_t n = 1) {
    counts_.at(id) += n;
    total_ += n;
  }

  FrequencyTable& merge(const FrequencyTable& other) {
    if (other.counts_.size() != counts_.size()) throw DimensionError("frequency table size mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    total_ += other.total_;
    return *this;
  }

  friend bool operator==(const FrequencyTable&, const FrequencyTable&) = default;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Counts non-special token occurrences. Utterances are sharded across
// `workers` threads; integer merging makes the result independent of sharding.
inline FrequencyTable count_token_frequencies(const Dataset& dataset, const Vocabulary& vocab,
                                              std::size_t workers = 1) {
  const auto& utts = dataset.utterances();
  std::vector<FrequencyTable> partial(std::max<std::size_t>(workers, 1),
                                      FrequencyTable(vocab.size()));
  for_each_shard(utts.size(), workers, [&](std::size_t shard, std::size_t begin, std::size_t end) {
    auto& table = partial[shard];
    for (std::size_t i = begin; i < end; ++i) {
      for (TokenId id : tokenize(vocab, utts[i].text)) {
        if (!vocab.is_special(id)) table.add(id);
      }
    }
  });
  FrequencyTable result(vocab.size());
  for (const auto& p : partial) result.merge(p);
  return result;
}

}  // namespace vprune
