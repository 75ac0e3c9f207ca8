#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vprune/corpus.hpp"
#include "vprune/distill.hpp"
#include "vprune/io.hpp"
#include "vprune/matrix.hpp"
#include "vprune/pca.hpp"
#include "vprune/pruning.hpp"
#include "vprune/vocabulary.hpp"

namespace fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "vprune") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& bytes) const {
    auto p = path_ / name;
    vprune::io::write_file_atomic(p, bytes);
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> specials() { return {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}; }

inline vprune::Vocabulary make_vocab(std::vector<std::string> content) {
  auto tokens = specials();
  tokens.insert(tokens.end(), content.begin(), content.end());
  return vprune::Vocabulary(std::move(tokens));
}

// Synthetic vocabulary "w0".."w{n-1}" after the specials, with Gaussian embeddings.
struct SyntheticWorld {
  vprune::Vocabulary vocab;
  vprune::EmbeddingMatrix emb;
  std::vector<std::string> words;
};

inline SyntheticWorld synthetic_world(std::size_t n_words, std::size_t dim, std::uint64_t seed) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n_words; ++i) words.push_back("w" + std::to_string(i));
  auto vocab = make_vocab(words);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  vprune::EmbeddingMatrix emb(vocab.size(), dim);
  for (float& v : emb.data()) v = normal(rng);
  return {std::move(vocab), std::move(emb), std::move(words)};
}

// Utterances of 2..6 random words with a Zipf-ish word distribution.
inline vprune::Dataset synthetic_corpus(const std::vector<std::string>& words, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  for (std::size_t i = 0; i < words.size(); ++i) weights.push_back(1.0 / static_cast<double>(i + 1));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uniform_int_distribution<int> len(2, 6);
  std::uniform_int_distribution<int> label(0, 3);
  vprune::Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const int l = len(rng);
    for (int k = 0; k < l; ++k) {
      if (k) text += ' ';
      text += words[pick(rng)];
    }
    ds.add({text, "intent_" + std::to_string(label(rng))});
  }
  return ds;
}

// Two intents over disjoint word pools; word embeddings carry a class offset
// along a hidden direction. The teacher is linear in the mean original
// embedding and only points with a clear margin are kept.
struct DeskTask {
  vprune::Vocabulary vocab;
  vprune::EmbeddingMatrix emb;
  vprune::Dataset train, test;
  vprune::MatrixD train_logits, test_logits;
};

inline DeskTask desk_task(std::uint64_t seed) {
  constexpr std::size_t kWords = 600, kDim = 768;
  std::mt19937_64 rng(seed);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < kWords; ++i) words.push_back("w" + std::to_string(i));
  auto vocab = fixtures::make_vocab(words);

  std::vector<double> u(kDim);
  for (auto& v : u) v = (rng() & 1) ? 1.0 : -1.0;
  std::normal_distribution<float> noise(0.0f, 0.05f);
  vprune::EmbeddingMatrix emb(vocab.size(), kDim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const double sign = i < 4 ? 0.0 : (i - 4 < kWords / 2 ? 1.0 : -1.0);
    for (std::size_t j = 0; j < kDim; ++j) emb(i, j) = noise(rng) + static_cast<float>(0.02 * sign * u[j]);
  }

  DeskTask task{std::move(vocab), std::move(emb), {}, {}, {}, {}};
  const auto score = [&](const std::vector<std::size_t>& ids) {
    double s = 0;
    for (auto id : ids)
      for (std::size_t j = 0; j < kDim; ++j) s += u[j] * task.emb(id + 4, j);
    return s / static_cast<double>(ids.size() * kDim);
  };

  auto sample = [&](std::size_t n, vprune::Dataset& ds, vprune::MatrixD& logits) {
    logits = vprune::MatrixD(n, 2);
    std::size_t made = 0;
    while (made < n) {
      const int cls = static_cast<int>(rng() & 1);
      const std::size_t len = 3 + rng() % 6;
      std::vector<std::size_t> ids;
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        // mostly in-pool words, some from the other intent's pool
        const bool own = rng() % 10 < 8;
        const std::size_t pool = (cls == 0) == own ? 0 : kWords / 2;
        ids.push_back(pool + rng() % (kWords / 2));
        text += (t ? " " : "") + words[ids.back()];
      }
      const double s = score(ids);
      if (std::abs(s) < 0.004) continue;  // margin
      const std::size_t label = s > 0 ? 0 : 1;
      logits(made, 0) = 500.0 * s;
      logits(made, 1) = -500.0 * s;
      ds.add({text, label == 0 ? "intent_a" : "intent_b"});
      ++made;
    }
  };
  sample(200, task.train, task.train_logits);
  sample(200, task.test, task.test_logits);
  return task;
}

// The task run through pruning (K = 2000) and PCA (d' = 400), ready to train.
struct DeskPipeline {
  vprune::PrunedVocabulary pruned;
  std::size_t d_prime;
  vprune::EncodedDataset train, test;
  vprune::StudentModel init;
};

inline DeskPipeline desk_pipeline(const DeskTask& task) {
  using namespace vprune;
  const std::vector<std::string> classes{"intent_a", "intent_b"};
  auto pruned = select_top_k(count_token_frequencies(task.train, task.vocab), task.vocab, 2000);
  const auto remap = build_remap(task.vocab, pruned, task.emb);
  const auto kept_rows = select_rows(task.emb, pruned.original_ids());
  const std::size_t d_prime = std::min<std::size_t>({400, kept_rows.rows(), kept_rows.cols()});
  const auto pca = fit_pca(kept_rows, d_prime);
  const auto low = matrix_cast<float>(project(pca, kept_rows));
  return {std::move(pruned), d_prime, encode_dataset(task.train, task.vocab, remap, classes),
          encode_dataset(task.test, task.vocab, remap, classes),
          StudentModel::from_compressed(low, pca, classes.size())};
}

}  // namespace fixtures
