#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "vprune/corpus.hpp"
#include "vprune/tokenizer.hpp"

using namespace vprune;

TEST(LoadCorpus, TwoLines) {
  const auto ds = parse_corpus(
      "{\"text\":\"check my balance\",\"label\":\"balance\"}\n"
      "{\"text\":\"lost card\",\"label\":\"card_lost\"}\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels(), (std::vector<std::string>{"balance", "card_lost"}));
  EXPECT_EQ(ds.utterances()[1].text, "lost card");
}

TEST(LoadCorpus, MissingLabelCitesLine) {
  try {
    parse_corpus("{\"text\":\"a\",\"label\":\"x\"}\n{\"text\":\"b\"}\n");
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("\"label\""), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  }
}

TEST(LoadCorpus, MalformedJsonCitesLine) {
  try {
    parse_corpus("\n{\"text\":\"a\",\"label\":\"x\"}\n{oops\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, DuplicateLabelsShareOneEntry) {
  const auto ds = parse_corpus(
      "{\"text\":\"a\",\"label\":\"x\"}\n{\"text\":\"b\",\"label\":\"y\"}\n{\"text\":\"c\",\"label\":\"x\"}");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.labels(), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(ds.label_id("x"), 0u);
  EXPECT_EQ(ds.label_id("y"), 1u);
}

TEST(LoadCorpus, WhitespaceOnlyTextRejected) {
  EXPECT_THROW(parse_corpus("{\"text\":\"  \\t \",\"label\":\"x\"}\n"), FormatError);
  EXPECT_THROW(parse_corpus("{\"text\":1,\"label\":\"x\"}\n"), FormatError);
}

TEST(LoadCorpus, SaveLoadRoundTrip) {
  fixtures::TempDir dir;
  Dataset ds;
  ds.add({"hello \"world\"", "greet"});
  ds.add({"naïve café", "food"});
  save_corpus(ds, dir / "c.jsonl");
  EXPECT_EQ(load_corpus(dir / "c.jsonl"), ds);
}

TEST(CountFrequencies, EmptyDataset) {
  const auto v = fixtures::make_vocab({"play"});
  const auto f = count_token_frequencies(Dataset{}, v);
  EXPECT_EQ(f.total(), 0u);
  for (auto c : f.counts()) EXPECT_EQ(c, 0u);
}

TEST(CountFrequencies, RepeatedWord) {
  const auto v = fixtures::make_vocab({"play"});
  Dataset ds;
  ds.add({"play play", "x"});
  const auto f = count_token_frequencies(ds, v);
  EXPECT_EQ(f.count(*v.find("play")), 2u);
  EXPECT_EQ(f.total(), 2u);
}

TEST(CountFrequencies, AllOovCountsNothing) {
  const auto v = fixtures::make_vocab({"play"});
  Dataset ds;
  ds.add({"zzz qqq", "x"});
  const auto f = count_token_frequencies(ds, v);
  EXPECT_EQ(f.total(), 0u);
  EXPECT_EQ(f.count(v.unk_id()), 0u);
}

TEST(CountFrequencies, TotalMatchesTokenizerOutput) {
  const auto world = fixtures::synthetic_world(50, 2, 4);
  auto ds = fixtures::synthetic_corpus(world.words, 300, 5);
  ds.add({"unknownword w1 !!", "intent_0"});
  std::uint64_t expected = 0;
  for (const auto& u : ds.utterances())
    for (TokenId id : tokenize(world.vocab, u.text)) expected += !world.vocab.is_special(id);
  const auto f = count_token_frequencies(ds, world.vocab);
  EXPECT_EQ(f.total(), expected);
  std::uint64_t sum = 0;
  for (auto c : f.counts()) sum += c;
  EXPECT_EQ(sum, f.total());
}

TEST(CountFrequencies, OrderIndependent) {
  const auto world = fixtures::synthetic_world(80, 2, 6);
  const auto ds = fixtures::synthetic_corpus(world.words, 500, 7);
  auto utts = ds.utterances();
  std::mt19937 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(utts.begin(), utts.end(), rng);
    EXPECT_EQ(count_token_frequencies(Dataset(utts), world.vocab), count_token_frequencies(ds, world.vocab));
  }
}

TEST(CountFrequencies, ParallelEqualsSequential) {
  const auto world = fixtures::synthetic_world(120, 2, 9);
  const auto ds = fixtures::synthetic_corpus(world.words, 2000, 10);
  const auto seq = count_token_frequencies(ds, world.vocab, 1);
  for (std::size_t w : {2u, 3u, 8u, 64u}) EXPECT_EQ(count_token_frequencies(ds, world.vocab, w), seq) << w;
}

TEST(CountFrequencies, MoreWorkersThanUtterances) {
  const auto v = fixtures::make_vocab({"a", "b"});
  Dataset ds;
  ds.add({"a b a", "x"});
  const auto f = count_token_frequencies(ds, v, 16);
  EXPECT_EQ(f.count(*v.find("a")), 2u);
  EXPECT_EQ(f.total(), 3u);
}
