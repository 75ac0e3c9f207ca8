#include <gtest/gtest.h>

#include <random>
#include <string>
#include <thread>

#include "fixtures.hpp"
#include "vprune/tokenizer.hpp"
#include "vprune/vocabulary.hpp"
#include "vprune/vpem.hpp"

using namespace vprune;

namespace {

TokenSequence ids_of(const Vocabulary& v, std::initializer_list<const char*> tokens) {
  TokenSequence out;
  for (const char* t : tokens) out.push_back(*v.find(t));
  return out;
}

}  // namespace

// --- load_vocab -------------------------------------------------------------

TEST(Vocab, SpecialsOnly) {
  const auto v = parse_vocab("[PAD]\n[UNK]\n[CLS]\n[SEP]");
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.special_ids(), (std::vector<TokenId>{0, 1, 2, 3}));
  EXPECT_EQ(v.unk_id(), 1u);
}

TEST(Vocab, TrailingNewlineAndCrlf) {
  const auto v = parse_vocab("[UNK]\r\nplay\r\n");
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.token(1), "play");
}

TEST(Vocab, DuplicateTokenNamesBothLines) {
  const std::string text = "[PAD]\n[UNK]\n[CLS]\n[SEP]\nplay\nx\ny\nz\nplay\n";
  try {
    parse_vocab(text);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lines 5 and 9"), std::string::npos) << msg;
  }
}

TEST(Vocab, MissingUnkIsFormatError) { EXPECT_THROW(parse_vocab("[PAD]\nplay\n"), FormatError); }

TEST(Vocab, InvalidUtf8IsDecodeError) {
  EXPECT_THROW(parse_vocab("[UNK]\npl\xff" "ay\n"), DecodeError);
  EXPECT_THROW(parse_vocab("[UNK]\n\xc0\xaf\n"), DecodeError);  // overlong
}

TEST(Vocab, EmptyLineRejected) { EXPECT_THROW(parse_vocab("[UNK]\n\nplay\n"), FormatError); }

TEST(Vocab, LoadFromFile) {
  fixtures::TempDir dir;
  const auto p = dir.write("vocab.txt", "[PAD]\n[UNK]\nplay\n##ing\n");
  const auto v = load_vocab(p);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(*v.find("##ing"), 3u);
  EXPECT_THROW(load_vocab(dir / "missing.txt"), IoError);
}

// --- VPEM -------------------------------------------------------------------

TEST(Vpem, RoundTripSmallMatrix) {
  fixtures::TempDir dir;
  const MatrixF m{{1, 2}, {3, 4}, {5, 6}};
  save_embeddings(m, dir / "m.vpem");
  EXPECT_EQ(load_embeddings(dir / "m.vpem"), m);
}

TEST(Vpem, LayoutIsLittleEndian) {
  const auto bytes = encode_vpem(MatrixF{{1.0f}});
  ASSERT_EQ(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 4), "VPEM");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(12, 4), std::string("\x00\x00\x80\x3f", 4));  // 1.0f
}

TEST(Vpem, BertBasePayloadSize) { EXPECT_EQ(vpem_payload_bytes(30522, 768), 93'763'584u); }

TEST(Vpem, TruncatedMidRowIsSizeMismatch) {
  auto bytes = encode_vpem(MatrixF{{1, 2}, {3, 4}});
  bytes.resize(bytes.size() - 4);
  try {
    decode_vpem(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("size mismatch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("byte offset 12"), std::string::npos);
  }
}

TEST(Vpem, BadMagic) {
  auto bytes = encode_vpem(MatrixF{{1}});
  bytes[0] = 'X';
  EXPECT_THROW(decode_vpem(bytes), FormatError);
  EXPECT_THROW(decode_vpem("VPE"), FormatError);
}

TEST(Vpem, NonFiniteReportsOffset) {
  MatrixF m{{1, 2}, {3, 4}};
  auto bytes = encode_vpem(m);
  // overwrite element 2 (row 1, col 0) with +inf
  bytes.replace(12 + 2 * 4, 4, std::string("\x00\x00\x80\x7f", 4));
  try {
    decode_vpem(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 20"), std::string::npos) << e.what();
  }
}

TEST(Vpem, RandomMatricesRoundTripBitExact) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> dim(1, 17);
  std::uniform_real_distribution<float> val(-1e6f, 1e6f);
  for (int trial = 0; trial < 25; ++trial) {
    MatrixF m(dim(rng), dim(rng));
    for (float& v : m.data()) v = val(rng);
    const auto bytes = encode_vpem(m);
    EXPECT_EQ(decode_vpem(bytes), m);
    EXPECT_EQ(encode_vpem(decode_vpem(bytes)), bytes);
  }
}

// --- tokenize ---------------------------------------------------------------

TEST(Tokenize, WholeWordHit) {
  const auto v = fixtures::make_vocab({"play", "##ing"});
  EXPECT_EQ(tokenize(v, "play"), ids_of(v, {"play"}));
}

TEST(Tokenize, GreedyPrefersLongestPrefix) {
  const auto v = fixtures::make_vocab({"play", "##ing", "pla"});
  EXPECT_EQ(tokenize(v, "playing"), ids_of(v, {"play", "##ing"}));
}

TEST(Tokenize, UnmatchedWordIsSingleUnk) {
  const auto v = fixtures::make_vocab({"play", "##ing"});
  EXPECT_EQ(tokenize(v, "qz"), ids_of(v, {"[UNK]"}));
  // "play" matches but "##s" does not: the whole word degrades
  EXPECT_EQ(tokenize(v, "plays"), ids_of(v, {"[UNK]"}));
}

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  const auto v = fixtures::make_vocab({"play", "##ing", "!", ",", "now"});
  EXPECT_EQ(tokenize(v, "  PLAYING,now!\t"), ids_of(v, {"play", "##ing", ",", "now", "!"}));
  EXPECT_TRUE(tokenize(v, "   \n ").empty());
}

TEST(Tokenize, UnicodeWhitespaceAndCase) {
  const auto v = fixtures::make_vocab({"café", "ok"});
  EXPECT_EQ(tokenize(v, "CAFÉ ok"), ids_of(v, {"café", "ok"}));
}

TEST(Tokenize, MultiByteContinuationPieces) {
  const auto v = fixtures::make_vocab({"na", "##ï", "##ve"});
  EXPECT_EQ(tokenize(v, "naïve"), ids_of(v, {"na", "##ï", "##ve"}));
}

TEST(Tokenize, MalformedBytesDegradeToUnk) {
  const auto v = fixtures::make_vocab({"ok"});
  EXPECT_EQ(tokenize(v, "ok \xff\xfe ok"), ids_of(v, {"ok", "[UNK]", "ok"}));
}

TEST(Tokenize, EveryIdInRangeOnRandomText) {
  const auto v = fixtures::make_vocab({"a", "##b", "ab", "c", "##c", "!", "é"});
  std::mt19937 rng(3);
  const std::string alphabet[] = {"a", "b", "c", " ", "!", "é", "Z", "\xff", "\t"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    for (int i = 0; i < 20; ++i) text += alphabet[rng() % std::size(alphabet)];
    for (TokenId id : tokenize(v, text)) EXPECT_LT(id, v.size());
  }
}

TEST(Tokenize, StandaloneTokenMapsToItself) {
  const auto v = fixtures::make_vocab({"card", "balance", "pin", "##s", "top"});
  for (const char* w : {"card", "balance", "pin", "top"}) EXPECT_EQ(tokenize(v, w), ids_of(v, {w}));
}

TEST(Tokenize, DeterministicAcrossThreads) {
  const auto world = fixtures::synthetic_world(200, 2, 1);
  const auto ds = fixtures::synthetic_corpus(world.words, 200, 2);
  std::vector<TokenSequence> expected;
  for (const auto& u : ds.utterances()) expected.push_back(tokenize(world.vocab, u.text));
  std::vector<std::vector<TokenSequence>> got(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (const auto& u : ds.utterances()) got[t].push_back(tokenize(world.vocab, u.text));
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& g : got) EXPECT_EQ(g, expected);
}
