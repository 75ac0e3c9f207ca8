#include <gtest/gtest.h>

#include <random>

#include "vprune/report.hpp"

using namespace vprune;

TEST(CountParams, BertBase) {
  const auto b = count_params(bert_base());
  EXPECT_EQ(b.token_embeddings, 23'440'896u);
  EXPECT_EQ(b.transformer, 85'054'464u);
  EXPECT_EQ(b.position_embeddings, 512u * 768u);
  EXPECT_EQ(b.type_embeddings, 2u * 768u);
  EXPECT_EQ(b.pca_inverse_map, 0u);
  EXPECT_EQ(b.classifier, 0u);
  EXPECT_EQ(b.total(), 23'440'896u + 85'054'464u + 393'216u + 1'536u);
}

TEST(CountParams, LayerFormulaForDefaultMultiplier) {
  for (std::uint64_t h : {1u, 64u, 768u, 1024u}) EXPECT_EQ(encoder_layer_params(h, 4), 12 * h * h + 13 * h);
}

TEST(CountParams, PrunedAndKeepFraction) {
  const auto b = count_params(compressed(bert_base(), 2000, 400, 0.05));
  EXPECT_EQ(b.token_embeddings, 800'000u);
  EXPECT_EQ(b.transformer, 4'252'723u);
  EXPECT_EQ(b.pca_inverse_map, 307'968u);
}

TEST(CountParams, Classifier) {
  auto cfg = bert_base();
  cfg.num_classes = 77;
  EXPECT_EQ(count_params(cfg).classifier, 77u * 768u + 77u);
}

TEST(CountParams, HalfPrunedConfigRejected) {
  auto cfg = bert_base();
  cfg.pruned_dim = 400;
  EXPECT_THROW(count_params(cfg), ConfigError);
  cfg = bert_base();
  cfg.pruned_vocab = 2000;
  EXPECT_THROW(count_params(cfg), ConfigError);
  cfg = bert_base();
  cfg.transformer_keep_fraction = 0.0;
  EXPECT_THROW(count_params(cfg), ConfigError);
  cfg = bert_base();
  cfg.layers = 0;
  EXPECT_THROW(count_params(cfg), ConfigError);
}

TEST(CompressionReport, BertBaseDefaults) {
  const auto r = compression_report(count_params(bert_base()), count_params(compressed(bert_base(), 2000, 400, 0.05)));
  const auto& vocab = r.entry("vocabulary");
  EXPECT_DOUBLE_EQ(*vocab.kept_pct, 3.41);
  EXPECT_DOUBLE_EQ(*vocab.shrink_factor, 29.3);
  EXPECT_EQ(r.entry("total").after, r.after.total());
}

TEST(CompressionReport, IdentityIsHundredPercent) {
  auto cfg = compressed(bert_base(), 2000, 400, 0.3);
  cfg.num_classes = 5;
  const auto b = count_params(cfg);
  const auto r = compression_report(b, b);
  for (const auto& e : r.entries) {
    ASSERT_TRUE(e.kept_pct) << e.name;
    EXPECT_DOUBLE_EQ(*e.kept_pct, 100.0) << e.name;
    EXPECT_DOUBLE_EQ(*e.shrink_factor, 1.0) << e.name;
  }
}

TEST(CompressionReport, EmptyGroupsHaveNoRatio) {
  const auto r = compression_report(count_params(bert_base()), count_params(compressed(bert_base(), 10, 10, 1.0)));
  EXPECT_FALSE(r.entry("pca_inverse_map").kept_pct.has_value());
  EXPECT_FALSE(r.entry("classifier").shrink_factor.has_value());
  EXPECT_THROW(compression_report(ParamBreakdown{}, ParamBreakdown{}), ConfigError);
}

TEST(CompressionReport, ScaleInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> count(1, 5'000'000), factor(2, 1000);
  for (int trial = 0; trial < 100; ++trial) {
    ParamBreakdown a{count(rng), count(rng), count(rng), count(rng), count(rng), count(rng)};
    ParamBreakdown b{count(rng), count(rng), count(rng), count(rng), count(rng), count(rng)};
    const auto k = factor(rng);
    ParamBreakdown ak{a.token_embeddings * k, a.position_embeddings * k, a.type_embeddings * k,
                      a.transformer * k,      a.pca_inverse_map * k,     a.classifier * k};
    ParamBreakdown bk{b.token_embeddings * k, b.position_embeddings * k, b.type_embeddings * k,
                      b.transformer * k,      b.pca_inverse_map * k,     b.classifier * k};
    const auto r1 = compression_report(a, b), r2 = compression_report(ak, bk);
    for (std::size_t i = 0; i < r1.entries.size(); ++i) {
      EXPECT_EQ(r1.entries[i].kept_pct, r2.entries[i].kept_pct) << r1.entries[i].name;
      EXPECT_EQ(r1.entries[i].shrink_factor, r2.entries[i].shrink_factor) << r1.entries[i].name;
    }
  }
}

TEST(ReportJson, Schema) {
  const auto r = compression_report(count_params(bert_base()), count_params(compressed(bert_base(), 2000, 400, 0.05)));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("groups_before").at("token_embeddings").get<std::uint64_t>(), 23'440'896u);
  EXPECT_EQ(j.at("groups_after").at("transformer").get<std::uint64_t>(), 4'252'723u);
  EXPECT_DOUBLE_EQ(j.at("ratios_pct").at("vocabulary").get<double>(), 3.41);
  EXPECT_DOUBLE_EQ(j.at("shrink_factors").at("vocabulary").get<double>(), 29.3);
  EXPECT_NE(j.dump().find("3.41"), std::string::npos);
  EXPECT_NE(format_table(r).find("vocabulary"), std::string::npos);
}

TEST(ModelConfigJson, ParsesAndValidates) {
  const auto cfg = model_config_from_json(nlohmann::json::parse(
      R"({"vocab_size":100,"emb_dim":8,"layers":2,"hidden":8,"pruned_vocab":10,"pruned_dim":4,
          "transformer_keep_fraction":0.5})"));
  EXPECT_EQ(cfg.vocab_size, 100u);
  EXPECT_EQ(*cfg.pruned_dim, 4u);
  EXPECT_THROW(model_config_from_json(nlohmann::json::parse(R"({"pruned_dim":4})")), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json::parse(R"({"layers":"x"})")), ConfigError);
}
