#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vprune/error.hpp"

namespace vprune {

struct ModelConfig {
  std::uint64_t vocab_size = 30522;
  std::uint64_t emb_dim = 768;
  std::uint64_t layers = 12;
  std::uint64_t hidden = 768;
  std::uint64_t ffn_multiplier = 4;
  std::uint64_t max_positions = 512;
  std::uint64_t type_vocab = 2;
  std::optional<std::uint64_t> pruned_vocab;
  std::optional<std::uint64_t> pruned_dim;
  double transformer_keep_fraction = 1.0;
  std::optional<std::uint64_t> num_classes;

  void validate() const {
    for (auto [name, v] : {std::pair{"vocab_size", vocab_size}, {"emb_dim", emb_dim}, {"layers", layers},
                           {"hidden", hidden}, {"ffn_multiplier", ffn_multiplier},
                           {"max_positions", max_positions}, {"type_vocab", type_vocab}}) {
      if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    }
    if (pruned_vocab.has_value() != pruned_dim.has_value()) {
      throw ConfigError("pruned_vocab and pruned_dim must be given together");
    }
    if ((pruned_vocab && *pruned_vocab < 1) || (pruned_dim && *pruned_dim < 1)) {
      throw ConfigError("pruned sizes must be >= 1");
    }
    if (num_classes && *num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (!(transformer_keep_fraction > 0.0 && transformer_keep_fraction <= 1.0)) {
      throw ConfigError("transformer_keep_fraction must be in (0, 1]");
    }
  }
};

// BERT-base, uncased.
inline ModelConfig bert_base() { return ModelConfig{}; }

// `base` after vocabulary pruning to k tokens, PCA to d_prime dims and
// keeping `keep_fraction` of the Transformer.
inline ModelConfig compressed(ModelConfig base, std::uint64_t k, std::uint64_t d_prime, double keep_fraction) {
  base.pruned_vocab = k;
  base.pruned_dim = d_prime;
  base.transformer_keep_fraction = keep_fraction;
  return base;
}

inline constexpr std::array<std::string_view, 6> kParamGroups = {
    "token_embeddings", "position_embeddings", "type_embeddings", "transformer", "pca_inverse_map", "classifier"};

struct ParamBreakdown {
  std::uint64_t token_embeddings = 0;
  std::uint64_t position_embeddings = 0;
  std::uint64_t type_embeddings = 0;
  std::uint64_t transformer = 0;
  std::uint64_t pca_inverse_map = 0;
  std::uint64_t classifier = 0;

  std::uint64_t group(std::string_view name) const {
    if (name == "token_embeddings") return token_embeddings;
    if (name == "position_embeddings") return position_embeddings;
    if (name == "type_embeddings") return type_embeddings;
    if (name == "transformer") return transformer;
    if (name == "pca_inverse_map") return pca_inverse_map;
    if (name == "classifier") return classifier;
    throw ConfigError("unknown parameter group '" + std::string(name) + "'");
  }

  std::uint64_t total() const noexcept {
    return token_embeddings + position_embeddings + type_embeddings + transformer + pca_inverse_map + classifier;
  }

  friend bool operator==(const ParamBreakdown&, const ParamBreakdown&) = default;
};

// Per encoder layer: attention Q/K/V/O (4h^2 + 4h), feed-forward
// (2mh^2 + mh + h) and two layer norms (4h). For m = 4 this is 12h^2 + 13h.
inline std::uint64_t encoder_layer_params(std::uint64_t hidden, std::uint64_t ffn_multiplier) {
  const std::uint64_t h = hidden, m = ffn_multiplier;
  return (4 + 2 * m) * h * h + (9 + m) * h;
}

inline ParamBreakdown count_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamBreakdown b;
  const bool pruned = cfg.pruned_vocab.has_value();
  b.token_embeddings = pruned ? *cfg.pruned_vocab * *cfg.pruned_dim : cfg.vocab_size * cfg.emb_dim;
  b.position_embeddings = cfg.max_positions * cfg.emb_dim;
  b.type_embeddings = cfg.type_vocab * cfg.emb_dim;
  const std::uint64_t full = cfg.layers * encoder_layer_params(cfg.hidden, cfg.ffn_multiplier);
  b.transformer = static_cast<std::uint64_t>(std::llround(cfg.transformer_keep_fraction * static_cast<double>(full)));
  b.pca_inverse_map = pruned ? *cfg.pruned_dim * cfg.emb_dim + cfg.emb_dim : 0;
  b.classifier = cfg.num_classes ? *cfg.num_classes * cfg.hidden + *cfg.num_classes : 0;
  return b;
}

inline double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

// One row of the comparison. Ratios are absent when the "before" count is zero.
struct RatioEntry {
  std::string name;
  std::uint64_t before = 0;
  std::uint64_t after = 0;
  std::optional<double> kept_pct;       // after / before * 100, 2 decimals
  std::optional<double> shrink_factor;  // before / after, 1 decimal
};

struct Report {
  ParamBreakdown before;
  ParamBreakdown after;
  // The six groups, then "vocabulary" (token embeddings only) and "total".
  std::vector<RatioEntry> entries;

  const RatioEntry& entry(std::string_view name) const {
    for (const auto& e : entries) {
      if (e.name == name) return e;
    }
    throw ConfigError("no report entry '" + std::string(name) + "'");
  }
};

inline RatioEntry make_ratio(std::string name, std::uint64_t before, std::uint64_t after) {
  RatioEntry e{std::move(name), before, after, std::nullopt, std::nullopt};
  if (before > 0) e.kept_pct = round_to(100.0 * static_cast<double>(after) / static_cast<double>(before), 2);
  if (before > 0 && after > 0) {
    e.shrink_factor = round_to(static_cast<double>(before) / static_cast<double>(after), 1);
  }
  return e;
}

// The vocabulary ratio counts token embeddings only; the PCA inverse map is
// its own group.
inline Report compression_report(const ParamBreakdown& before, const ParamBreakdown& after) {
  if (before.total() == 0) throw ConfigError("'before' model has no parameters");
  Report r{before, after, {}};
  for (auto g : kParamGroups) r.entries.push_back(make_ratio(std::string(g), before.group(g), after.group(g)));
  r.entries.push_back(make_ratio("vocabulary", before.token_embeddings, after.token_embeddings));
  r.entries.push_back(make_ratio("total", before.total(), after.total()));
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    auto get = [&](const char* key, std::uint64_t& field) {
      if (j.contains(key)) field = j.at(key).get<std::uint64_t>();
    };
    auto get_opt = [&](const char* key, std::optional<std::uint64_t>& field) {
      if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::uint64_t>();
    };
    get("vocab_size", c.vocab_size);
    get("emb_dim", c.emb_dim);
    get("layers", c.layers);
    get("hidden", c.hidden);
    get("ffn_multiplier", c.ffn_multiplier);
    get("max_positions", c.max_positions);
    get("type_vocab", c.type_vocab);
    get_opt("pruned_vocab", c.pruned_vocab);
    get_opt("pruned_dim", c.pruned_dim);
    get_opt("num_classes", c.num_classes);
    if (j.contains("transformer_keep_fraction")) {
      c.transformer_keep_fraction = j.at("transformer_keep_fraction").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::ordered_json to_json(const ParamBreakdown& b) {
  nlohmann::ordered_json j;
  for (auto g : kParamGroups) j[std::string(g)] = b.group(g);
  j["total"] = b.total();
  return j;
}

// {"groups_before", "groups_after", "ratios_pct", "shrink_factors"}
inline nlohmann::ordered_json to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["groups_before"] = to_json(r.before);
  j["groups_after"] = to_json(r.after);
  nlohmann::ordered_json pct, shrink;
  for (const auto& e : r.entries) {
    pct[e.name] = e.kept_pct ? nlohmann::ordered_json(*e.kept_pct) : nlohmann::ordered_json(nullptr);
    shrink[e.name] = e.shrink_factor ? nlohmann::ordered_json(*e.shrink_factor) : nlohmann::ordered_json(nullptr);
  }
  j["ratios_pct"] = std::move(pct);
  j["shrink_factors"] = std::move(shrink);
  return j;
}

inline std::string format_table(const Report& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %14s %14s %10s %9s\n", "group", "before", "after", "kept %", "shrink");
  out += line;
  for (const auto& e : r.entries) {
    char pct[16] = "n/a", shrink[16] = "n/a";
    if (e.kept_pct) std::snprintf(pct, sizeof pct, "%.2f", *e.kept_pct);
    if (e.shrink_factor) std::snprintf(shrink, sizeof shrink, "%.1fx", *e.shrink_factor);
    std::snprintf(line, sizeof line, "%-20s %14llu %14llu %10s %9s\n", e.name.c_str(),
                  static_cast<unsigned long long>(e.before), static_cast<unsigned long long>(e.after), pct, shrink);
    out += line;
  }
  return out;
}

}  // namespace vprune
