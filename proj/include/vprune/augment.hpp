#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <vector>

#include <httplib.h>
// resolv.h defines _res as a macro, which breaks Eigen's parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "vprune/corpus.hpp"
#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/utf8.hpp"

namespace vprune {

// ---------------------------------------------------------------------------
// Prompt construction and completion parsing
// ---------------------------------------------------------------------------

struct PromptSpec {
  std::string intent_name;
  std::vector<std::string> seed_examples;
  std::size_t n_new = 1;
};

// Renders the few-shot generation prompt:
//
//   The following are utterances expressing the intent '<intent>'.
//   Example 1: <seed 1>
//   ...
//   Example k+1:
inline std::string build_prompt(const PromptSpec& spec) {
  if (spec.seed_examples.empty()) throw ConfigError("prompt needs at least one seed example");
  if (spec.n_new < 1) throw ConfigError("prompt must request at least one new utterance");
  std::string out = "The following are utterances expressing the intent '" + spec.intent_name + "'.\n";
  std::size_t i = 1;
  for (const auto& seed : spec.seed_examples) {
    out += "Example " + std::to_string(i++) + ": " + seed + "\n";
  }
  out += "Example " + std::to_string(i) + ":";
  return out;
}

inline std::string fold_case(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const auto& cp : utf8::decode(s)) {
    if (cp.value == utf8::kReplacement) {
      out.append(s.substr(cp.offset, cp.length));
    } else {
      utf8::append(out, utf8::to_lower(cp.value));
    }
  }
  return out;
}

namespace detail {

// Matches "Example <digits>:<rest>" and returns <rest>.
inline std::optional<std::string_view> strip_example_marker(std::string_view line) {
  constexpr std::string_view kMarker = "Example ";
  if (!line.starts_with(kMarker)) return std::nullopt;
  std::size_t pos = kMarker.size();
  const std::size_t digits_begin = pos;
  while (pos < line.size() && line[pos] >= '0' && line[pos] <= '9') ++pos;
  if (pos == digits_begin || pos >= line.size() || line[pos] != ':') return std::nullopt;
  return line.substr(pos + 1);
}

}  // namespace detail

// Extracts utterances from raw model output. Lines of the form
// "Example N: text" always count; bare lines count only until the first marker.
// Results are trimmed, non-empty and free of case-insensitive duplicates.
inline std::vector<std::string> parse_completions(std::string_view raw) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  bool marker_seen = false;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t end = raw.find('\n', pos);
    if (end == std::string_view::npos) end = raw.size();
    const std::string_view line = trim(raw.substr(pos, end - pos));
    pos = end + 1;

    std::string_view text;
    if (auto rest = detail::strip_example_marker(line)) {
      marker_seen = true;
      text = trim(*rest);
    } else if (!marker_seen) {
      text = line;
    } else {
      continue;
    }
    if (text.empty()) continue;
    if (seen.insert(fold_case(text)).second) out.emplace_back(text);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Completion sources
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{1000};
  double multiplier = 2.0;
};

inline constexpr std::string_view kDefaultApiKeyEnvVar = "VPRUNE_GEN_API_KEY";

struct GenClientConfig {
  std::string endpoint_url;
  int max_tokens = 256;
  std::chrono::seconds timeout{30};
  std::string api_key_env_var{kDefaultApiKeyEnvVar};
  // When set, completions come from this file instead of the endpoint.
  std::optional<std::filesystem::path> offline_file;
  RetryPolicy retry;
};

class CompletionSource {
 public:
  virtual ~CompletionSource() = default;
  // Returns parsed utterances for `prompt`, asking for `n` completions.
  virtual std::vector<std::string> complete(const std::string& prompt, std::size_t n) = 0;
};

// Pre-generated completions, one per line, handed out in file order across
// calls. Deterministic; an exhausted file yields empty results.
class OfflineCompletionSource : public CompletionSource {
 public:
  explicit OfflineCompletionSource(const std::filesystem::path& path)
      : OfflineCompletionSource(split_lines(io::read_file(path))) {}
  explicit OfflineCompletionSource(std::vector<std::string> lines) : lines_(std::move(lines)) {}

  std::vector<std::string> complete(const std::string& /*prompt*/, std::size_t n) override {
    std::vector<std::string> out;
    for (std::size_t taken = 0; taken < n && next_ < lines_.size(); ++taken) {
      for (auto& u : parse_completions(lines_[next_++])) out.push_back(std::move(u));
    }
    return out;
  }

  std::size_t remaining() const noexcept { return lines_.size() - next_; }

 private:
  static std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      auto line = trim(text.substr(pos, end - pos));
      if (!line.empty()) lines.emplace_back(line);
      pos = end + 1;
    }
    return lines;
  }

  std::vector<std::string> lines_;
  std::size_t next_ = 0;
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

inline ParsedUrl split_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("endpoint URL needs a scheme: '" + std::string(url) + "'");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme '" + std::string(scheme) + "'");
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_begin)), std::string(url.substr(path_begin))};
}

// POSTs {"prompt", "max_tokens", "n"} and expects {"completions": [...]}.
// Transport failures and 5xx answers are retried with exponential backoff.
class HttpCompletionSource : public CompletionSource {
 public:
  explicit HttpCompletionSource(GenClientConfig config) : config_(std::move(config)) {
    if (config_.endpoint_url.empty()) throw ConfigError("remote generation needs an endpoint URL");
    url_ = split_endpoint(config_.endpoint_url);
  }

  std::vector<std::string> complete(const std::string& prompt, std::size_t n) override {
    nlohmann::ordered_json req;
    req["prompt"] = prompt;
    req["max_tokens"] = config_.max_tokens;
    req["n"] = n;
    const std::string body = req.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env_var.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto delay = config_.retry.initial_delay;
    for (int attempt = 0;; ++attempt) {
      const bool last = attempt >= config_.retry.max_retries;
      httplib::Client client(url_.scheme_host_port);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      auto res = client.Post(url_.path, headers, body, "application/json");

      if (!res) {
        if (last) {
          throw TransportError("generation request to " + config_.endpoint_url + " failed after " +
                               std::to_string(attempt + 1) + " attempts: " + httplib::to_string(res.error()));
        }
      } else if (res->status >= 500) {
        if (last) throw protocol_error(res->status, res->body, attempt + 1);
      } else if (res->status < 200 || res->status >= 300) {
        throw protocol_error(res->status, res->body, attempt + 1);
      } else {
        return parse_response(res->status, res->body);
      }
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * config_.retry.multiplier));
    }
  }

 private:
  static std::string excerpt(const std::string& body) {
    constexpr std::size_t kMax = 200;
    return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
  }

  static ProtocolError protocol_error(int status, const std::string& body, int attempts) {
    return ProtocolError(status, excerpt(body),
                         "generation service returned HTTP " + std::to_string(status) + " after " +
                             std::to_string(attempts) + " attempt(s): " + excerpt(body));
  }

  static std::vector<std::string> parse_response(int status, const std::string& body) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
      throw ProtocolError(status, excerpt(body), "generation response is not JSON: " + excerpt(body));
    }
    auto it = doc.find("completions");
    if (!doc.is_object() || it == doc.end() || !it->is_array()) {
      throw ProtocolError(status, excerpt(body), "generation response lacks a \"completions\" array");
    }
    std::vector<std::string> out;
    for (const auto& c : *it) {
      if (!c.is_string()) throw ProtocolError(status, excerpt(body), "non-string completion in response");
      for (auto& u : parse_completions(c.get<std::string>())) out.push_back(std::move(u));
    }
    return out;
  }

  GenClientConfig config_;
  ParsedUrl url_;
};

inline std::unique_ptr<CompletionSource> make_completion_source(const GenClientConfig& config) {
  if (config.offline_file) return std::make_unique<OfflineCompletionSource>(*config.offline_file);
  return std::make_unique<HttpCompletionSource>(config);
}

// One-shot generation with a fresh source.
inline std::vector<std::string> generate(const GenClientConfig& config, const std::string& prompt,
                                         std::size_t n) {
  return make_completion_source(config)->complete(prompt, n);
}

// ---------------------------------------------------------------------------
// Dataset augmentation
// ---------------------------------------------------------------------------

inline constexpr int kPromptBudgetPerIntent = 5;

struct AugmentResult {
  Dataset dataset;
  std::vector<std::string> warnings;
};

// Appends up to `per_intent` new utterances per label after the original ones.
// Generations matching a seed or an earlier generation of the same intent
// (case-insensitively) are dropped; a shortfall is reported as a warning.
inline AugmentResult augment_dataset(const Dataset& dataset, std::size_t per_intent,
                                     CompletionSource& source) {
  if (per_intent < 1) throw ConfigError("per-intent generation count must be at least 1");
  AugmentResult result{dataset, {}};
  for (const auto& label : dataset.labels()) {
    std::vector<std::string> seeds;
    std::unordered_set<std::string> seen;
    for (const auto& u : dataset.utterances()) {
      if (u.label != label) continue;
      seeds.push_back(u.text);
      seen.insert(fold_case(u.text));
    }
    std::vector<std::string> collected;
    int prompts = 0;
    while (collected.size() < per_intent && prompts < kPromptBudgetPerIntent) {
      const std::size_t need = per_intent - collected.size();
      const auto prompt = build_prompt({label, seeds, need});
      ++prompts;
      for (auto& text : source.complete(prompt, need)) {
        if (collected.size() >= per_intent) break;
        if (seen.insert(fold_case(text)).second) collected.push_back(std::move(text));
      }
    }
    if (collected.size() < per_intent) {
      result.warnings.push_back("intent '" + label + "': generated " + std::to_string(collected.size()) +
                                " of " + std::to_string(per_intent) + " utterances after " +
                                std::to_string(prompts) + " prompts");
    }
    for (auto& text : collected) result.dataset.add({std::move(text), label});
  }
  return result;
}

inline AugmentResult augment_dataset(const Dataset& dataset, std::size_t per_intent,
                                     const GenClientConfig& config) {
  if (per_intent < 1) throw ConfigError("per-intent generation count must be at least 1");
  auto source = make_completion_source(config);
  return augment_dataset(dataset, per_intent, *source);
}

}  // namespace vprune
