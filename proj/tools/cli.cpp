#include "cli.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vprune/augment.hpp"
#include "vprune/corpus.hpp"
#include "vprune/distill.hpp"
#include "vprune/manifest.hpp"
#include "vprune/pca.hpp"
#include "vprune/pruning.hpp"
#include "vprune/report.hpp"
#include "vprune/tokenizer.hpp"
#include "vprune/vocabulary.hpp"
#include "vprune/vpem.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace vprune::cli {
namespace {

// Artifact names inside a prune output directory.
constexpr const char* kRemapFile = "remap.json";
constexpr const char* kPrunedTableFile = "embeddings_pruned.vpem";

struct AugmentOptions {
  std::string corpus;
  std::string out;
  std::string endpoint;
  std::string offline_file;
  std::size_t per_intent = 5;
  int max_tokens = 256;
  int timeout_s = 30;
  std::string api_key_env{kDefaultApiKeyEnvVar};
};

struct PruneOptions {
  std::string vocab;
  std::string embeddings;
  std::string corpus;
  std::string augmented;
  bool seed_only = false;
  long long k = 2000;
  long long pca_dim = 400;
  std::size_t threads = 1;
  std::string out_dir;
};

struct DistillOptions {
  std::string vocab;
  std::string corpus;
  std::string teacher_logits;
  std::string teacher_labels;
  std::string prune_dir;
  std::string out_dir;
  double temperature = 10.0;
  std::size_t epochs = DistillConfig{}.epochs;
  double lr = DistillConfig{}.learning_rate;
  std::size_t batch_size = DistillConfig{}.batch_size;
  std::uint64_t seed = 0;
  double ce_weight = 0.0;
  std::string loss_order = "teacher";
};

struct ReportOptions {
  std::string before;
  std::string after;
  std::string preset = "bert-base";
  std::uint64_t k = 2000;
  std::uint64_t pca_dim = 400;
  double keep_fraction = 0.05;
  std::optional<std::uint64_t> num_classes;
  std::string json_out;
};

struct TokenizeOptions {
  std::string vocab;
  std::vector<std::string> texts;
  std::string input;
  std::string remap;
};

// Runs `fn`, prefixing any library error with the module it came from.
template <typename Fn>
auto in_module(const char* module, Fn&& fn) -> decltype(fn()) {
  const auto prefix = std::string(module) + ": ";
  try {
    return fn();
  } catch (const AlignmentError& e) {
    throw AlignmentError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DecodeError& e) {
    throw DecodeError(prefix + e.what());
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  }
}

std::string join_ids(const TokenSequence& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(ids[i]);
  }
  return s;
}

int cmd_augment(const AugmentOptions& o, std::ostream& out, std::ostream& err) {
  if (o.endpoint.empty() == o.offline_file.empty()) {
    throw ConfigError("exactly one of --endpoint or --offline-file is required");
  }
  if (o.per_intent < 1) throw ConfigError("--per-intent must be >= 1");
  GenClientConfig cfg;
  cfg.endpoint_url = o.endpoint;
  cfg.max_tokens = o.max_tokens;
  cfg.timeout = std::chrono::seconds(o.timeout_s);
  cfg.api_key_env_var = o.api_key_env;
  if (!o.offline_file.empty()) cfg.offline_file = o.offline_file;

  const auto dataset = load_corpus(o.corpus);
  const auto result = augment_dataset(dataset, o.per_intent, cfg);
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  save_corpus(result.dataset, o.out);
  out << "wrote " << result.dataset.size() << " utterances (" << dataset.size() << " original, "
      << result.dataset.size() - dataset.size() << " generated) to " << o.out << "\n";
  return kOk;
}

int cmd_prune(const PruneOptions& o, std::ostream& out, std::ostream& err) {
  if (o.k < 1) throw ConfigError("--k must be >= 1");
  if (o.pca_dim < 1) throw ConfigError("--pca-dim must be >= 1");
  if (o.seed_only && o.augmented.empty()) throw ConfigError("--seed-only needs --augmented to restrict");

  const auto vocab = in_module("core", [&] { return load_vocab(o.vocab); });
  const auto emb = in_module("core", [&] { return load_embeddings(o.embeddings); });
  // the augmented file already begins with the seed corpus
  const auto dataset = in_module("corpus", [&] {
    return (o.augmented.empty() || o.seed_only) ? load_corpus(o.corpus) : load_corpus(o.augmented);
  });

  const auto freq = count_token_frequencies(dataset, vocab, o.threads);
  const auto pruned = select_top_k(freq, vocab, static_cast<std::size_t>(o.k));
  const auto remap = in_module("vprune", [&] { return build_remap(vocab, pruned, emb, o.threads); });

  const auto kept_ids = pruned.original_ids();
  const auto kept_rows = select_rows(emb, kept_ids);
  std::size_t d_prime = static_cast<std::size_t>(o.pca_dim);
  const std::size_t max_dim = std::min(kept_rows.rows(), kept_rows.cols());
  if (d_prime > max_dim) {
    err << "warning: --pca-dim " << d_prime << " exceeds min(kept tokens, embedding dim) = " << max_dim
        << "; using " << max_dim << "\n";
    d_prime = max_dim;
  }
  const auto pca = in_module("pca", [&] { return fit_pca(kept_rows, d_prime); });
  const auto low = matrix_cast<float>(project(pca, kept_rows));

  ordered_json config;
  config["vocab"] = o.vocab;
  config["embeddings"] = o.embeddings;
  config["corpus"] = o.corpus;
  config["augmented"] = o.augmented.empty() ? ordered_json(nullptr) : ordered_json(o.augmented);
  config["seed_only"] = o.seed_only;
  config["k"] = o.k;
  config["pca_dim"] = d_prime;

  ArtifactWriter writer(o.out_dir, "prune", config);
  writer.stage(kRemapFile, encode_remap(pruned, remap));
  writer.stage(kPrunedTableFile, encode_vpem(low));
  writer.stage("pca_mean.vpem", encode_vpem(MatrixF(1, pca.mean.size(), pca.mean)));
  writer.stage("pca_components.vpem", encode_vpem(pca.components));
  writer.stage("pca.json", encode_pca_sidecar(pca));
  writer.commit();

  out << "kept " << pruned.size() << " of " << vocab.size() << " tokens (" << pruned.size() - vocab.special_ids().size()
      << " content), counted " << freq.total() << " token occurrences over " << dataset.size()
      << " utterances; PCA " << emb.cols() << " -> " << d_prime << "\n";
  return kOk;
}

int cmd_distill(const DistillOptions& o, std::ostream& out, std::ostream& /*err*/) {
  DistillConfig cfg;
  cfg.temperature = o.temperature;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.ce_weight = o.ce_weight;
  if (o.loss_order == "teacher") {
    cfg.loss_order = LossOrder::teacher_ref;
  } else if (o.loss_order == "student") {
    cfg.loss_order = LossOrder::student_ref;
  } else {
    throw ConfigError("--loss-order must be 'teacher' or 'student'");
  }
  cfg.validate();

  const fs::path prune_dir(o.prune_dir);
  const auto vocab = in_module("core", [&] { return load_vocab(o.vocab); });
  const auto dataset = in_module("corpus", [&] { return load_corpus(o.corpus); });
  fs::path labels_path = o.teacher_labels;
  if (labels_path.empty()) labels_path = fs::path(o.teacher_logits).replace_extension(".json");
  const auto teacher = in_module("distill", [&] { return load_teacher_logits(o.teacher_logits, labels_path); });
  if (teacher.rows.rows() != dataset.size()) {
    throw AlignmentError("teacher logits have " + std::to_string(teacher.rows.rows()) + " rows, corpus has " +
                         std::to_string(dataset.size()) + " utterances");
  }
  const auto remap = in_module("vprune", [&] { return load_remap(prune_dir / kRemapFile); });
  if (remap.table.map.size() != vocab.size()) throw DimensionError("vprune: remap does not match vocabulary size");
  const auto pca = in_module("pca", [&] { return load_pca(PcaPaths::in(prune_dir)); });
  const auto low = in_module("pca", [&] { return load_embeddings(prune_dir / kPrunedTableFile); });

  const auto init = StudentModel::from_compressed(low, pca, teacher.labels.size());
  const auto encoded = encode_dataset(dataset, vocab, remap.table, teacher.labels);
  const auto result = train_student(encoded, teacher.rows, init, cfg);
  const auto acc = evaluate_accuracy(result.model, encoded);

  ordered_json config;
  config["vocab"] = o.vocab;
  config["corpus"] = o.corpus;
  config["teacher_logits"] = o.teacher_logits;
  config["teacher_labels"] = labels_path.string();
  config["prune_dir"] = o.prune_dir;
  config["temperature"] = cfg.temperature;
  config["loss_order"] = o.loss_order;
  config["learning_rate"] = cfg.learning_rate;
  config["epochs"] = cfg.epochs;
  config["batch_size"] = cfg.batch_size;
  config["seed"] = cfg.seed;
  config["ce_weight"] = cfg.ce_weight;

  ordered_json meta;
  meta["labels"] = teacher.labels;
  meta["embedding_dim"] = result.model.embedding_dim();
  meta["final_loss"] = result.epoch_loss.empty() ? ordered_json(nullptr) : ordered_json(result.epoch_loss.back());
  meta["train_accuracy"] = acc.accuracy;

  const auto& model = result.model;
  ArtifactWriter writer(o.out_dir, "distill", config);
  writer.stage("student_W.vpem", encode_vpem(matrix_cast<float>(model.weights())));
  writer.stage("student_b.vpem", encode_vpem(matrix_cast<float>(MatrixD(1, model.bias().size(), model.bias()))));
  writer.stage("student.json", meta.dump(2) + "\n");
  writer.commit();

  out << "trained " << cfg.epochs << " epochs on " << dataset.size() << " utterances";
  if (!result.epoch_loss.empty()) out << ", loss " << result.epoch_loss.front() << " -> " << result.epoch_loss.back();
  out << ", gold-label accuracy " << acc.accuracy << "\n";
  return kOk;
}

ModelConfig read_model_config(const std::string& path) {
  try {
    return model_config_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

int cmd_report(const ReportOptions& o, std::ostream& out, std::ostream& /*err*/) {
  ModelConfig before, after;
  if (!o.before.empty() || !o.after.empty()) {
    if (o.before.empty() || o.after.empty()) throw ConfigError("--before and --after must be given together");
    before = read_model_config(o.before);
    after = read_model_config(o.after);
  } else {
    if (o.preset != "bert-base") throw ConfigError("unknown preset '" + o.preset + "'");
    before = bert_base();
    before.num_classes = o.num_classes;
    after = compressed(before, o.k, o.pca_dim, o.keep_fraction);
  }
  const auto report = compression_report(count_params(before), count_params(after));
  const std::string json = to_json(report).dump(2) + "\n";
  if (o.json_out == "-") {
    out << json;
    return kOk;
  }
  out << format_table(report);
  if (!o.json_out.empty()) io::write_file_atomic(o.json_out, json);
  return kOk;
}

int cmd_tokenize(const TokenizeOptions& o, std::ostream& out, std::istream& in) {
  const auto vocab = load_vocab(o.vocab);
  std::optional<RemapArtifact> remap;
  if (!o.remap.empty()) {
    remap = load_remap(o.remap);
    if (remap->table.map.size() != vocab.size()) throw DimensionError("remap does not match vocabulary size");
  }
  auto emit = [&](const std::string& line) {
    auto ids = tokenize(vocab, line);
    if (remap) ids = remap_tokens(remap->table, ids);
    out << join_ids(ids) << "\n";
  };
  if (!o.texts.empty()) {
    for (const auto& t : o.texts) emit(t);
    return kOk;
  }
  std::unique_ptr<std::istream> file;
  std::istream* src = &in;
  if (!o.input.empty() && o.input != "-") {
    file = std::make_unique<std::istringstream>(io::read_file(o.input));
    src = file.get();
  }
  for (std::string line; std::getline(*src, line);) emit(line);
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const AlignmentError*>(&e)) return kMisaligned;
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const ProtocolError*>(&e)) return kServiceError;
  return kDataError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Task-specific vocabulary pruning, embedding compression and distillation"};
  app.name(args.empty() ? "vprune" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  AugmentOptions aug;
  auto* augment = app.add_subcommand("augment", "Generate intent-conditioned utterances and append them to a corpus");
  augment->add_option("--corpus", aug.corpus, "Seed corpus (JSON lines)")->required();
  augment->add_option("--out", aug.out, "Output corpus (JSON lines)")->required();
  augment->add_option("--endpoint", aug.endpoint, "Completion endpoint URL");
  augment->add_option("--offline-file", aug.offline_file, "Pre-generated completions, one per line");
  augment->add_option("--per-intent", aug.per_intent, "New utterances per intent")->capture_default_str();
  augment->add_option("--max-tokens", aug.max_tokens, "max_tokens sent to the endpoint")->capture_default_str();
  augment->add_option("--timeout", aug.timeout_s, "Request timeout in seconds")->capture_default_str();
  augment->add_option("--api-key-env", aug.api_key_env, "Environment variable holding the bearer token")
      ->capture_default_str();

  PruneOptions pr;
  auto* prune = app.add_subcommand("prune", "Select the task vocabulary, build the remap and fit PCA");
  prune->add_option("--vocab", pr.vocab, "Vocabulary file")->required();
  prune->add_option("--embeddings", pr.embeddings, "Embedding matrix (VPEM)")->required();
  prune->add_option("--corpus", pr.corpus, "Seed corpus (JSON lines)")->required();
  prune->add_option("--augmented", pr.augmented, "Augmented corpus; counted instead of --corpus when given");
  prune->add_flag("--seed-only", pr.seed_only, "Count tokens on the seed corpus even when --augmented is given");
  prune->add_option("--k", pr.k, "Content tokens to keep")->capture_default_str();
  prune->add_option("--pca-dim", pr.pca_dim, "PCA target dimension")->capture_default_str();
  prune->add_option("--threads", pr.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  prune->add_option("--out-dir", pr.out_dir, "Output directory")->required();

  DistillOptions ds;
  auto* distill = app.add_subcommand("distill", "Train the student against teacher logits");
  distill->add_option("--vocab", ds.vocab, "Vocabulary file")->required();
  distill->add_option("--corpus", ds.corpus, "Training corpus (JSON lines)")->required();
  distill->add_option("--teacher-logits", ds.teacher_logits, "Teacher logits (VPEM, n x C)")->required();
  distill->add_option("--teacher-labels", ds.teacher_labels, "Teacher class order sidecar (default: logits path with .json)");
  distill->add_option("--prune-dir", ds.prune_dir, "Output directory of `prune`")->required();
  distill->add_option("--out-dir", ds.out_dir, "Output directory")->required();
  distill->add_option("--temperature", ds.temperature, "Distillation temperature")->capture_default_str();
  distill->add_option("--epochs", ds.epochs, "Training epochs")->capture_default_str();
  distill->add_option("--lr", ds.lr, "Learning rate")->capture_default_str();
  distill->add_option("--batch-size", ds.batch_size, "Mini-batch size")->capture_default_str();
  distill->add_option("--seed", ds.seed, "Shuffle seed")->capture_default_str();
  distill->add_option("--ce-weight", ds.ce_weight, "Weight of hard-label cross-entropy")->capture_default_str();
  distill->add_option("--loss-order", ds.loss_order, "KL reference: teacher or student")->capture_default_str();

  ReportOptions rp;
  auto* report = app.add_subcommand("report", "Parameter accounting before and after compression");
  report->add_option("--before", rp.before, "Model config JSON of the original model");
  report->add_option("--after", rp.after, "Model config JSON of the compressed model");
  report->add_option("--preset", rp.preset, "Built-in original model")->capture_default_str();
  report->add_option("--k", rp.k, "Pruned vocabulary size for the preset")->capture_default_str();
  report->add_option("--pca-dim", rp.pca_dim, "PCA dimension for the preset")->capture_default_str();
  report->add_option("--keep-fraction", rp.keep_fraction, "Kept Transformer fraction for the preset")
      ->capture_default_str();
  report->add_option("--num-classes", rp.num_classes, "Intent count (adds the classifier group)");
  report->add_option("--json", rp.json_out, "Write the JSON report here ('-' prints only JSON)");

  TokenizeOptions tk;
  auto* tok = app.add_subcommand("tokenize", "Print token ids for each input line");
  tok->add_option("--vocab", tk.vocab, "Vocabulary file")->required();
  tok->add_option("--text", tk.texts, "Text to tokenize (repeatable)");
  tok->add_option("--input", tk.input, "Input file, one text per line ('-' for stdin)");
  tok->add_option("--remap", tk.remap, "Remap JSON; prints pruned indices instead");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (augment->parsed()) return cmd_augment(aug, out, err);
    if (prune->parsed()) return cmd_prune(pr, out, err);
    if (distill->parsed()) return cmd_distill(ds, out, err);
    if (report->parsed()) return cmd_report(rp, out, err);
    if (tok->parsed()) return cmd_tokenize(tk, out, in);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    if (augment->parsed()) err << augment->help();
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kConfigError;
}

}  // namespace vprune::cli
