#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vprune/corpus.hpp"
#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/matrix.hpp"
#include "vprune/pca.hpp"
#include "vprune/pruning.hpp"
#include "vprune/tokenizer.hpp"
#include "vprune/vpem.hpp"

namespace vprune {

// Which distribution is the KL reference.
//   teacher_ref: KL(p_teacher || q_student)   (conventional distillation)
//   student_ref: KL(q_student || p_teacher)   (argument order as written in the objective)
enum class LossOrder { teacher_ref, student_ref };

struct DistillConfig {
  double temperature = 10.0;
  LossOrder loss_order = LossOrder::teacher_ref;
  double learning_rate = 0.5;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double ce_weight = 0.0;  // weight of hard-label cross-entropy at T = 1

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(ce_weight >= 0.0)) throw ConfigError("cross-entropy weight must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Tempered softmax and the distillation loss
// ---------------------------------------------------------------------------

inline std::vector<double> log_softmax_with_temperature(std::span<const double> logits, double t) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end()) / t;
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z / t - m);
  const double log_sum = std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] / t - m) - log_sum;
  return out;
}

inline std::vector<double> softmax_with_temperature(std::span<const double> logits, double t) {
  auto out = log_softmax_with_temperature(logits, t);
  for (double& v : out) v = std::exp(v);
  return out;
}

namespace detail {

inline void check_pair(std::span<const double> student, std::span<const double> teacher, double t) {
  if (student.size() != teacher.size()) {
    throw DimensionError("student has " + std::to_string(student.size()) + " logits, teacher " +
                         std::to_string(teacher.size()));
  }
  if (!(t > 0.0)) throw ConfigError("temperature must be > 0");
}

// KL(a || b) from log-probabilities, with 0 * log 0 = 0.
inline double kl_from_logs(std::span<const double> log_a, std::span<const double> log_b) {
  double kl = 0.0;
  for (std::size_t i = 0; i < log_a.size(); ++i) {
    const double a = std::exp(log_a[i]);
    if (a > 0.0) kl += a * (log_a[i] - log_b[i]);
  }
  return kl;
}

}  // namespace detail

// T^2 * KL between the tempered teacher and student distributions.
inline double kd_loss(std::span<const double> student, std::span<const double> teacher, double t,
                      LossOrder order = LossOrder::teacher_ref) {
  detail::check_pair(student, teacher, t);
  const auto log_p = log_softmax_with_temperature(teacher, t);
  const auto log_q = log_softmax_with_temperature(student, t);
  const double kl = order == LossOrder::teacher_ref ? detail::kl_from_logs(log_p, log_q)
                                                    : detail::kl_from_logs(log_q, log_p);
  return std::max(0.0, t * t * kl);
}

inline double kd_loss(std::span<const double> student, std::span<const double> teacher, const DistillConfig& cfg) {
  return kd_loss(student, teacher, cfg.temperature, cfg.loss_order);
}

// Gradient of kd_loss with respect to the student logits.
//   teacher_ref: T (q - p)
//   student_ref: T q_j (r_j - sum_i q_i r_i), r = log q - log p
inline std::vector<double> kd_loss_grad(std::span<const double> student, std::span<const double> teacher, double t,
                                        LossOrder order = LossOrder::teacher_ref) {
  detail::check_pair(student, teacher, t);
  const auto log_p = log_softmax_with_temperature(teacher, t);
  const auto log_q = log_softmax_with_temperature(student, t);
  std::vector<double> grad(student.size());
  if (order == LossOrder::teacher_ref) {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = t * (std::exp(log_q[i]) - std::exp(log_p[i]));
  } else {
    double mean_r = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) mean_r += std::exp(log_q[i]) * (log_q[i] - log_p[i]);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] = t * std::exp(log_q[i]) * ((log_q[i] - log_p[i]) - mean_r);
    }
  }
  return grad;
}

inline std::vector<double> kd_loss_grad(std::span<const double> student, std::span<const double> teacher,
                                        const DistillConfig& cfg) {
  return kd_loss_grad(student, teacher, cfg.temperature, cfg.loss_order);
}

// ---------------------------------------------------------------------------
// Student: linear classifier over the mean reconstructed token embedding
// ---------------------------------------------------------------------------

class StudentModel {
 public:
  StudentModel() = default;
  // `embeddings` is the reconstructed table, one row per pruned token.
  StudentModel(MatrixD embeddings, std::size_t num_classes)
      : embeddings_(std::move(embeddings)),
        weights_(num_classes, embeddings_.cols(), 0.0),
        bias_(num_classes, 0.0) {
    if (num_classes < 1) throw ConfigError("student needs at least one class");
  }

  // Builds the reconstructed table from the compressed (pruned x d') table.
  static StudentModel from_compressed(const MatrixF& low_table, const PcaModel& pca, std::size_t num_classes) {
    return StudentModel(reconstruct(pca, low_table), num_classes);
  }

  std::size_t num_classes() const noexcept { return bias_.size(); }
  std::size_t embedding_dim() const noexcept { return embeddings_.cols(); }
  std::size_t pruned_vocab_size() const noexcept { return embeddings_.rows(); }

  const MatrixD& embeddings() const noexcept { return embeddings_; }
  MatrixD& weights() noexcept { return weights_; }
  const MatrixD& weights() const noexcept { return weights_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  void set_parameters(MatrixD weights, std::vector<double> bias) {
    if (weights.rows() != bias.size() || weights.cols() != embedding_dim()) {
      throw DimensionError("student parameters do not match model shape");
    }
    weights_ = std::move(weights);
    bias_ = std::move(bias);
  }

  // Mean embedding of a pruned-space sequence.
  std::vector<double> features(const TokenSequence& seq) const {
    if (seq.empty()) throw ConfigError("student input sequence is empty");
    std::vector<double> f(embedding_dim(), 0.0);
    for (TokenId id : seq) {
      if (id >= embeddings_.rows()) throw DimensionError("pruned token index out of range");
      auto r = embeddings_.row(id);
      for (std::size_t j = 0; j < f.size(); ++j) f[j] += r[j];
    }
    for (double& v : f) v /= static_cast<double>(seq.size());
    return f;
  }

  std::vector<double> logits_from_features(std::span<const double> f) const {
    std::vector<double> z(bias_);
    for (std::size_t c = 0; c < z.size(); ++c) {
      auto w = weights_.row(c);
      double acc = 0.0;
      for (std::size_t j = 0; j < f.size(); ++j) acc += w[j] * f[j];
      z[c] += acc;
    }
    return z;
  }

  friend bool operator==(const StudentModel&, const StudentModel&) = default;

 private:
  MatrixD embeddings_;
  MatrixD weights_;
  std::vector<double> bias_;
};

inline std::vector<double> student_forward(const StudentModel& model, const TokenSequence& pruned_seq) {
  return model.logits_from_features(model.features(pruned_seq));
}

// Index of the largest value, lowest index on ties.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// ---------------------------------------------------------------------------
// Teacher logits: VPEM n x C plus sidecar {"labels": [...]} fixing class order
// ---------------------------------------------------------------------------

struct TeacherLogits {
  MatrixD rows;
  std::vector<std::string> labels;
};

inline TeacherLogits load_teacher_logits(const std::filesystem::path& vpem, const std::filesystem::path& sidecar) {
  TeacherLogits t;
  t.rows = matrix_cast<double>(load_embeddings(vpem));
  try {
    t.labels = nlohmann::json::parse(io::read_file(sidecar)).at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  if (t.labels.size() != t.rows.cols()) {
    throw FormatError(sidecar.string() + ": " + std::to_string(t.labels.size()) + " labels for " +
                      std::to_string(t.rows.cols()) + " logit columns");
  }
  return t;
}

inline void save_teacher_logits(const TeacherLogits& t, const std::filesystem::path& vpem,
                                const std::filesystem::path& sidecar) {
  io::write_file_atomic(vpem, encode_vpem(matrix_cast<float>(t.rows)));
  nlohmann::ordered_json doc;
  doc["labels"] = t.labels;
  io::write_file_atomic(sidecar, doc.dump() + "\n");
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Utterances in pruned token space with class ids in the teacher's class order.
struct EncodedDataset {
  std::vector<TokenSequence> sequences;
  std::vector<std::size_t> labels;
};

inline EncodedDataset encode_dataset(const Dataset& dataset, const Vocabulary& vocab, const RemapTable& remap,
                                     const std::vector<std::string>& class_labels) {
  std::unordered_map<std::string, std::size_t> class_of;
  for (std::size_t c = 0; c < class_labels.size(); ++c) class_of.emplace(class_labels[c], c);
  EncodedDataset out;
  for (const auto& u : dataset.utterances()) {
    auto it = class_of.find(u.label);
    if (it == class_of.end()) throw AlignmentError("label '" + u.label + "' is not a teacher class");
    out.sequences.push_back(remap_tokens(remap, tokenize(vocab, u.text)));
    out.labels.push_back(it->second);
  }
  return out;
}

struct TrainResult {
  StudentModel model;
  // Mean objective over the full dataset: entry 0 before training, then one per epoch.
  std::vector<double> epoch_loss;
};

namespace detail {

// Fisher-Yates driven directly by mt19937_64 output, so the permutation is the
// same on every standard library.
inline void seeded_shuffle(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

inline double cross_entropy(std::span<const double> logits, std::size_t gold) {
  return -log_softmax_with_temperature(logits, 1.0)[gold];
}

inline double objective(const StudentModel& m, const std::vector<std::vector<double>>& feats, const MatrixD& teacher,
                        const std::vector<std::size_t>& labels, const DistillConfig& cfg) {
  if (feats.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto z = m.logits_from_features(feats[i]);
    sum += kd_loss(z, teacher.row(i), cfg);
    if (cfg.ce_weight > 0.0) sum += cfg.ce_weight * cross_entropy(z, labels[i]);
  }
  return sum / static_cast<double>(feats.size());
}

}  // namespace detail

// Mini-batch gradient descent on the mean distillation loss (plus weighted
// cross-entropy when ce_weight > 0). Embeddings stay frozen; W and b train.
// Single-threaded with a fixed reduction order, so runs are bit-reproducible.
inline TrainResult train_student(const EncodedDataset& data, const MatrixD& teacher, const StudentModel& init,
                                 const DistillConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.sequences.size();
  if (teacher.rows() != n) {
    throw AlignmentError("teacher has " + std::to_string(teacher.rows()) + " rows for " + std::to_string(n) +
                         " utterances");
  }
  if (data.labels.size() != n) throw AlignmentError("label count does not match sequence count");
  const std::size_t classes = init.num_classes();
  if (teacher.cols() != classes) {
    throw DimensionError("teacher has " + std::to_string(teacher.cols()) + " classes, student " +
                         std::to_string(classes));
  }

  TrainResult result{init, {}};
  if (cfg.epochs == 0) return result;
  StudentModel& model = result.model;

  std::vector<std::vector<double>> feats;
  feats.reserve(n);
  for (const auto& seq : data.sequences) feats.push_back(model.features(seq));

  const std::size_t dim = model.embedding_dim();
  result.epoch_loss.push_back(detail::objective(model, feats, teacher, data.labels, cfg));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  MatrixD grad_w(classes, dim);
  std::vector<double> grad_b(classes);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::seeded_shuffle(order, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::fill(grad_w.data().begin(), grad_w.data().end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto z = model.logits_from_features(feats[i]);
        auto g = kd_loss_grad(z, teacher.row(i), cfg);
        if (cfg.ce_weight > 0.0) {
          const auto p = softmax_with_temperature(z, 1.0);
          for (std::size_t c = 0; c < classes; ++c) {
            g[c] += cfg.ce_weight * (p[c] - (c == data.labels[i] ? 1.0 : 0.0));
          }
        }
        for (std::size_t c = 0; c < classes; ++c) {
          auto gw = grad_w.row(c);
          for (std::size_t j = 0; j < dim; ++j) gw[j] += g[c] * feats[i][j];
          grad_b[c] += g[c];
        }
      }
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      auto w = model.weights().data();
      auto gw = grad_w.data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * gw[j];
      for (std::size_t c = 0; c < classes; ++c) model.bias()[c] -= step * grad_b[c];
    }
    result.epoch_loss.push_back(detail::objective(model, feats, teacher, data.labels, cfg));
  }
  return result;
}

inline TrainResult train_student(const Dataset& dataset, const Vocabulary& vocab, const RemapTable& remap,
                                 const TeacherLogits& teacher, const StudentModel& init, const DistillConfig& cfg) {
  if (teacher.rows.rows() != dataset.size()) {
    throw AlignmentError("teacher has " + std::to_string(teacher.rows.rows()) + " rows for " +
                         std::to_string(dataset.size()) + " utterances");
  }
  return train_student(encode_dataset(dataset, vocab, remap, teacher.labels), teacher.rows, init, cfg);
}

struct AccuracyReport {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  bool empty = true;
};

inline AccuracyReport evaluate_accuracy(const StudentModel& model, const EncodedDataset& data) {
  AccuracyReport r;
  r.total = data.sequences.size();
  r.empty = r.total == 0;
  for (std::size_t i = 0; i < r.total; ++i) {
    if (argmax(student_forward(model, data.sequences[i])) == data.labels[i]) ++r.correct;
  }
  r.accuracy = r.empty ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

// Class order defaults to the dataset's label order.
inline AccuracyReport evaluate_accuracy(const StudentModel& model, const Dataset& dataset, const Vocabulary& vocab,
                                        const RemapTable& remap,
                                        const std::vector<std::string>* class_labels = nullptr) {
  return evaluate_accuracy(model, encode_dataset(dataset, vocab, remap, class_labels ? *class_labels : dataset.labels()));
}

// ---------------------------------------------------------------------------
// Student artifacts: <dir>/student_W.vpem (C x D), student_b.vpem (1 x C),
// student.json {"labels": [...], "temperature": ..., ...}
// ---------------------------------------------------------------------------

inline void save_student_parameters(const StudentModel& model, const std::filesystem::path& dir,
                                    const nlohmann::ordered_json& metadata) {
  io::write_file_atomic(dir / "student_W.vpem", encode_vpem(matrix_cast<float>(model.weights())));
  io::write_file_atomic(dir / "student_b.vpem",
                        encode_vpem(matrix_cast<float>(MatrixD(1, model.bias().size(), model.bias()))));
  io::write_file_atomic(dir / "student.json", metadata.dump(2) + "\n");
}

}  // namespace vprune
