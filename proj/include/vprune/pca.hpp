#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vprune/error.hpp"
#include "vprune/io.hpp"
#include "vprune/matrix.hpp"
#include "vprune/vpem.hpp"

namespace vprune {

// Principal-component transform. Stored in single precision, the same
// precision the artifact files hold, so a saved model reloads exactly.
struct PcaModel {
  std::vector<float> mean;          // D
  MatrixF components;               // D x d', orthonormal columns
  std::vector<double> explained_variance;  // d', non-increasing

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.cols(); }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

namespace detail {

// Flip each column so its largest-magnitude entry (lowest row on ties) is non-negative.
inline void apply_sign_convention(Eigen::MatrixXd& vecs) {
  for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vecs.rows(); ++r) {
      const double mag = std::abs(vecs(r, c));
      if (mag > best) {
        best = mag;
        arg = r;
      }
    }
    if (vecs(arg, c) < 0.0) vecs.col(c) *= -1.0;
  }
}

}  // namespace detail

// Fits on the rows of `data` (n x D): column mean plus the top-d' eigenvectors
// of the (n-1)-normalized covariance. Rows are put in lexicographic order
// before accumulation, so the fit does not depend on the input row order.
template <typename T>
PcaModel fit_pca(const Matrix<T>& data, std::size_t d_prime) {
  const std::size_t n = data.rows();
  const std::size_t dim = data.cols();
  if (n < 2) throw ConfigError("PCA needs at least 2 rows, got " + std::to_string(n));
  if (d_prime < 1 || d_prime > std::min(n, dim)) {
    throw ConfigError("PCA dimension " + std::to_string(d_prime) + " outside [1, " +
                      std::to_string(std::min(n, dim)) + "]");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = data.row(a), rb = data.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = data.row(order[i]);
    for (std::size_t j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition did not converge");

  // eigenvalues come back ascending; take the top d' in descending order
  const auto total = static_cast<Eigen::Index>(dim);
  const auto keep = static_cast<Eigen::Index>(d_prime);
  Eigen::MatrixXd vecs = solver.eigenvectors().rightCols(keep).rowwise().reverse();
  detail::apply_sign_convention(vecs);

  PcaModel model;
  model.mean.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) model.mean[j] = static_cast<float>(mean(static_cast<Eigen::Index>(j)));
  model.components = MatrixF(dim, d_prime);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < d_prime; ++c) {
      model.components(r, c) = static_cast<float>(vecs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
  model.explained_variance.resize(d_prime);
  for (Eigen::Index c = 0; c < keep; ++c) {
    // rounding can leave tiny negatives on a zero eigenvalue
    model.explained_variance[static_cast<std::size_t>(c)] = std::max(0.0, solver.eigenvalues()(total - 1 - c));
  }
  return model;
}

// (rows - mean) * components
template <typename T>
MatrixD project(const PcaModel& model, const Matrix<T>& rows) {
  const std::size_t dim = model.input_dim();
  if (rows.cols() != dim) {
    throw DimensionError("project: rows have dimension " + std::to_string(rows.cols()) + ", model expects " +
                         std::to_string(dim));
  }
  const std::size_t k = model.output_dim();
  MatrixD out(rows.rows(), k);
  std::vector<double> centered(dim);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    auto r = rows.row(i);
    for (std::size_t j = 0; j < dim; ++j) centered[j] = static_cast<double>(r[j]) - model.mean[j];
    auto o = out.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      const double cj = centered[j];
      auto comp = model.components.row(j);
      for (std::size_t c = 0; c < k; ++c) o[c] += cj * comp[c];
    }
  }
  return out;
}

// low * components^T + mean
template <typename T>
MatrixD reconstruct(const PcaModel& model, const Matrix<T>& low) {
  const std::size_t k = model.output_dim();
  if (low.cols() != k) {
    throw DimensionError("reconstruct: input has " + std::to_string(low.cols()) + " columns, model has " +
                         std::to_string(k) + " components");
  }
  const std::size_t dim = model.input_dim();
  MatrixD out(low.rows(), dim);
  for (std::size_t i = 0; i < low.rows(); ++i) {
    auto l = low.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      auto comp = model.components.row(j);
      double acc = model.mean[j];
      for (std::size_t c = 0; c < k; ++c) acc += static_cast<double>(l[c]) * comp[c];
      o[j] = acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts: <prefix>_mean.vpem (1 x D), <prefix>_components.vpem (D x d'),
// <prefix>.json {"d_prime": int, "explained_variance": [...]}
// ---------------------------------------------------------------------------

struct PcaPaths {
  std::filesystem::path mean;
  std::filesystem::path components;
  std::filesystem::path sidecar;

  static PcaPaths in(const std::filesystem::path& dir, const std::string& prefix = "pca") {
    return {dir / (prefix + "_mean.vpem"), dir / (prefix + "_components.vpem"), dir / (prefix + ".json")};
  }
};

inline std::string encode_pca_sidecar(const PcaModel& model) {
  nlohmann::ordered_json doc;
  doc["d_prime"] = model.output_dim();
  doc["explained_variance"] = model.explained_variance;
  return doc.dump() + "\n";
}

inline void save_pca(const PcaModel& model, const PcaPaths& paths) {
  io::write_file_atomic(paths.mean, encode_vpem(MatrixF(1, model.mean.size(), model.mean)));
  io::write_file_atomic(paths.components, encode_vpem(model.components));
  io::write_file_atomic(paths.sidecar, encode_pca_sidecar(model));
}

inline PcaModel load_pca(const PcaPaths& paths) {
  PcaModel model;
  const auto mean = load_embeddings(paths.mean);
  if (mean.rows() != 1) throw FormatError(paths.mean.string() + ": PCA mean must be a 1xD matrix");
  model.mean.assign(mean.data().begin(), mean.data().end());
  model.components = load_embeddings(paths.components);
  if (model.components.rows() != model.mean.size()) {
    throw FormatError(paths.components.string() + ": component rows do not match mean dimension");
  }
  try {
    const auto doc = nlohmann::json::parse(io::read_file(paths.sidecar));
    const auto d_prime = doc.at("d_prime").get<std::size_t>();
    model.explained_variance = doc.at("explained_variance").get<std::vector<double>>();
    if (d_prime != model.components.cols() || model.explained_variance.size() != d_prime) {
      throw FormatError(paths.sidecar.string() + ": d_prime does not match component matrix");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(paths.sidecar.string() + ": " + e.what());
  }
  return model;
}

}  // namespace vprune
