#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "skillseries/errors.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

/// Centered (not scaled) PCA. Rows of `components` are orthonormal.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // k x p
  Eigen::VectorXd explained_variance;
  std::size_t requested_k = 0;
  std::string note;  // non-empty when k was clamped

  std::size_t k() const noexcept { return static_cast<std::size_t>(components.rows()); }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Fits on the rows of X (n x p). k is clamped to min(k, n-1, p).
inline PcaModel pca_fit(const Eigen::MatrixXd& X, std::size_t k) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = static_cast<std::size_t>(X.cols());
  if (n < 2) throw DegenerateInput("PCA needs at least two training rows");
  if (p < 1) throw DegenerateInput("PCA needs at least one feature");
  if (k < 1) throw BadParam("PCA needs k >= 1");

  PcaModel model;
  model.requested_k = k;
  const std::size_t kk = std::min({k, n - 1, p});
  if (kk != k)
    model.note = "k clamped from " + std::to_string(k) + " to " + std::to_string(kk) +
                 " (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")";

  model.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto kidx = static_cast<Eigen::Index>(kk);
  model.components = svd.matrixV().leftCols(kidx).transpose();
  model.explained_variance =
      svd.singularValues().head(kidx).array().square() / static_cast<double>(n - 1);

  // Sign convention: the largest-magnitude entry of each component is non-negative.
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    Eigen::Index arg = 0;
    model.components.row(r).cwiseAbs().maxCoeff(&arg);
    if (model.components(r, arg) < 0.0) model.components.row(r) *= -1.0;
  }
  return model;
}

inline Eigen::VectorXd pca_transform(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim())
    throw DimMismatch("PCA input has " + std::to_string(x.size()) + " features, model expects " +
                      std::to_string(model.input_dim()));
  return model.components * (x - model.mean);
}

/// Row-wise transform of an n x p matrix.
inline Eigen::MatrixXd pca_transform_rows(const PcaModel& model, const Eigen::MatrixXd& X) {
  if (static_cast<std::size_t>(X.cols()) != model.input_dim())
    throw DimMismatch("PCA input dimensionality mismatch");
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

inline Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (static_cast<std::size_t>(z.size()) != model.k()) throw DimMismatch("PCA code length mismatch");
  return model.mean + model.components.transpose() * z;
}

// Text format:
//   pca <p> <k> <requested_k>
//   mean <p values>
//   variance <k values>
//   component <p values>     (k lines)
//   note <text>              (optional)

inline void write_pca(std::ostream& out, const PcaModel& model) {
  out << "pca " << model.input_dim() << ' ' << model.k() << ' ' << model.requested_k << '\n';
  out << "mean";
  for (double v : model.mean) out << ' ' << format_double(v);
  out << "\nvariance";
  for (double v : model.explained_variance) out << ' ' << format_double(v);
  out << '\n';
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    out << "component";
    for (Eigen::Index c = 0; c < model.components.cols(); ++c)
      out << ' ' << format_double(model.components(r, c));
    out << '\n';
  }
  if (!model.note.empty()) out << "note " << model.note << '\n';
}

inline PcaModel read_pca(std::istream& in) {
  auto expect = [&](const std::string& tag) {
    std::string word;
    if (!(in >> word) || word != tag) throw DataError("PCA block: expected '" + tag + "'");
  };
  PcaModel model;
  std::size_t p = 0, k = 0;
  expect("pca");
  if (!(in >> p >> k >> model.requested_k)) throw DataError("PCA block: bad header");
  model.mean.resize(static_cast<Eigen::Index>(p));
  model.explained_variance.resize(static_cast<Eigen::Index>(k));
  model.components.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
  expect("mean");
  for (auto& v : model.mean) in >> v;
  expect("variance");
  for (auto& v : model.explained_variance) in >> v;
  for (std::size_t r = 0; r < k; ++r) {
    expect("component");
    for (std::size_t c = 0; c < p; ++c) in >> model.components(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  if (!in) throw DataError("PCA block truncated");
  const auto pos = in.tellg();
  std::string word;
  if (in >> word && word == "note") {
    std::getline(in >> std::ws, model.note);
  } else {
    in.clear();
    in.seekg(pos);
  }
  return model;
}

}  // namespace skillseries
