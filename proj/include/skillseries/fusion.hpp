#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/features.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

/// Least-squares combination w* = argmin |Y w - G|^2 of per-family score
/// predictions; no intercept.
struct FusionModel {
  std::vector<FeatureFamily> families;
  Eigen::VectorXd weights;
  double training_residual = 0.0;
};

/// Minimum-norm solution, so collinear or all-zero columns get the smallest
/// weights that still attain the optimum.
inline FusionModel fit_fusion(const Eigen::MatrixXd& Y, const Eigen::VectorXd& G,
                              std::vector<FeatureFamily> families) {
  if (Y.rows() != G.size()) throw DimMismatch("fusion: Y rows differ from ground-truth length");
  if (Y.cols() < 1 || Y.rows() < 1) throw DimMismatch("fusion needs at least one row and column");
  if (families.size() != static_cast<std::size_t>(Y.cols()))
    throw DimMismatch("fusion: family tag count differs from Y columns");
  FusionModel model;
  model.families = std::move(families);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Y);
  model.weights = cod.solve(G);
  model.training_residual = (Y * model.weights - G).squaredNorm();
  return model;
}

inline double fused_predict(const FusionModel& model, std::span<const double> row,
                            std::span<const FeatureFamily> row_families) {
  if (row.size() != model.families.size() || row_families.size() != model.families.size() ||
      !std::equal(row_families.begin(), row_families.end(), model.families.begin()))
    throw OrderMismatch("fusion row families do not match the fitted model");
  double out = 0.0;
  for (std::size_t f = 0; f < row.size(); ++f) out += model.weights(static_cast<Eigen::Index>(f)) * row[f];
  return out;
}

/// Per-criterion fusion design over a training fold. Y[c](i, f) is family f's
/// prediction of criterion c for training row i, made by a pipeline fitted
/// without any trial of row i's surgeon.
struct FusionTrainingSet {
  std::vector<FeatureFamily> families;
  std::vector<std::size_t> rows;  // dataset indices, row order of Y and G
  std::array<Eigen::MatrixXd, 7> Y;
  std::array<Eigen::VectorXd, 7> G;
  std::uint64_t inner_seed = 0;
};

/// Fits `family` on the dataset rows `fit_rows` and returns predictions for
/// `predict_rows`, one row per trial and one column per criterion (kAllCriteria order).
using FamilyPredictor = std::function<Eigen::MatrixXd(
    FeatureFamily family, const std::vector<std::size_t>& fit_rows,
    const std::vector<std::size_t>& predict_rows)>;

/// Inner leave-one-user-out over the training fold. The inner split is fully
/// determined by surgeon identity; `inner_seed` is carried into the result for
/// provenance.
inline FusionTrainingSet build_fusion_training_matrix(const Dataset& dataset,
                                                      const std::vector<std::size_t>& train_rows,
                                                      const std::vector<FeatureFamily>& families,
                                                      const FamilyPredictor& predictor,
                                                      std::uint64_t inner_seed = 0) {
  std::vector<std::string> surgeons;
  for (auto r : train_rows) {
    const auto& s = dataset[r].surgeon_id;
    if (std::find(surgeons.begin(), surgeons.end(), s) == surgeons.end()) surgeons.push_back(s);
  }
  if (surgeons.size() < 2)
    throw TooFewSurgeons("fusion weights need at least two surgeons in the training fold");
  if (families.empty()) throw BadParam("fusion needs at least one family");

  FusionTrainingSet out;
  out.families = families;
  out.rows = train_rows;
  out.inner_seed = inner_seed;
  const auto n = static_cast<Eigen::Index>(train_rows.size());
  const auto F = static_cast<Eigen::Index>(families.size());
  for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
    out.Y[c] = Eigen::MatrixXd::Zero(n, F);
    out.G[c].resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      out.G[c](i) = dataset[train_rows[static_cast<std::size_t>(i)]].labels.score(kAllCriteria[c]);
  }
  for (const auto& held_out : surgeons) {
    std::vector<std::size_t> fit_rows, predict_rows;
    std::vector<Eigen::Index> positions;
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      if (dataset[train_rows[i]].surgeon_id == held_out) {
        predict_rows.push_back(train_rows[i]);
        positions.push_back(static_cast<Eigen::Index>(i));
      } else {
        fit_rows.push_back(train_rows[i]);
      }
    }
    for (Eigen::Index f = 0; f < F; ++f) {
      const Eigen::MatrixXd pred = predictor(families[static_cast<std::size_t>(f)], fit_rows, predict_rows);
      if (pred.rows() != static_cast<Eigen::Index>(predict_rows.size()) || pred.cols() != 7)
        throw DimMismatch("family predictor returned a wrongly shaped matrix");
      for (std::size_t p = 0; p < positions.size(); ++p)
        for (std::size_t c = 0; c < 7; ++c)
          out.Y[c](positions[p], f) = pred(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

/// Columns of a family subset, in `subset` order.
inline Eigen::MatrixXd select_families(const Eigen::MatrixXd& Y, const std::vector<FeatureFamily>& all,
                                       const std::vector<FeatureFamily>& subset) {
  Eigen::MatrixXd out(Y.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t s = 0; s < subset.size(); ++s) {
    const auto it = std::find(all.begin(), all.end(), subset[s]);
    if (it == all.end()) throw OrderMismatch("family not present in fusion design");
    out.col(static_cast<Eigen::Index>(s)) = Y.col(it - all.begin());
  }
  return out;
}

/// Min-max scales each column (criterion) to [0,1]. A column with no spread maps to 1.
inline Eigen::MatrixXd scale_heatmap(const Eigen::MatrixXd& weights) {
  Eigen::MatrixXd out = weights;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double lo = out.col(c).minCoeff();
    const double hi = out.col(c).maxCoeff();
    if (hi > lo)
      out.col(c) = (out.col(c).array() - lo) / (hi - lo);
    else
      out.col(c).setOnes();
  }
  return out;
}

/// Rows = families, columns = RT..SH,GRS.
inline void write_heatmap_csv(std::ostream& out, const std::vector<FeatureFamily>& families,
                              const Eigen::MatrixXd& scaled) {
  out << "family";
  for (auto c : kAllCriteria) out << ',' << to_string(c);
  out << '\n';
  for (std::size_t f = 0; f < families.size(); ++f) {
    out << to_string(families[f]);
    for (Eigen::Index c = 0; c < scaled.cols(); ++c)
      out << ',' << format_double(scaled(static_cast<Eigen::Index>(f), c), 6);
    out << '\n';
  }
}

}  // namespace skillseries
