#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/features.hpp"
#include "skillseries/models.hpp"
#include "skillseries/reduce.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

/// PCA sizes and SVR settings for one feature family.
struct ModelParams {
  std::size_t k_classify = 40;
  std::size_t k_predict = 40;
  double C = 1.0;
  double epsilon = 0.1;
};

/// Tuned values used when nothing is overridden.
inline ModelParams default_model_params(FeatureFamily family) {
  switch (family) {
    case FeatureFamily::SMT: return {50, 10, 1e2, 0.1};
    case FeatureFamily::DCT: return {150, 1000, 1e-6, 0.1};
    case FeatureFamily::DFT: return {150, 250, 1e-6, 0.1};
    case FeatureFamily::ApEn: return {40, 40, 1e4, 0.1};
  }
  return {};
}

inline std::map<FeatureFamily, ModelParams> default_model_table() {
  std::map<FeatureFamily, ModelParams> t;
  for (auto f : kAllFamilies) t[f] = default_model_params(f);
  return t;
}

/// Feature extractor settings, PCA, and the regressors/classifier of one family.
struct TrainedPipeline {
  FeatureFamily family = FeatureFamily::DCT;
  FeatureConfig features;
  ModelParams params;
  std::optional<PcaModel> regression_pca;
  std::map<Criterion, LinearSvrModel> regressors;
  std::optional<PcaModel> classification_pca;
  std::optional<KnnModel> classifier;

  std::uint64_t params_hash() const {
    std::ostringstream s;
    s << features.canonical(family) << "|kc=" << params.k_classify << ",kp=" << params.k_predict
      << ",C=" << format_double(params.C) << ",eps=" << format_double(params.epsilon);
    return fnv1a(s.str());
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& features_row, Criterion c) const {
    if (!regression_pca) throw EmptyModel("pipeline has no regression stage");
    const auto it = regressors.find(c);
    if (it == regressors.end())
      throw EmptyModel("pipeline has no regressor for " + std::string(to_string(c)));
    return svr_predict(it->second, pca_transform(*regression_pca, features_row));
  }

  SkillLevel classify(const Eigen::Ref<const Eigen::VectorXd>& features_row) const {
    if (!classification_pca || !classifier) throw EmptyModel("pipeline has no classifier");
    return knn_classify(*classifier, pca_transform(*classification_pca, features_row));
  }
};

/// Feature matrix of one family: row i belongs to `trial_ids[i]`.
struct FeatureTable {
  FeatureFamily family = FeatureFamily::DCT;
  std::vector<std::string> trial_ids;
  Eigen::MatrixXd rows;
};

inline FeatureTable build_feature_table(const Dataset& ds, FeatureFamily family,
                                        const FeatureConfig& config) {
  FeatureTable table;
  table.family = family;
  std::vector<FeatureVector> vecs(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    try {
      vecs[i] = extract_features(ds[i], family, config);
    } catch (const Error& e) {
      throw DataError(ds[i].id() + " (" + std::string(to_string(family)) + "): " + e.what());
    }
  });
  if (vecs.empty()) return table;
  const std::size_t dim = vecs.front().values.size();
  table.rows.resize(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    if (vecs[i].values.size() != dim)
      throw DimMismatch(ds[i].id() + ": " + std::string(to_string(family)) +
                        " feature length differs across trials (channel counts differ?)");
    table.rows.row(static_cast<Eigen::Index>(i)) = vecs[i].view().transpose();
    table.trial_ids.push_back(vecs[i].trial_id);
  }
  return table;
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct TrainOptions {
  bool regression = true;
  bool classification = true;
  std::vector<Criterion> criteria{kAllCriteria.begin(), kAllCriteria.end()};
  SvrOptions svr;
};

/// Fits PCA + per-criterion SVRs and/or PCA + 1-NN on the given rows.
inline TrainedPipeline train_pipeline(FeatureFamily family, const FeatureConfig& features,
                                      const ModelParams& params, const Eigen::MatrixXd& X,
                                      const std::vector<SkillLabels>& labels,
                                      const TrainOptions& options = {}) {
  if (static_cast<std::size_t>(X.rows()) != labels.size())
    throw DimMismatch("training rows and labels differ in count");
  TrainedPipeline p;
  p.family = family;
  p.features = features;
  p.params = params;
  if (options.regression) {
    p.regression_pca = pca_fit(X, params.k_predict);
    const Eigen::MatrixXd Z = pca_transform_rows(*p.regression_pca, X);
    for (auto c : options.criteria) {
      Eigen::VectorXd y(X.rows());
      for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = labels[static_cast<std::size_t>(i)].score(c);
      p.regressors[c] = svr_fit(Z, y, params.C, params.epsilon, options.svr);
    }
  }
  if (options.classification) {
    p.classification_pca = pca_fit(X, params.k_classify);
    std::vector<SkillLevel> levels;
    for (const auto& l : labels) levels.push_back(l.self_proclaimed);
    p.classifier = KnnModel(pca_transform_rows(*p.classification_pca, X), std::move(levels));
  }
  return p;
}

// Bundle format (text):
//   skillseries-pipeline 1
//   family <name>
//   features <canonical feature params>
//   params <k_classify> <k_predict> <C> <epsilon>
//   params_hash <hex>
//   regression <0|1>  [pca block] criteria <count> { criterion <name> [svr block] }
//   classification <0|1> [pca block] knn <n> <k> { <label> <k values> }

inline void write_pipeline(std::ostream& out, const TrainedPipeline& p) {
  out << "skillseries-pipeline 1\n";
  out << "family " << to_string(p.family) << '\n';
  out << "features q_dct=" << p.features.dct_q << " q_dft=" << p.features.dft_q
      << " apen_m=" << p.features.apen.m << " apen_tau=" << p.features.apen.tau << " apen_mode="
      << (p.features.apen.radius_mode == RadiusMode::StdScaled ? "std" : "abs")
      << " smt_windows=" << p.features.smt.n_windows << " smt_levels=" << p.features.smt.gray_levels
      << " radii=" << p.features.apen.radii.size();
  for (double r : p.features.apen.radii) out << ' ' << format_double(r);
  out << '\n';
  out << "params " << p.params.k_classify << ' ' << p.params.k_predict << ' '
      << format_double(p.params.C) << ' ' << format_double(p.params.epsilon) << '\n';
  out << "params_hash " << hex64(p.params_hash()) << '\n';
  out << "regression " << (p.regression_pca ? 1 : 0) << '\n';
  if (p.regression_pca) {
    write_pca(out, *p.regression_pca);
    out << "criteria " << p.regressors.size() << '\n';
    for (const auto& [c, m] : p.regressors) {
      out << "criterion " << to_string(c) << '\n';
      write_svr(out, m);
    }
  }
  out << "classification " << (p.classifier ? 1 : 0) << '\n';
  if (p.classifier && p.classification_pca) {
    write_pca(out, *p.classification_pca);
    const auto& pts = p.classifier->train_points;
    out << "knn " << pts.rows() << ' ' << pts.cols() << '\n';
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      out << to_string(p.classifier->train_labels[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < pts.cols(); ++j) out << ' ' << format_double(pts(i, j));
      out << '\n';
    }
  }
}

inline TrainedPipeline read_pipeline(std::istream& in) {
  auto expect = [&](const std::string& tag) {
    std::string word;
    if (!(in >> word) || word != tag) throw DataError("pipeline bundle: expected '" + tag + "'");
  };
  auto keyed = [&](const std::string& key) {
    std::string word;
    in >> word;
    if (word.rfind(key + "=", 0) != 0) throw DataError("pipeline bundle: expected " + key);
    return word.substr(key.size() + 1);
  };
  TrainedPipeline p;
  int version = 0;
  expect("skillseries-pipeline");
  in >> version;
  if (version != 1) throw DataError("unsupported pipeline bundle version");
  std::string word;
  expect("family");
  in >> word;
  const auto fam = parse_family(word);
  if (!fam) throw DataError("pipeline bundle: unknown family " + word);
  p.family = *fam;
  expect("features");
  p.features.dct_q = std::stoul(keyed("q_dct"));
  p.features.dft_q = std::stoul(keyed("q_dft"));
  p.features.apen.m = std::stoi(keyed("apen_m"));
  p.features.apen.tau = std::stoi(keyed("apen_tau"));
  p.features.apen.radius_mode = keyed("apen_mode") == "abs" ? RadiusMode::Absolute : RadiusMode::StdScaled;
  p.features.smt.n_windows = std::stoul(keyed("smt_windows"));
  p.features.smt.gray_levels = std::stoi(keyed("smt_levels"));
  const auto n_radii = std::stoul(keyed("radii"));
  p.features.apen.radii.assign(n_radii, 0.0);
  for (auto& r : p.features.apen.radii) in >> r;
  expect("params");
  in >> p.params.k_classify >> p.params.k_predict >> p.params.C >> p.params.epsilon;
  expect("params_hash");
  in >> word;
  if (word != hex64(p.params_hash())) throw DataError("pipeline bundle: params hash mismatch");
  int flag = 0;
  expect("regression");
  in >> flag;
  if (flag) {
    p.regression_pca = read_pca(in);
    std::size_t count = 0;
    expect("criteria");
    in >> count;
    for (std::size_t i = 0; i < count; ++i) {
      expect("criterion");
      in >> word;
      const auto c = parse_criterion(word);
      if (!c) throw DataError("pipeline bundle: unknown criterion " + word);
      p.regressors[*c] = read_svr(in);
    }
  }
  expect("classification");
  in >> flag;
  if (flag) {
    p.classification_pca = read_pca(in);
    Eigen::Index n = 0, k = 0;
    expect("knn");
    in >> n >> k;
    Eigen::MatrixXd pts(n, k);
    std::vector<SkillLevel> labels;
    for (Eigen::Index i = 0; i < n; ++i) {
      in >> word;
      const auto l = parse_skill_level(word);
      if (!l) throw DataError("pipeline bundle: bad skill label " + word);
      labels.push_back(*l);
      for (Eigen::Index j = 0; j < k; ++j) in >> pts(i, j);
    }
    p.classifier = KnnModel(std::move(pts), std::move(labels));
  }
  if (!in) throw DataError("pipeline bundle truncated");
  return p;
}

}  // namespace skillseries
