#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/features.hpp"
#include "skillseries/fusion.hpp"
#include "skillseries/pipeline.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

// ---------------------------------------------------------------------------
// Splits

enum class Scheme { LOSO, LOUO };

inline std::string_view to_string(Scheme s) { return s == Scheme::LOSO ? "LOSO" : "LOUO"; }

inline std::optional<Scheme> parse_scheme(std::string_view s) {
  const auto l = detail::lower(s);
  if (l == "loso") return Scheme::LOSO;
  if (l == "louo") return Scheme::LOUO;
  return std::nullopt;
}

struct Fold {
  std::vector<std::size_t> train;  // dataset indices
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

struct SplitPlan {
  Scheme scheme = Scheme::LOSO;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

inline std::vector<std::string> trial_ids(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(ds[r].id());
  return out;
}

/// LOSO: per repeat r, one trial per surgeon drawn with an RNG seeded by
/// seed + r. LOUO: one fold per surgeon, independent of the seed.
inline SplitPlan make_splits(const Dataset& ds, Scheme scheme, std::size_t repeats = 20,
                             std::uint64_t seed = 0) {
  if (ds.size() == 0) throw InsufficientTrials("dataset has no trials");
  const auto surgeons = ds.surgeons();
  std::vector<std::vector<std::size_t>> by_surgeon(surgeons.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto it = std::find(surgeons.begin(), surgeons.end(), ds[i].surgeon_id);
    by_surgeon[static_cast<std::size_t>(it - surgeons.begin())].push_back(i);
  }

  SplitPlan plan;
  plan.scheme = scheme;
  plan.seed = seed;
  auto complement = [&](const std::vector<std::size_t>& test) {
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (std::find(test.begin(), test.end(), i) == test.end()) train.push_back(i);
    return train;
  };

  if (scheme == Scheme::LOUO) {
    if (surgeons.size() < 2)
      throw InsufficientTrials("LOUO needs at least two surgeons; dataset has " +
                               std::to_string(surgeons.size()));
    plan.repeats = 1;
    for (std::size_t s = 0; s < surgeons.size(); ++s) {
      Fold f;
      f.test = by_surgeon[s];
      f.train = complement(f.test);
      f.seed = seed + s;
      plan.folds.push_back(std::move(f));
    }
    return plan;
  }

  if (repeats < 1) throw BadParam("LOSO needs repeats >= 1");
  for (std::size_t s = 0; s < surgeons.size(); ++s)
    if (by_surgeon[s].size() < 2)
      throw InsufficientTrials("LOSO needs at least two trials per surgeon; surgeon " + surgeons[s] +
                               " has " + std::to_string(by_surgeon[s].size()));
  plan.repeats = repeats;
  for (std::size_t r = 0; r < repeats; ++r) {
    Fold f;
    f.seed = seed + r;
    std::mt19937_64 rng(f.seed);
    for (const auto& rows : by_surgeon) f.test.push_back(rows[rng() % rows.size()]);
    std::sort(f.test.begin(), f.test.end());
    f.train = complement(f.test);
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Spearman rank correlation

enum class PValueMethod { TDistribution, Permutation };

struct SpearmanResult {
  double rho = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;  // a constant input; rho is undefined
  std::size_t n = 0;
};

namespace detail {

/// Twice the 1-based average rank, so every entry is an integer.
inline std::vector<double> doubled_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = static_cast<double>(i + j + 2);
    i = j + 1;
  }
  return out;
}

// Centered doubled ranks are integers, so these sums are exact.
struct RankSums {
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
};

inline RankSums rank_sums(const std::vector<double>& ra, const std::vector<double>& rb) {
  const double center = static_cast<double>(ra.size() + 1);
  RankSums s;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double x = ra[i] - center, y = rb[i] - center;
    s.sxy += x * y;
    s.sxx += x * x;
    s.syy += y * y;
  }
  return s;
}

inline double permutation_p_value(const std::vector<double>& ra, std::vector<double> rb, double sxy) {
  const double target = std::abs(sxy);
  const std::size_t n = ra.size();
  std::size_t hits = 0, total = 0;
  if (n <= 10) {
    std::sort(rb.begin(), rb.end());
    do {
      ++total;
      if (std::abs(rank_sums(ra, rb).sxy) >= target) ++hits;
    } while (std::next_permutation(rb.begin(), rb.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  constexpr std::size_t kDraws = 100000;
  std::mt19937_64 rng(0x5eed5eedULL);
  for (std::size_t d = 0; d < kDraws; ++d) {
    std::shuffle(rb.begin(), rb.end(), rng);
    if (std::abs(rank_sums(ra, rb).sxy) >= target) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(kDraws + 1);
}

}  // namespace detail

inline std::vector<double> average_ranks(std::span<const double> v) {
  auto r = detail::doubled_ranks(v);
  for (auto& x : r) x *= 0.5;
  return r;
}

/// Spearman rho with average ranks for ties. A constant input is reported as
/// a flagged NaN rather than thrown.
inline SpearmanResult spearman_flagged(std::span<const double> a, std::span<const double> b,
                                       PValueMethod method = PValueMethod::TDistribution) {
  if (a.size() != b.size()) throw DimMismatch("spearman: inputs differ in length");
  if (a.size() < 2) throw DegenerateInput("spearman needs at least two pairs");
  SpearmanResult out;
  out.n = a.size();
  const auto ra = detail::doubled_ranks(a);
  const auto rb = detail::doubled_ranks(b);
  const auto s = detail::rank_sums(ra, rb);
  if (s.sxx == 0.0 || s.syy == 0.0) {
    out.degenerate = true;
    return out;
  }
  out.rho = std::clamp(s.sxy / std::sqrt(s.sxx * s.syy), -1.0, 1.0);
  if (out.n < 3) return out;
  if (method == PValueMethod::Permutation) {
    out.p_value = detail::permutation_p_value(ra, rb, s.sxy);
  } else if (std::abs(out.rho) == 1.0) {
    out.p_value = 0.0;
  } else {
    const double df = static_cast<double>(out.n - 2);
    const double t = out.rho * std::sqrt(df / (1.0 - out.rho * out.rho));
    const boost::math::students_t dist(df);
    out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  return out;
}

inline SpearmanResult spearman(std::span<const double> a, std::span<const double> b,
                               PValueMethod method = PValueMethod::TDistribution) {
  auto r = spearman_flagged(a, b, method);
  if (r.degenerate) throw DegenerateInput("spearman: constant input, rho undefined");
  return r;
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class RhoMode { Pooled, FoldMean };

inline std::string_view to_string(RhoMode m) { return m == RhoMode::Pooled ? "pooled" : "fold-mean"; }

inline std::optional<RhoMode> parse_rho_mode(std::string_view s) {
  const auto l = detail::lower(s);
  if (l == "pooled") return RhoMode::Pooled;
  if (l == "fold-mean" || l == "foldmean" || l == "mean") return RhoMode::FoldMean;
  return std::nullopt;
}

using FeatureSet = std::vector<FeatureFamily>;

inline std::string feature_set_name(const FeatureSet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += '+';
    out += to_string(set[i]);
  }
  return out;
}

inline FeatureSet parse_feature_set(std::string_view spec) {
  FeatureSet out;
  for (const auto& part : detail::split_char(spec, '+')) {
    const auto f = parse_family(detail::trim(part));
    if (!f) throw BadParam("unknown feature family '" + part + "'");
    if (std::find(out.begin(), out.end(), *f) != out.end())
      throw BadParam("feature family listed twice in '" + std::string(spec) + "'");
    out.push_back(*f);
  }
  if (out.empty()) throw BadParam("empty feature set");
  return out;
}

/// The four single families followed by the seven fused combinations.
inline std::vector<FeatureSet> default_feature_sets() {
  using F = FeatureFamily;
  return {{F::SMT},
          {F::DCT},
          {F::DFT},
          {F::ApEn},
          {F::SMT, F::DCT},
          {F::SMT, F::DFT},
          {F::SMT, F::ApEn},
          {F::SMT, F::DCT, F::DFT},
          {F::DCT, F::DFT},
          {F::DCT, F::DFT, F::ApEn},
          {F::SMT, F::DCT, F::DFT, F::ApEn}};
}

struct FitEvent {
  std::size_t fold = 0;
  std::string stage;  // "regression", "classification", "fusion-inner"
  FeatureFamily family = FeatureFamily::DCT;
  const std::vector<std::size_t>& fit_rows;
};

/// Called for every model fit; may be invoked concurrently from several folds.
using FitObserver = std::function<void(const FitEvent&)>;

/// Fits `family` on `fit_rows` and returns predicted levels for `predict_rows`.
using ClassifierBackend = std::function<std::vector<SkillLevel>(
    FeatureFamily family, const std::vector<std::size_t>& fit_rows,
    const std::vector<std::size_t>& predict_rows)>;

struct ExperimentConfig {
  Scheme scheme = Scheme::LOSO;
  std::size_t repeats = 20;
  std::uint64_t seed = 0;
  std::vector<FeatureSet> feature_sets = default_feature_sets();
  std::vector<FeatureFamily> classification_families{kAllFamilies.begin(), kAllFamilies.end()};
  FeatureConfig features;
  std::map<FeatureFamily, ModelParams> params = default_model_table();
  RhoMode rho_mode = RhoMode::Pooled;
  PValueMethod p_method = PValueMethod::TDistribution;
  SvrOptions svr;
  std::size_t max_threads = 0;
  FitObserver observer;
  // Replace the PCA + SVR / PCA + 1-NN models; mainly for plumbing checks.
  FamilyPredictor regression_backend;
  ClassifierBackend classification_backend;
};

// ---------------------------------------------------------------------------
// Report

struct CriterionResult {
  double rho = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
  std::size_t n = 0;
  std::size_t degenerate_folds = 0;  // fold-mean mode only
};

struct FeatureSetResult {
  FeatureSet families;
  std::string name;
  std::array<CriterionResult, 7> criteria;  // kAllCriteria order
  double osats_rho = std::numeric_limits<double>::quiet_NaN();
  std::size_t osats_used = 0;  // non-degenerate criteria in the mean
  bool osats_significant = false;

  const CriterionResult& grs() const { return criteria[6]; }
};

struct ClassificationResult {
  FeatureFamily family = FeatureFamily::ApEn;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;  // percent
};

/// One held-out prediction. `predicted` is the raw regressor output used for
/// every statistic; clip_score gives the display value.
struct PredictionRecord {
  std::string feature_set;
  std::size_t fold = 0;
  std::string trial;
  Criterion criterion = Criterion::GRS;
  double truth = 0.0;
  double predicted = 0.0;
};

/// Clamps to the label range: [1,5] per OSATS item, [6,30] for GRS.
inline double clip_score(Criterion c, double v) {
  return c == Criterion::GRS ? std::clamp(v, 6.0, 30.0) : std::clamp(v, 1.0, 5.0);
}

struct WeightHeatmap {
  FeatureSet families;
  std::string name;
  Eigen::MatrixXd mean_weights;  // families x 7, averaged over folds
  Eigen::MatrixXd scaled;
};

struct ExperimentReport {
  std::string task;
  Scheme scheme = Scheme::LOSO;
  RhoMode rho_mode = RhoMode::Pooled;
  std::uint64_t seed = 0;
  std::size_t repeats = 0;
  std::size_t n_trials = 0;
  std::size_t n_surgeons = 0;
  std::vector<std::uint64_t> fold_seeds;
  std::vector<FeatureSetResult> prediction;
  std::vector<ClassificationResult> classification;
  std::vector<WeightHeatmap> heatmaps;
  std::vector<PredictionRecord> predictions;
  std::map<std::string, std::string> params_hashes;
  std::vector<std::string> notes;
  std::size_t degenerate_cells = 0;

  const FeatureSetResult* find(const std::string& name) const {
    for (const auto& r : prediction)
      if (r.name == name) return &r;
    return nullptr;
  }
  const ClassificationResult* find(FeatureFamily f) const {
    for (const auto& r : classification)
      if (r.family == f) return &r;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Runner

namespace detail {

struct FoldOutput {
  std::vector<std::size_t> test;
  std::map<FeatureFamily, Eigen::MatrixXd> family_predictions;  // test x 7
  std::map<std::string, Eigen::MatrixXd> fused_predictions;     // test x 7
  std::map<std::string, Eigen::MatrixXd> fused_weights;         // F x 7
  std::map<FeatureFamily, std::vector<SkillLevel>> classified;
};

inline ModelParams params_for(const ExperimentConfig& cfg, FeatureFamily f) {
  const auto it = cfg.params.find(f);
  return it == cfg.params.end() ? default_model_params(f) : it->second;
}

inline std::string task_label(const Dataset& ds) {
  if (ds.task_filter()) return std::string(to_string(*ds.task_filter()));
  std::set<Task> tasks;
  for (const auto& t : ds.trials()) tasks.insert(t.task);
  if (tasks.size() == 1) return std::string(to_string(*tasks.begin()));
  return "mixed";
}

inline CriterionResult summarize(const std::vector<double>& pred, const std::vector<double>& truth,
                                 PValueMethod method) {
  CriterionResult c;
  const auto r = spearman_flagged(pred, truth, method);
  c.rho = r.rho;
  c.p_value = r.p_value;
  c.degenerate = r.degenerate;
  c.n = r.n;
  return c;
}

}  // namespace detail

/// Every fit sees only its fold's training rows. Combinations of two or more
/// families are fused with weights learned from inner leave-one-user-out
/// predictions over the training fold; single families are scored directly.
inline ExperimentReport run_experiment(const Dataset& ds, const ExperimentConfig& cfg) {
  const SplitPlan plan = make_splits(ds, cfg.scheme, cfg.repeats, cfg.seed);
  if (cfg.feature_sets.empty() && cfg.classification_families.empty())
    throw BadParam("experiment has nothing to evaluate");

  std::vector<FeatureFamily> regression_families;
  for (const auto& set : cfg.feature_sets) {
    if (set.empty()) throw BadParam("empty feature set");
    for (auto f : set)
      if (std::find(regression_families.begin(), regression_families.end(), f) == regression_families.end())
        regression_families.push_back(f);
  }

  std::mutex notes_mutex;
  std::set<std::string> notes;
  std::map<FeatureFamily, FeatureTable> tables;
  std::set<FeatureFamily> needed;
  if (!cfg.regression_backend) needed.insert(regression_families.begin(), regression_families.end());
  if (!cfg.classification_backend)
    needed.insert(cfg.classification_families.begin(), cfg.classification_families.end());
  for (auto f : needed) tables[f] = build_feature_table(ds, f, cfg.features);

  FamilyPredictor regress = cfg.regression_backend;
  if (!regress) {
    regress = [&](FeatureFamily family, const std::vector<std::size_t>& fit_rows,
                  const std::vector<std::size_t>& predict_rows) {
      const auto& table = tables.at(family);
      std::vector<SkillLabels> labels;
      for (auto r : fit_rows) labels.push_back(ds[r].labels);
      TrainOptions opts;
      opts.classification = false;
      opts.svr = cfg.svr;
      const auto p = train_pipeline(family, cfg.features, detail::params_for(cfg, family),
                                    gather_rows(table.rows, fit_rows), labels, opts);
      if (!p.regression_pca->note.empty()) {
        std::lock_guard lock(notes_mutex);
        notes.insert(std::string(to_string(family)) + " regression PCA: " + p.regression_pca->note);
      }
      Eigen::MatrixXd out(static_cast<Eigen::Index>(predict_rows.size()), 7);
      for (std::size_t i = 0; i < predict_rows.size(); ++i) {
        const Eigen::VectorXd x = table.rows.row(static_cast<Eigen::Index>(predict_rows[i])).transpose();
        for (std::size_t c = 0; c < 7; ++c)
          out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = p.predict(x, kAllCriteria[c]);
      }
      return out;
    };
  }
  ClassifierBackend classify = cfg.classification_backend;
  if (!classify) {
    classify = [&](FeatureFamily family, const std::vector<std::size_t>& fit_rows,
                   const std::vector<std::size_t>& predict_rows) {
      const auto& table = tables.at(family);
      std::vector<SkillLabels> labels;
      for (auto r : fit_rows) labels.push_back(ds[r].labels);
      TrainOptions opts;
      opts.regression = false;
      const auto p = train_pipeline(family, cfg.features, detail::params_for(cfg, family),
                                    gather_rows(table.rows, fit_rows), labels, opts);
      if (!p.classification_pca->note.empty()) {
        std::lock_guard lock(notes_mutex);
        notes.insert(std::string(to_string(family)) + " classification PCA: " + p.classification_pca->note);
      }
      std::vector<SkillLevel> out;
      for (auto r : predict_rows)
        out.push_back(p.classify(table.rows.row(static_cast<Eigen::Index>(r)).transpose()));
      return out;
    };
  }
  auto observe = [&](std::size_t fold, const char* stage, FeatureFamily f,
                     const std::vector<std::size_t>& rows) {
    if (cfg.observer) cfg.observer(FitEvent{fold, stage, f, rows});
  };

  std::vector<FeatureFamily> fusion_families;
  for (const auto& set : cfg.feature_sets)
    if (set.size() > 1)
      for (auto f : set)
        if (std::find(fusion_families.begin(), fusion_families.end(), f) == fusion_families.end())
          fusion_families.push_back(f);

  std::vector<detail::FoldOutput> outputs(plan.folds.size());
  parallel_for(
      plan.folds.size(),
      [&](std::size_t k) {
        const Fold& fold = plan.folds[k];
        auto& out = outputs[k];
        out.test = fold.test;
        try {
          for (auto f : regression_families) {
            observe(k, "regression", f, fold.train);
            out.family_predictions[f] = regress(f, fold.train, fold.test);
          }
          if (!fusion_families.empty()) {
            const FamilyPredictor inner = [&](FeatureFamily f, const std::vector<std::size_t>& fit,
                                              const std::vector<std::size_t>& pred) {
              observe(k, "fusion-inner", f, fit);
              return regress(f, fit, pred);
            };
            const auto fts = build_fusion_training_matrix(ds, fold.train, fusion_families, inner, fold.seed);
            for (const auto& set : cfg.feature_sets) {
              if (set.size() < 2) continue;
              const auto name = feature_set_name(set);
              Eigen::MatrixXd W(static_cast<Eigen::Index>(set.size()), 7);
              Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fold.test.size()), 7);
              for (std::size_t c = 0; c < 7; ++c) {
                const auto model = fit_fusion(select_families(fts.Y[c], fusion_families, set), fts.G[c], set);
                W.col(static_cast<Eigen::Index>(c)) = model.weights;
                for (std::size_t s = 0; s < set.size(); ++s)
                  P.col(static_cast<Eigen::Index>(c)) +=
                      model.weights(static_cast<Eigen::Index>(s)) *
                      out.family_predictions.at(set[s]).col(static_cast<Eigen::Index>(c));
              }
              out.fused_weights[name] = W;
              out.fused_predictions[name] = P;
            }
          }
          for (auto f : cfg.classification_families) {
            observe(k, "classification", f, fold.train);
            out.classified[f] = classify(f, fold.train, fold.test);
          }
        } catch (const Error& e) {
          std::throw_with_nested(ContextError(std::string(to_string(plan.scheme)) + " fold " +
                                                  std::to_string(k) + " (seed " +
                                                  std::to_string(fold.seed) + ")",
                                              e));
        }
      },
      cfg.max_threads);

  ExperimentReport report;
  report.task = detail::task_label(ds);
  report.scheme = plan.scheme;
  report.rho_mode = cfg.rho_mode;
  report.seed = cfg.seed;
  report.repeats = plan.repeats;
  report.n_trials = ds.size();
  report.n_surgeons = ds.surgeons().size();
  for (const auto& f : plan.folds) report.fold_seeds.push_back(f.seed);
  for (auto f : needed.empty() ? std::set<FeatureFamily>(regression_families.begin(), regression_families.end())
                               : needed) {
    TrainedPipeline p;
    p.family = f;
    p.features = cfg.features;
    p.params = detail::params_for(cfg, f);
    report.params_hashes[std::string(to_string(f))] = hex64(p.params_hash());
  }

  auto predictions_of = [&](const detail::FoldOutput& o, const FeatureSet& set) -> const Eigen::MatrixXd& {
    return set.size() == 1 ? o.family_predictions.at(set.front())
                           : o.fused_predictions.at(feature_set_name(set));
  };
  for (const auto& set : cfg.feature_sets)
    for (std::size_t k = 0; k < outputs.size(); ++k) {
      const auto& P = predictions_of(outputs[k], set);
      for (std::size_t i = 0; i < outputs[k].test.size(); ++i)
        for (std::size_t c = 0; c < 7; ++c) {
          const auto& trial = ds[outputs[k].test[i]];
          report.predictions.push_back({feature_set_name(set), k, trial.id(), kAllCriteria[c],
                                        trial.labels.score(kAllCriteria[c]),
                                        P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))});
        }
    }

  for (const auto& set : cfg.feature_sets) {
    FeatureSetResult r;
    r.families = set;
    r.name = feature_set_name(set);
    for (std::size_t c = 0; c < 7; ++c) {
      auto& cell = r.criteria[c];
      if (cfg.rho_mode == RhoMode::Pooled) {
        std::vector<double> pred, truth;
        for (const auto& o : outputs) {
          const auto& P = predictions_of(o, set);
          for (std::size_t i = 0; i < o.test.size(); ++i) {
            pred.push_back(P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
            truth.push_back(ds[o.test[i]].labels.score(kAllCriteria[c]));
          }
        }
        cell = detail::summarize(pred, truth, cfg.p_method);
      } else {
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto& o : outputs) {
          const auto& P = predictions_of(o, set);
          std::vector<double> pred, truth;
          for (std::size_t i = 0; i < o.test.size(); ++i) {
            pred.push_back(P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
            truth.push_back(ds[o.test[i]].labels.score(kAllCriteria[c]));
          }
          cell.n += pred.size();
          const auto s = pred.size() >= 2 ? spearman_flagged(pred, truth) : SpearmanResult{};
          if (pred.size() < 2 || s.degenerate) {
            ++cell.degenerate_folds;
          } else {
            sum += s.rho;
            ++used;
          }
        }
        if (used) cell.rho = sum / static_cast<double>(used);
        else cell.degenerate = true;
      }
      if (cell.degenerate) ++report.degenerate_cells;
    }
    double sum = 0.0;
    bool all_significant = true;
    for (std::size_t c = 0; c < 6; ++c) {
      const auto& cell = r.criteria[c];
      if (cell.degenerate) continue;
      sum += cell.rho;
      ++r.osats_used;
      if (!(cell.p_value < 0.05)) all_significant = false;
    }
    if (r.osats_used) r.osats_rho = sum / static_cast<double>(r.osats_used);
    r.osats_significant = r.osats_used == 6 && all_significant;
    report.prediction.push_back(std::move(r));
  }

  for (auto f : cfg.classification_families) {
    ClassificationResult r;
    r.family = f;
    for (const auto& o : outputs) {
      const auto& labels = o.classified.at(f);
      for (std::size_t i = 0; i < o.test.size(); ++i) {
        ++r.total;
        if (labels[i] == ds[o.test[i]].labels.self_proclaimed) ++r.correct;
      }
    }
    r.accuracy = r.total ? 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
    report.classification.push_back(r);
  }

  for (const auto& set : cfg.feature_sets) {
    if (set.size() < 2) continue;
    WeightHeatmap h;
    h.families = set;
    h.name = feature_set_name(set);
    h.mean_weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(set.size()), 7);
    for (const auto& o : outputs) h.mean_weights += o.fused_weights.at(h.name);
    h.mean_weights /= static_cast<double>(outputs.size());
    h.scaled = scale_heatmap(h.mean_weights);
    report.heatmaps.push_back(std::move(h));
  }

  report.notes.assign(notes.begin(), notes.end());
  if (cfg.rho_mode == RhoMode::Pooled)
    report.notes.insert(report.notes.begin(), "rho computed on test predictions pooled across folds");
  else
    report.notes.insert(report.notes.begin(),
                        "rho averaged over folds; degenerate folds excluded; p-values not computed");
  return report;
}

// ---------------------------------------------------------------------------
// Report output

namespace detail {

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
}

inline std::string rho_text(double rho, bool significant) {
  if (!std::isfinite(rho)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << rho << (significant ? "*" : "");
  return s.str();
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace detail

inline nlohmann::json report_json(const ExperimentReport& r) {
  using detail::number_or_null;
  nlohmann::json j;
  j["task"] = r.task;
  j["scheme"] = std::string(to_string(r.scheme));
  j["rho_mode"] = std::string(to_string(r.rho_mode));
  j["seed"] = r.seed;
  j["repeats"] = r.repeats;
  j["n_trials"] = r.n_trials;
  j["n_surgeons"] = r.n_surgeons;
  j["fold_seeds"] = r.fold_seeds;
  j["params_hashes"] = r.params_hashes;
  j["notes"] = r.notes;
  j["degenerate_cells"] = r.degenerate_cells;
  auto& pred = j["prediction"] = nlohmann::json::array();
  for (const auto& fs : r.prediction) {
    nlohmann::json e;
    e["feature_set"] = fs.name;
    e["osats_rho"] = number_or_null(fs.osats_rho);
    e["osats_criteria_used"] = fs.osats_used;
    for (std::size_t c = 0; c < 7; ++c) {
      const auto& cell = fs.criteria[c];
      nlohmann::json x;
      x["rho"] = number_or_null(cell.rho);
      x["p_value"] = number_or_null(cell.p_value);
      x["degenerate"] = cell.degenerate;
      x["n"] = cell.n;
      if (r.rho_mode == RhoMode::FoldMean) x["degenerate_folds"] = cell.degenerate_folds;
      e["criteria"][std::string(to_string(kAllCriteria[c]))] = x;
    }
    pred.push_back(e);
  }
  auto& cls = j["classification"] = nlohmann::json::array();
  for (const auto& c : r.classification)
    cls.push_back({{"family", std::string(to_string(c.family))},
                   {"accuracy", c.accuracy},
                   {"correct", c.correct},
                   {"total", c.total}});
  auto& heat = j["fusion_weights"] = nlohmann::json::array();
  for (const auto& h : r.heatmaps) {
    nlohmann::json e;
    e["feature_set"] = h.name;
    for (Eigen::Index f = 0; f < h.mean_weights.rows(); ++f) {
      const auto fam = std::string(to_string(h.families[static_cast<std::size_t>(f)]));
      for (std::size_t c = 0; c < 7; ++c) {
        const auto crit = std::string(to_string(kAllCriteria[c]));
        e["mean"][fam][crit] = h.mean_weights(f, static_cast<Eigen::Index>(c));
        e["scaled"][fam][crit] = h.scaled(f, static_cast<Eigen::Index>(c));
      }
    }
    heat.push_back(e);
  }
  return j;
}

/// Mean over reports of the same scheme (one per task) of OSATS and GRS rho.
struct TaskAverage {
  double osats = std::numeric_limits<double>::quiet_NaN();
  double grs = std::numeric_limits<double>::quiet_NaN();
};

inline TaskAverage average_over_tasks(const std::vector<ExperimentReport>& reports,
                                      const std::string& feature_set, Scheme scheme) {
  double so = 0.0, sg = 0.0;
  std::size_t no = 0, ng = 0;
  for (const auto& r : reports) {
    if (r.scheme != scheme) continue;
    const auto* p = r.find(feature_set);
    if (!p) continue;
    if (std::isfinite(p->osats_rho)) so += p->osats_rho, ++no;
    if (std::isfinite(p->grs().rho)) sg += p->grs().rho, ++ng;
  }
  TaskAverage a;
  if (no) a.osats = so / static_cast<double>(no);
  if (ng) a.grs = sg / static_cast<double>(ng);
  return a;
}

/// Header `feature_set,fold,trial,criterion,truth,predicted,predicted_clipped`.
inline void write_predictions_csv(std::ostream& out, const ExperimentReport& r) {
  out << "feature_set,fold,trial,criterion,truth,predicted,predicted_clipped\n";
  for (const auto& p : r.predictions)
    out << p.feature_set << ',' << p.fold << ',' << p.trial << ',' << to_string(p.criterion) << ','
        << format_double(p.truth) << ',' << format_double(p.predicted) << ','
        << format_double(clip_score(p.criterion, p.predicted)) << '\n';
}

/// Aligned text tables: classification accuracy (rows = families) and score
/// prediction "rho_OSATS | rho_GRS" (rows = feature sets), one column per
/// report, plus a per-scheme average over tasks when several tasks are given.
inline std::string format_tables(const std::vector<ExperimentReport>& reports) {
  using detail::pad;
  std::ostringstream out;
  const std::size_t first = 18, col = 16;
  auto header = [&](const char* title) {
    out << title << '\n' << pad("", first);
    for (const auto& r : reports) out << pad(r.task + " " + std::string(to_string(r.scheme)), col);
    out << '\n';
  };

  std::vector<FeatureFamily> cls_rows;
  for (const auto& r : reports)
    for (const auto& c : r.classification)
      if (std::find(cls_rows.begin(), cls_rows.end(), c.family) == cls_rows.end()) cls_rows.push_back(c.family);
  if (!cls_rows.empty()) {
    header("Self-proclaimed skill classification accuracy (%)");
    for (auto f : cls_rows) {
      out << pad(std::string(to_string(f)), first);
      for (const auto& r : reports) {
        const auto* c = r.find(f);
        std::ostringstream cell;
        if (c) cell << std::fixed << std::setprecision(1) << c->accuracy;
        else cell << "-";
        out << pad(cell.str(), col);
      }
      out << '\n';
    }
    out << '\n';
  }

  std::vector<std::string> set_rows;
  for (const auto& r : reports)
    for (const auto& p : r.prediction)
      if (std::find(set_rows.begin(), set_rows.end(), p.name) == set_rows.end()) set_rows.push_back(p.name);
  if (set_rows.empty()) return out.str();
  header("Score prediction, rho_OSATS | rho_GRS (* p < 0.05)");
  for (const auto& name : set_rows) {
    out << pad(name, first);
    for (const auto& r : reports) {
      const auto* p = r.find(name);
      out << pad(p ? detail::rho_text(p->osats_rho, p->osats_significant) + " | " +
                         detail::rho_text(p->grs().rho, p->grs().p_value < 0.05)
                   : "-",
                 col);
    }
    out << '\n';
  }

  std::set<std::string> tasks;
  for (const auto& r : reports) tasks.insert(r.task);
  if (tasks.size() < 2) return out.str();
  out << "\nAverage over tasks, rho_OSATS | rho_GRS\n" << pad("", first);
  for (auto s : {Scheme::LOSO, Scheme::LOUO}) out << pad(std::string(to_string(s)), col);
  out << '\n';
  for (const auto& name : set_rows) {
    out << pad(name, first);
    for (auto s : {Scheme::LOSO, Scheme::LOUO}) {
      const auto a = average_over_tasks(reports, name, s);
      out << pad(detail::rho_text(a.osats, false) + " | " + detail::rho_text(a.grs, false), col);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace skillseries
