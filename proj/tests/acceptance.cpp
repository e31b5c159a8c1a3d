// Acceptance suite: one PASS/FAIL line per criterion. Criteria 1-9 run on
// generated data; 10-14 need a dataset tree named by SKILLSERIES_JIGSAWS.
// Exit status is nonzero iff an asserted criterion fails.

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "skillseries/eval.hpp"
#include "skillseries/features.hpp"
#include "skillseries/fusion.hpp"
#include "skillseries/highlights.hpp"
#include "skillseries/models.hpp"
#include "skillseries/reduce.hpp"
#include "test_util.hpp"

using namespace skillseries;

namespace {

// Tolerances, pinned.
constexpr double kTransformTol = 1e-10;
constexpr double kParsevalTol = 1e-8;
constexpr double kGlcmSumTol = 1e-12;
constexpr double kPcaTol = 1e-8;
constexpr double kSvrObjectiveTol = 1e-4;
constexpr double kAffineTol = 1e-10;
constexpr double kFusionTol = 1e-10;
constexpr double kBandLimitedTol = 1e-6;
constexpr double kInferTol = 1e-8;
constexpr std::size_t kBurstHitsNeeded = 19;
constexpr double kSynthDctRho = 0.8;
constexpr double kFusionSlack = 0.05;
constexpr double kSynthApEnAccuracy = 90.0;
constexpr double kSynthSeconds = 120.0;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail << "first failure: " << what << "; ";
    ok = ok && cond;
  }
};

int failures = 0;

void report(int id, const std::string& name, const Check& c, bool asserted = true) {
  const char* tag = !asserted ? "REPORT" : c.ok ? "PASS" : "FAIL";
  std::cout << tag << "  " << std::setw(2) << id << "  " << name << "  " << c.detail.str() << std::endl;
  if (asserted && !c.ok) ++failures;
}

template <class F>
void run(int id, const std::string& name, F&& body, bool asserted = true) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.detail << "(" << std::fixed << std::setprecision(2) << secs << " s)";
  report(id, name, c, asserted);
}

KinematicSeries one_channel(const std::vector<double>& s) {
  ChannelMatrix v(1, static_cast<Eigen::Index>(s.size()));
  for (std::size_t n = 0; n < s.size(); ++n) v(0, static_cast<Eigen::Index>(n)) = s[n];
  return KinematicSeries(v);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<SkillLabels> labels_of(const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<SkillLabels> out;
  for (auto r : rows) out.push_back(ds[r].labels);
  return out;
}

/// DCT score pipeline fitted on every trial except `exclude_surgeon`'s.
TrainedPipeline dct_pipeline_without(const Dataset& ds, const std::string& exclude_surgeon) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].surgeon_id != exclude_surgeon) rows.push_back(i);
  const FeatureConfig fc;
  const auto table = build_feature_table(ds, FeatureFamily::DCT, fc);
  TrainOptions o;
  o.classification = false;
  return train_pipeline(FeatureFamily::DCT, fc, default_model_params(FeatureFamily::DCT),
                        gather_rows(table.rows, rows), labels_of(ds, rows), o);
}

// ---------------------------------------------------------------------------
// Property suite

void transforms(Check& c) {
  const std::size_t lengths[] = {16, 100, 300};
  double worst_dct = 0.0, worst_dft = 0.0, worst_parseval = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const std::size_t L = lengths[i % 3];
    const auto s = testutil::random_signal(L, 10 + i);
    const auto dct = dct_features(one_channel(s), L).values;
    worst_dct = std::max(worst_dct, max_abs_diff(dct, oracle::dct(s, L)));
    const auto dft = dft_features(one_channel(s), L / 2).values;
    worst_dft = std::max(worst_dft, max_abs_diff(dft, oracle::dft_magnitude(s, L / 2)));
    double e_time = 0.0, e_freq = 0.0;
    for (double v : s) e_time += v * v;
    for (double v : dct) e_freq += v * v;
    worst_parseval = std::max(worst_parseval, std::abs(e_time - e_freq));
  }
  c.require(worst_dct <= kTransformTol, "DCT vs direct sum");
  c.require(worst_dft <= kTransformTol, "DFT vs direct sum");
  c.require(worst_parseval <= kParsevalTol, "Parseval");
  c.detail << "max|DCT-direct| " << worst_dct << ", max|DFT-direct| " << worst_dft << ", Parseval gap "
           << worst_parseval << " ";
}

void approximate_entropy(Check& c) {
  std::mt19937_64 rng(2);
  std::size_t mismatches = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t N = 10 + rng() % 191;
    const auto s = testutil::random_signal(N, 700 + static_cast<std::uint64_t>(k));
    ApEnParams p;
    p.m = 1 + static_cast<int>(rng() % 3);
    p.tau = 1 + static_cast<int>(rng() % 2);
    if (N <= static_cast<std::size_t>(p.m * p.tau + 1)) continue;
    const auto counts = apen_counts(s, p);
    for (std::size_t r = 0; r < p.radii.size(); ++r)
      mismatches += apen(s, p, r) != oracle::apen(s, p.m, p.tau, counts.r_eff[r]).value;
  }
  c.require(mismatches == 0, "ApEn vs brute force");

  bool constant_zero = true;
  for (double level : {0.0, 5.0, -3.25}) {
    const std::vector<double> s(120, level);
    ApEnParams p;
    for (std::size_t r = 0; r < p.radii.size(); ++r) constant_zero = constant_zero && apen(s, p, r) == 0.0;
  }
  c.require(constant_zero, "constant signal");

  bool affine = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = testutil::random_signal(150, 900 + seed);
    for (const auto& [a, b] : std::vector<std::pair<double, double>>{{2.5, -3.0}, {-0.75, 10.0}, {4.0, 0.0}}) {
      std::vector<double> t(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) t[i] = a * s[i] + b;
      ApEnParams p;
      for (std::size_t r = 0; r < p.radii.size(); ++r) affine = affine && apen(s, p, r) == apen(t, p, r);
    }
  }
  c.require(affine, "affine invariance");
  c.detail << mismatches << " exact mismatches over 100 signals ";
}

void glcm_oracle(Check& c) {
  GrayImage img(2, 2);
  img << 1, 2, 1, 2;
  const auto st = glcm_stats(glcm(img, 2, {0, 1}));
  c.require(st.contrast == 1.0 && st.energy == 0.5 && st.entropy == std::log(2.0), "2x2 hand example");

  std::mt19937_64 rng(5);
  double worst = 0.0;
  const SmtParams params;
  for (int k = 0; k < 50; ++k) {
    const int R = 3 + static_cast<int>(rng() % 20), C = 3 + static_cast<int>(rng() % 20);
    const GrayImage w = quantize(testutil::random_matrix(R, C, 1000 + static_cast<std::uint64_t>(k)), 8);
    for (const auto& off : params.offsets) worst = std::max(worst, std::abs(glcm(w, 8, off).sum() - 1.0));
  }
  c.require(worst <= kGlcmSumTol, "GLCM sums to one");
  c.detail << "contrast " << st.contrast << " energy " << st.energy << " entropy " << st.entropy
           << ", max|sum-1| " << worst << " ";
}

void pca_properties(Check& c) {
  double ortho = 0.0, recon = 0.0;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd X = testutil::random_matrix(20, 6, 50 + seed);
    const auto full = pca_fit(X, 6);
    ortho = std::max(ortho, (full.components * full.components.transpose() - Eigen::MatrixXd::Identity(6, 6))
                                .cwiseAbs()
                                .maxCoeff());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      recon = std::max(recon, (pca_reconstruct(full, pca_transform(full, x)) - x).norm());
      double previous = std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k <= 6; ++k) {
        const auto m = pca_fit(X, k);
        const double res = (x - pca_reconstruct(m, pca_transform(m, x))).norm();
        monotone = monotone && res <= previous + 1e-12;
        previous = res;
      }
    }
  }
  c.require(ortho <= kPcaTol, "orthonormality");
  c.require(recon <= kPcaTol, "full-rank reconstruction");
  c.require(monotone, "residual monotone in k");
  c.detail << "max|VV'-I| " << ortho << ", max reconstruction error " << recon << " ";
}

void svr_oracle(Check& c) {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::Index n = 10 + static_cast<Eigen::Index>(rng() % 31);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::MatrixXd X = testutil::random_matrix(n, k, 100 + static_cast<std::uint64_t>(inst));
    const Eigen::VectorXd w0 = testutil::random_matrix(k, 1, 200 + static_cast<std::uint64_t>(inst));
    const Eigen::VectorXd y = X * w0 + 0.5 * testutil::random_matrix(n, 1, 300 + static_cast<std::uint64_t>(inst));
    const double C = std::pow(10.0, static_cast<double>(rng() % 5) - 2.0);
    const auto m = svr_fit(X, y, C, 0.1);
    const auto ref = oracle::svr(X, y, C, 0.1);
    worst = std::max(worst, std::abs(svr_objective(m.weights, m.bias, X, y, C, 0.1) -
                                     static_cast<double>(ref.objective)));
  }
  c.require(worst <= kSvrObjectiveTol, "objective vs QP oracle");

  double affine = 0.0;
  const Eigen::MatrixXd X = testutil::random_matrix(25, 4, 7);
  const auto fit = svr_fit(X, testutil::random_matrix(25, 1, 8), 1.0, 0.1);
  const Eigen::VectorXd a = testutil::random_matrix(4, 1, 9), b = testutil::random_matrix(4, 1, 10);
  for (double t : {-1.5, 0.0, 0.3, 2.0})
    affine = std::max(affine, std::abs(svr_predict(fit, t * a + (1 - t) * b) -
                                       (t * svr_predict(fit, a) + (1 - t) * svr_predict(fit, b))));
  c.require(affine <= kAffineTol, "affinity of predict");
  c.detail << "max objective gap " << worst << ", affinity error " << affine << " ";
}

void fusion_oracle(Check& c) {
  const std::vector<FeatureFamily> three{FeatureFamily::DCT, FeatureFamily::DFT, FeatureFamily::ApEn};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::MatrixXd Y = testutil::random_matrix(6 + static_cast<Eigen::Index>(seed), 3, 10 + seed);
    const Eigen::VectorXd G = testutil::random_matrix(Y.rows(), 1, 40 + seed);
    const auto m = fit_fusion(Y, G, three);
    worst = std::max(worst, (m.weights - oracle::normal_equations<oracle::LD>(Y, G)).cwiseAbs().maxCoeff());
  }
  c.require(worst <= kFusionTol, "normal equations");

  const Eigen::MatrixXd Y = testutil::random_matrix(30, 3, 3);
  const Eigen::VectorXd G = testutil::random_matrix(30, 1, 4);
  const auto m = fit_fusion(Y, G, three);
  const double best = (Y * m.weights - G).squaredNorm();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.1);
  std::size_t beaten = 0;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd d(3);
    for (auto& v : d) v = g(rng);
    beaten += (Y * (m.weights + d) - G).squaredNorm() < best;
  }
  c.require(beaten == 0, "optimal against perturbations");

  Eigen::MatrixXd Y0(12, 3);
  Y0 << testutil::random_matrix(12, 2, 6), Eigen::VectorXd::Zero(12);
  const auto z = fit_fusion(Y0, testutil::random_matrix(12, 1, 7), three);
  c.require(z.weights(2) == 0.0, "zero column gets zero weight");
  c.detail << "max|w-w_ref| " << worst << ", perturbations beating w* " << beaten << "/100 ";
}

void highlights(Check& c) {
  // a) Band-limited trial: every window of the default grid leaves F unchanged.
  const DctBasis basis(1000, 50);
  double band = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::VectorXd coef = testutil::random_matrix(50, 1, 60 + seed);
    const Eigen::VectorXd s = basis.inverse() * coef;
    for (std::size_t p = 0; p + 100 <= 1000; p += 25) {
      const auto F = infer_features_without_segment(std::vector<double>(s.data(), s.data() + 1000), basis, p, p + 100);
      band = std::max(band, (F - coef).cwiseAbs().maxCoeff());
    }
  }
  SynthDatasetParams sp;
  sp.with_transcripts = false;
  const auto train = synth_dataset(sp);
  const auto pipeline = dct_pipeline_without(train, "");
  const auto smooth = synth_trial(1.0, Task::Suturing, 8, 1000, 7);
  double band_impact = 0.0;
  for (double v : impact_curve(smooth, pipeline, Criterion::GRS).impacts) band_impact = std::max(band_impact, std::abs(v));
  c.require(band_impact < kBandLimitedTol, "band-limited impact");

  // b) F-hat against the dense least-squares oracle in 50-digit arithmetic.
  const DctBasis short_basis(300, 50);
  const auto sig = testutil::random_signal(300, 3);
  const WindowedDctSolver solver(short_basis, 100, 200);
  const Eigen::VectorXd ref =
      oracle::normal_equations<oracle::Big>(solver.observed_rows(), solver.observed_values(sig));
  const double rel = (solver.solve(sig) - ref).norm() / ref.norm();
  c.require(rel <= kInferTol, "F-hat vs oracle");

  // c) Noise burst in [500,600) of a smooth trial, 20 seeded runs.
  std::size_t hits = 0;
  std::vector<std::size_t> argmax_positions;
  for (std::uint64_t run = 0; run < 20; ++run) {
    SynthDatasetParams p;
    p.with_transcripts = false;
    p.seed = 100 + run;
    const auto pipe = dct_pipeline_without(synth_dataset(p), "");
    auto trial = synth_trial(1.0, Task::Suturing, 8, 1000, 5000 + run);
    ChannelMatrix v = trial.series.values();
    std::mt19937_64 rng(9000 + run);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index d = 0; d < v.rows(); ++d)
      for (Eigen::Index n = 500; n < 600; ++n) v(d, n) += noise(rng);
    trial.series = KinematicSeries(v);
    const auto curve = impact_curve(trial, pipe, Criterion::GRS, 100, 25);
    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.impacts.size(); ++i)
      if (std::abs(curve.impacts[i]) > std::abs(curve.impacts[best])) best = i;
    const std::size_t pos = curve.positions[best];
    argmax_positions.push_back(pos);
    hits += pos + 100 > 500 && pos < 600;
  }
  c.require(hits >= kBurstHitsNeeded, "burst argmax overlaps [500,600)");
  c.detail << "max|F-F0| " << band << ", max band-limited |impact| " << band_impact << ", F-hat rel err " << rel
           << " (cond " << solver.condition() << "), burst hits " << hits << "/20, argmax starts {";
  for (std::size_t i = 0; i < argmax_positions.size(); ++i) c.detail << (i ? "," : "") << argmax_positions[i];
  c.detail << "} ";
}

void spearman_oracle(Check& c) {
  std::mt19937_64 rng(3);
  std::size_t mismatches = 0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 3 + rng() % 60;
    std::vector<double> a(n), b(n);
    const int levels = 2 + static_cast<int>(rng() % 8);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(rng() % static_cast<unsigned>(levels));
      b[i] = (k % 2) ? static_cast<double>(rng() % 1000) / 7.0 : static_cast<double>(rng() % 5);
    }
    const auto r = spearman_flagged(a, b);
    const double ref = oracle::spearman(a, b);
    mismatches += std::isnan(ref) ? !r.degenerate : r.rho != ref;
  }
  c.require(mismatches == 0, "rank-then-Pearson");

  bool invariant = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = testutil::random_signal(40, 1 + seed), b = testutil::random_signal(40, 100 + seed);
    std::vector<double> ta(40), tb(40);
    for (std::size_t i = 0; i < 40; ++i) ta[i] = std::exp(a[i]) * 3 + 1, tb[i] = std::pow(b[i] + 10.0, 3);
    const double rho = spearman(a, b).rho;
    invariant = invariant && spearman(ta, b).rho == rho && spearman(a, tb).rho == rho && spearman(ta, tb).rho == rho;
  }
  c.require(invariant, "monotone invariance");
  c.detail << mismatches << " mismatches over 200 pairs ";
}

void synthetic_end_to_end(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthDatasetParams p;
  p.with_transcripts = false;
  const auto ds = synth_dataset(p);
  ExperimentConfig cfg;
  cfg.feature_sets = {{FeatureFamily::DCT},
                      {FeatureFamily::DFT},
                      {FeatureFamily::ApEn},
                      {FeatureFamily::DCT, FeatureFamily::DFT, FeatureFamily::ApEn}};
  cfg.classification_families = {FeatureFamily::ApEn};
  const auto rep = run_experiment(ds, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const double dct = rep.find("DCT")->grs().rho;
  const double dft = rep.find("DFT")->grs().rho;
  const double apen_rho = rep.find("ApEn")->grs().rho;
  const double fused = rep.find("DCT+DFT+ApEn")->grs().rho;
  const double acc = rep.find(FeatureFamily::ApEn)->accuracy;
  c.require(dct >= kSynthDctRho, "DCT LOSO GRS rho");
  c.require(fused >= std::max({dct, dft, apen_rho}) - kFusionSlack, "fused vs best single");
  c.require(acc >= kSynthApEnAccuracy, "ApEn 1-NN accuracy");
  c.require(secs <= kSynthSeconds, "runtime");
  c.detail << std::setprecision(4) << "GRS rho DCT " << dct << " DFT " << dft << " ApEn " << apen_rho
           << " fused " << fused << ", ApEn 1-NN " << acc << "%, experiment " << secs << " s ";
}

// ---------------------------------------------------------------------------
// Dataset-gated suite

struct GatedRuns {
  std::map<Task, ExperimentReport> loso;
  ExperimentReport louo_suturing;
};

GatedRuns gated_runs(const std::filesystem::path& root) {
  GatedRuns g;
  ExperimentConfig cfg;
  cfg.feature_sets = {{FeatureFamily::DCT, FeatureFamily::DFT, FeatureFamily::ApEn}};
  cfg.classification_families = {FeatureFamily::ApEn};
  for (auto t : kAllTasks) g.loso.emplace(t, run_experiment(load_dataset(root, t), cfg));
  cfg.scheme = Scheme::LOUO;
  cfg.feature_sets = {};
  g.louo_suturing = run_experiment(load_dataset(root, Task::Suturing), cfg);
  return g;
}

/// Gesture with the largest impact variance across positions it labels.
std::optional<Gesture> max_variance_gesture(const ImpactCurve& curve) {
  if (!curve.gesture_overlay) return std::nullopt;
  std::map<Gesture, std::vector<double>> by;
  for (std::size_t i = 0; i < curve.impacts.size(); ++i)
    if (const auto g = (*curve.gesture_overlay)[i]) by[*g].push_back(curve.impacts[i]);
  std::optional<Gesture> best;
  double best_var = -1.0;
  for (const auto& [g, v] : by) {
    if (v.size() < 2) continue;
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    if (var > best_var) best_var = var, best = g;
  }
  return best;
}

void gated_suite(const std::filesystem::path& root) {
  std::optional<GatedRuns> runs;
  std::string load_error;
  try {
    runs = gated_runs(root);
  } catch (const std::exception& e) {
    load_error = e.what();
  }
  const auto need = [&](Check&) {
    if (!runs) throw DataError("dataset runs failed: " + load_error);
    return &*runs;
  };

  run(10, "classification ApEn LOSO >= 95% per task", [&](Check& c) {
    const auto* g = need(c);
    for (auto t : kAllTasks) {
      const double acc = g->loso.at(t).find(FeatureFamily::ApEn)->accuracy;
      c.require(acc >= 95.0, std::string(to_string(t)));
      c.detail << to_string(t) << " " << acc << "% ";
    }
  });
  run(11, "classification ApEn LOUO Suturing >= 75%", [&](Check& c) {
    const double acc = need(c)->louo_suturing.find(FeatureFamily::ApEn)->accuracy;
    c.require(acc >= 75.0, "Suturing LOUO");
    c.detail << acc << "% ";
  });
  run(12, "LOSO Suturing fusion GRS >= 0.6, OSATS >= 0.45", [&](Check& c) {
    const auto* r = need(c)->loso.at(Task::Suturing).find("DCT+DFT+ApEn");
    c.require(r->grs().rho >= 0.6, "GRS");
    c.require(r->osats_rho >= 0.45, "OSATS");
    c.detail << "GRS " << r->grs().rho << " OSATS " << r->osats_rho << " ";
  });
  run(13, "task-averaged LOSO fusion OSATS >= 0.4, GRS >= 0.45", [&](Check& c) {
    const auto* g = need(c);
    std::vector<ExperimentReport> reps;
    for (const auto& [t, r] : g->loso) reps.push_back(r);
    const auto avg = average_over_tasks(reps, "DCT+DFT+ApEn", Scheme::LOSO);
    c.require(avg.osats >= 0.4, "OSATS");
    c.require(avg.grs >= 0.45, "GRS");
    c.detail << "OSATS " << avg.osats << " GRS " << avg.grs << " ";
  });
  run(
      14, "Suturing highlights peak in G3 on an expert-vs-novice pair",
      [&](Check& c) {
        const auto ds = load_dataset(root, Task::Suturing);
        std::map<SkillLevel, std::vector<std::size_t>> firsts;
        std::set<std::string> seen;
        for (std::size_t i = 0; i < ds.size(); ++i)
          if (ds[i].transcript && seen.insert(ds[i].surgeon_id).second)
            firsts[ds[i].labels.self_proclaimed].push_back(i);
        std::map<std::size_t, std::optional<Gesture>> peak;
        for (auto level : {SkillLevel::Expert, SkillLevel::Novice})
          for (auto i : firsts[level]) {
            auto curve = impact_curve(ds[i], dct_pipeline_without(ds, ds[i].surgeon_id), Criterion::GRS);
            curve = attach_gesture_overlay(std::move(curve), *ds[i].transcript);
            peak[i] = max_variance_gesture(curve);
            c.detail << ds[i].id() << ":" << (peak[i] ? gesture_name(*peak[i]) : "-") << " ";
          }
        std::size_t pairs = 0, g3_pairs = 0;
        for (auto e : firsts[SkillLevel::Expert])
          for (auto n : firsts[SkillLevel::Novice]) {
            ++pairs;
            g3_pairs += peak[e] == Gesture{3} && peak[n] == Gesture{3};
          }
        c.require(g3_pairs > 0, "no pair peaks in G3");
        c.detail << "pairs peaking in G3: " << g3_pairs << "/" << pairs << " ";
      },
      false);
}

}  // namespace

int main() {
  std::cout << std::setprecision(6);
  run(1, "DCT/DFT vs direct summation, Parseval", transforms);
  run(2, "ApEn vs brute force, constant, affine", approximate_entropy);
  run(3, "GLCM hand oracle and normalization", glcm_oracle);
  run(4, "PCA orthonormality, reconstruction, residual", pca_properties);
  run(5, "SVR objective vs QP oracle, affine predict", svr_oracle);
  run(6, "fusion weights vs normal equations", fusion_oracle);
  run(7, "highlights band-limited, F-hat oracle, burst", highlights);
  run(8, "Spearman vs rank-then-Pearson, invariance", spearman_oracle);
  run(9, "synthetic 8x5 end to end", synthetic_end_to_end);

  if (const char* root = std::getenv("SKILLSERIES_JIGSAWS"); root && *root) {
    gated_suite(root);
  } else {
    for (int id = 10; id <= 14; ++id)
      std::cout << "SKIP  " << id << "  dataset-gated; set SKILLSERIES_JIGSAWS to a dataset root" << std::endl;
  }
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed" : "acceptance: all asserted criteria passed")
            << std::endl;
  return failures ? 1 : 0;
}
