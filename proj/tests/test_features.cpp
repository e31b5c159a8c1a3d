#include <gtest/gtest.h>

#include "oracles.hpp"
#include "skillseries/features.hpp"
#include "test_util.hpp"

using namespace skillseries;

namespace {

KinematicSeries series_of(const std::vector<std::vector<double>>& channels) {
  ChannelMatrix v(static_cast<Eigen::Index>(channels.size()),
                  static_cast<Eigen::Index>(channels.front().size()));
  for (std::size_t d = 0; d < channels.size(); ++d)
    for (std::size_t n = 0; n < channels[d].size(); ++n)
      v(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n)) = channels[d][n];
  return KinematicSeries(v);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Dct, ConstantChannelIsDcOnly) {
  const auto s = series_of({std::vector<double>(100, 1.0)});
  const auto f = dct_features(s, 3);
  EXPECT_NEAR(f.values[0], 10.0, 1e-12);
  EXPECT_NEAR(f.values[1], 0.0, 1e-12);
  EXPECT_NEAR(f.values[2], 0.0, 1e-12);
}

TEST(Dct, BasisVectorInput) {
  const std::size_t L = 120;
  std::vector<double> s(L);
  for (std::size_t n = 0; n < L; ++n) s[n] = std::cos(std::numbers::pi * (2.0 * n + 1) * 2 / (2.0 * L));
  const auto f = dct_features(series_of({s}), 5);
  for (std::size_t k = 0; k < 5; ++k)
    EXPECT_NEAR(f.values[k], k == 2 ? std::sqrt(L / 2.0) : 0.0, 1e-10) << k;
}

TEST(Dct, FullInverseRecoversChannels) {
  const auto a = testutil::random_signal(16, 1), b = testutil::random_signal(16, 2);
  const auto s = series_of({a, b});
  const auto f = dct_features(s, 16);
  const DctBasis basis(16, 16);
  for (std::size_t d = 0; d < 2; ++d) {
    const Eigen::Map<const Eigen::VectorXd> block(f.values.data() + 16 * d, 16);
    const Eigen::VectorXd back = basis.inverse() * block;
    for (int n = 0; n < 16; ++n) EXPECT_NEAR(back(n), s.channel(d)[static_cast<std::size_t>(n)], 1e-10);
  }
}

TEST(Dct, MatchesDirectSummation) {
  for (std::size_t L : {16u, 100u, 300u})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = testutil::random_signal(L, 100 + seed + L);
      const std::size_t q = std::min<std::size_t>(L, 50);
      const auto f = dct_features(series_of({s}), q);
      EXPECT_LE(max_abs_diff(f.values, oracle::dct(s, q)), 1e-10);
    }
}

TEST(Dct, ParsevalAtFullLength) {
  const auto s = testutil::random_signal(300, 8);
  const auto f = dct_features(series_of({s}), 300);
  double e_time = 0.0, e_freq = 0.0;
  for (double v : s) e_time += v * v;
  for (double v : f.values) e_freq += v * v;
  EXPECT_NEAR(e_time, e_freq, 1e-8);
}

TEST(Dct, ForwardInverseIsIdentity) {
  const DctBasis basis(300, 50);
  const Eigen::MatrixXd I = basis.forward() * basis.inverse();
  EXPECT_LE((I - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dct, MeanShiftTouchesOnlyDc) {
  auto s = testutil::random_signal(64, 4);
  const auto other = testutil::random_signal(64, 5);
  const auto before = dct_features(series_of({s, other}), 10);
  for (auto& v : s) v += 3.0;
  const auto after = dct_features(series_of({s, other}), 10);
  EXPECT_NEAR(after.values[0] - before.values[0], 3.0 * 8.0, 1e-10);
  for (std::size_t k = 1; k < 20; ++k) EXPECT_NEAR(after.values[k], before.values[k], 1e-10) << k;
}

TEST(Dft, ConstantChannel) {
  const auto f = dft_features(series_of({std::vector<double>(100, -2.5)}), 2);
  EXPECT_NEAR(f.values[0], 250.0, 1e-10);
  EXPECT_NEAR(f.values[1], 0.0, 1e-10);
}

TEST(Dft, PureTone) {
  std::vector<double> s(64);
  for (std::size_t n = 0; n < 64; ++n) s[n] = std::sin(2.0 * std::numbers::pi * n * 3.0 / 64.0);
  const auto f = dft_features(series_of({s}), 8);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(f.values[k], k == 3 ? 32.0 : 0.0, 1e-10) << k;
}

TEST(Dft, MatchesDirectSummation) {
  const auto s = testutil::random_signal(20, 9);
  EXPECT_LE(max_abs_diff(dft_features(series_of({s}), 11).values, oracle::dft_magnitude(s, 11)), 1e-10);
  for (std::size_t L : {16u, 100u, 300u}) {
    const auto r = testutil::random_signal(L, 40 + L);
    const std::size_t q = std::min<std::size_t>(L / 2 + 1, 50);
    EXPECT_LE(max_abs_diff(dft_features(series_of({r}), q).values, oracle::dft_magnitude(r, q)), 1e-10);
  }
}

TEST(Dft, RejectsTooManyBins) {
  EXPECT_THROW(dft_features(series_of({testutil::random_signal(20, 1)}), 12), BadParam);
}

TEST(ApEn, ConstantSignalIsZero) {
  const std::vector<double> s(8, 5.0);
  ApEnParams p;
  for (std::size_t r = 0; r < p.radii.size(); ++r) EXPECT_EQ(apen(s, p, r), 0.0);
  p.radius_mode = RadiusMode::Absolute;
  EXPECT_EQ(apen(s, p, 0), 0.0);
}

TEST(ApEn, AlternatingMatchesBruteForce) {
  std::vector<double> s(50);
  for (std::size_t i = 0; i < 50; ++i) s[i] = static_cast<double>(i % 2);
  ApEnParams p;
  p.radius_mode = RadiusMode::Absolute;
  p.radii = {0.3};
  EXPECT_EQ(apen(s, p, 0), oracle::apen(s, 1, 1, 0.3).value);
}

TEST(ApEn, NoiseExceedsSorted) {
  auto s = testutil::random_signal(200, 12);
  auto sorted = s;
  std::sort(sorted.begin(), sorted.end());
  ApEnParams p;
  p.radii = {0.2};
  EXPECT_GT(apen(s, p, 0), apen(sorted, p, 0));
}

TEST(ApEn, CountsMatchBruteForceAndGrowWithRadius) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t N = 20 + rng() % 181;
    const auto s = testutil::random_signal(N, 500 + static_cast<std::uint64_t>(trial));
    ApEnParams p;
    p.m = 1 + static_cast<int>(rng() % 3);
    p.tau = 1 + static_cast<int>(rng() % 2);
    const auto c = apen_counts(s, p);
    for (std::size_t r = 0; r < p.radii.size(); ++r) {
      const auto brute = oracle::apen(s, p.m, p.tau, c.r_eff[r]);
      EXPECT_EQ(std::vector<std::size_t>(c.counts_m[r].begin(), c.counts_m[r].end()), brute.counts_m);
      EXPECT_EQ(std::vector<std::size_t>(c.counts_m1[r].begin(), c.counts_m1[r].end()), brute.counts_m1);
      EXPECT_EQ(apen(s, p, r), brute.value);
      if (r > 0) {
        for (std::size_t i = 0; i < c.n_m; ++i) EXPECT_GE(c.counts_m[r][i], c.counts_m[r - 1][i]);
      }
    }
  }
}

TEST(ApEn, StdScaledAffineInvariance) {
  const auto s = testutil::random_signal(150, 21);
  for (const auto& [alpha, beta] : std::vector<std::pair<double, double>>{{2.5, -3.0}, {-0.75, 10.0}, {4.0, 0.0}}) {
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = alpha * s[i] + beta;
    ApEnParams p;
    const auto ca = apen_counts(s, p), cb = apen_counts(t, p);
    EXPECT_EQ(ca.counts_m, cb.counts_m);
    EXPECT_EQ(ca.counts_m1, cb.counts_m1);
    for (std::size_t r = 0; r < p.radii.size(); ++r) EXPECT_EQ(apen(s, p, r), apen(t, p, r));
  }
}

TEST(ApEn, FeatureLayoutAndConstantChannels) {
  const auto s = series_of({std::vector<double>(60, 1.0), std::vector<double>(60, 2.0), std::vector<double>(60, -1.0)});
  const auto f = apen_features(s, ApEnParams{});
  ASSERT_EQ(f.values.size(), 18u);
  for (double v : f.values) EXPECT_EQ(v, 0.0);

  const auto a = testutil::random_signal(80, 1), b = testutil::random_signal(80, 2);
  const auto g = apen_features(series_of({a, b}), ApEnParams{});
  ASSERT_EQ(g.values.size(), 12u);
  ApEnParams p;
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_EQ(g.values[r], apen(a, p, r));
    EXPECT_EQ(g.values[6 + r], apen(b, p, r));
  }
}

TEST(ApEn, HighSkillLowerThanLowSkill) {
  const auto hi = synth_trial(1.0, Task::Suturing, 4, 500, 3);
  const auto lo = synth_trial(0.0, Task::Suturing, 4, 500, 3);
  const auto fh = apen_features(hi.series, ApEnParams{});
  const auto fl = apen_features(lo.series, ApEnParams{});
  double mh = 0.0, ml = 0.0;
  for (double v : fh.values) mh += v;
  for (double v : fl.values) ml += v;
  EXPECT_LT(mh, ml);
}

TEST(ApEn, ShortSignalAndBadParams) {
  ApEnParams p;
  EXPECT_THROW(apen(std::vector<double>{1.0, 2.0}, p, 0), SignalTooShort);
  p.radii = {0.2, 0.1};
  EXPECT_THROW(p.validate(), BadParam);
  ApEnParams q;
  q.m = 0;
  EXPECT_THROW(q.validate(), BadParam);
}

TEST(Glcm, TwoByTwoHandExample) {
  GrayImage img(2, 2);
  img << 1, 2, 1, 2;
  const auto P = glcm(img, 2, {0, 1});
  EXPECT_EQ(P(0, 1), 0.5);
  EXPECT_EQ(P(1, 0), 0.5);
  EXPECT_EQ(P(0, 0), 0.0);
  EXPECT_EQ(P(1, 1), 0.0);
  const auto st = glcm_stats(P);
  EXPECT_EQ(st.contrast, 1.0);
  EXPECT_EQ(st.energy, 0.5);
  EXPECT_EQ(st.entropy, std::log(2.0));
}

TEST(Glcm, SingleLevelWindow) {
  GrayImage img = GrayImage::Ones(5, 5);
  SmtParams params;
  for (const auto& off : params.offsets) {
    const auto st = glcm_stats(glcm(img, 8, off));
    EXPECT_EQ(st.energy, 1.0);
    EXPECT_EQ(st.contrast, 0.0);
    EXPECT_EQ(st.homogeneity, 1.0);
    EXPECT_EQ(st.entropy, 0.0);
    EXPECT_EQ(st.correlation, 0.0);
  }
}

TEST(Glcm, RandomImagesMatchPairListingAndSumToOne) {
  std::mt19937_64 rng(5);
  SmtParams params;
  for (int trial = 0; trial < 50; ++trial) {
    const int R = 3 + static_cast<int>(rng() % 20), C = 3 + static_cast<int>(rng() % 20);
    const Eigen::MatrixXd values = testutil::random_matrix(R, C, 1000 + static_cast<std::uint64_t>(trial));
    const GrayImage img = quantize(values, 8);
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(R), std::vector<int>(static_cast<std::size_t>(C)));
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = img(r, c);
    for (const auto& off : params.offsets) {
      const auto P = glcm(img, 8, off);
      EXPECT_NEAR(P.sum(), 1.0, 1e-12);
      EXPECT_EQ(P, P.transpose());
      EXPECT_LE((P - oracle::glcm(rows, 8, off.drow, off.dcol)).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Smt, LengthAndDeterminism) {
  const auto t = synth_trial(0.4, Task::Suturing, 6, 400, 2);
  const auto a = smt_features(t.series, SmtParams{});
  const auto b = smt_features(t.series, SmtParams{});
  EXPECT_EQ(a.values.size(), 200u);
  EXPECT_EQ(a.values, b.values);
  for (double v : a.values) EXPECT_TRUE(std::isfinite(v));
  SmtParams p;
  p.n_windows = 300;
  EXPECT_THROW(smt_features(t.series, p), TooFewFrames);
}

TEST(Features, DispatchLengthsAndPurity) {
  const auto t = synth_trial(0.6, Task::NeedlePassing, 5, 300, 4);
  const FeatureConfig cfg;
  EXPECT_EQ(extract_features(t, FeatureFamily::DCT, cfg).values.size(), 5u * 50);
  EXPECT_EQ(extract_features(t, FeatureFamily::DFT, cfg).values.size(), 5u * 50);
  EXPECT_EQ(extract_features(t, FeatureFamily::ApEn, cfg).values.size(), 5u * 6);
  EXPECT_EQ(extract_features(t, FeatureFamily::SMT, cfg).values.size(), 200u);
  for (auto f : kAllFamilies) {
    const auto a = extract_features(t, f, cfg), b = extract_features(t, f, cfg);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.params_hash, b.params_hash);
  }
  EXPECT_NE(cfg.hash(FeatureFamily::DCT), cfg.hash(FeatureFamily::DFT));
}
