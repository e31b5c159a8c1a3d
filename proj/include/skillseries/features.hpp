#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

enum class FeatureFamily { SMT, DCT, DFT, ApEn };

inline constexpr std::array<FeatureFamily, 4> kAllFamilies = {
    FeatureFamily::SMT, FeatureFamily::DCT, FeatureFamily::DFT, FeatureFamily::ApEn};

inline std::string_view to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::SMT: return "SMT";
    case FeatureFamily::DCT: return "DCT";
    case FeatureFamily::DFT: return "DFT";
    case FeatureFamily::ApEn: return "ApEn";
  }
  return "?";
}

inline std::optional<FeatureFamily> parse_family(std::string_view s) {
  for (auto f : kAllFamilies)
    if (detail::lower(to_string(f)) == detail::lower(s)) return f;
  return std::nullopt;
}

struct FeatureVector {
  FeatureFamily family = FeatureFamily::DCT;
  std::vector<double> values;
  std::string trial_id;
  std::uint64_t params_hash = 0;

  Eigen::Map<const Eigen::VectorXd> view() const {
    return {values.data(), static_cast<Eigen::Index>(values.size())};
  }
};

// ---------------------------------------------------------------------------
// Orthonormal DCT-II

/// The q lowest rows of the orthonormal L-point DCT-II matrix.
///   forward(k, n) = c_k sqrt(2/L) cos(pi (2n+1) k / (2L)),  c_0 = 1/sqrt(2)
/// The inverse map restricted to those coefficients is forward^T (L x q).
class DctBasis {
 public:
  DctBasis(std::size_t frames, std::size_t coefficients)
      : frames_(frames), coefficients_(coefficients) {
    if (frames < 1 || coefficients < 1 || coefficients > frames)
      throw BadParam("DCT basis needs 1 <= q <= L (q=" + std::to_string(coefficients) +
                     ", L=" + std::to_string(frames) + ")");
    const auto L = static_cast<std::int64_t>(frames);
    const auto q = static_cast<Eigen::Index>(coefficients);
    forward_.resize(q, static_cast<Eigen::Index>(frames));
    const double scale = std::sqrt(2.0 / static_cast<double>(frames));
    // cos(pi m / 2L) depends only on m mod 4L; reducing keeps the argument small.
    for (Eigen::Index k = 0; k < q; ++k) {
      const double ck = k == 0 ? scale / std::numbers::sqrt2 : scale;
      for (std::int64_t n = 0; n < L; ++n) {
        const std::int64_t m = ((2 * n + 1) * k) % (4 * L);
        forward_(k, n) = ck * std::cos(std::numbers::pi * static_cast<double>(m) /
                                       static_cast<double>(2 * L));
      }
    }
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t coefficients() const noexcept { return coefficients_; }
  const Eigen::MatrixXd& forward() const noexcept { return forward_; }
  Eigen::MatrixXd inverse() const { return forward_.transpose(); }

  Eigen::VectorXd transform(std::span<const double> channel) const {
    if (channel.size() != frames_) throw DimMismatch("channel length differs from DCT basis");
    return forward_ * Eigen::Map<const Eigen::VectorXd>(channel.data(),
                                                        static_cast<Eigen::Index>(channel.size()));
  }

 private:
  std::size_t frames_;
  std::size_t coefficients_;
  Eigen::MatrixXd forward_;
};

/// Lowest q orthonormal DCT-II coefficients of every channel, channel-major.
inline FeatureVector dct_features(const KinematicSeries& series, std::size_t q) {
  if (q < 1 || q > series.frames())
    throw BadParam("DCT q must satisfy 1 <= q <= L (q=" + std::to_string(q) + ")");
  const DctBasis basis(series.frames(), q);
  FeatureVector out;
  out.family = FeatureFamily::DCT;
  out.values.resize(series.dims() * q);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>> blocks(
      out.values.data(), static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(series.dims()));
  blocks.noalias() = basis.forward() * series.values().transpose();
  return out;
}

/// |X_k| for k = 0..q-1 of the unnormalized DFT, per channel, channel-major.
inline FeatureVector dft_features(const KinematicSeries& series, std::size_t q) {
  const std::size_t L = series.frames();
  if (q < 1 || q > L / 2 + 1)
    throw BadParam("DFT q must satisfy 1 <= q <= floor(L/2)+1 (q=" + std::to_string(q) + ")");
  std::vector<double> cos_table(L), sin_table(L);
  for (std::size_t n = 0; n < L; ++n) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(L);
    cos_table[n] = std::cos(angle);
    sin_table[n] = std::sin(angle);
  }
  FeatureVector out;
  out.family = FeatureFamily::DFT;
  out.values.resize(series.dims() * q);
  for (std::size_t d = 0; d < series.dims(); ++d) {
    const auto s = series.channel(d);
    for (std::size_t k = 0; k < q; ++k) {
      double re = 0.0, im = 0.0;
      std::size_t idx = 0;
      for (std::size_t n = 0; n < L; ++n) {
        re += s[n] * cos_table[idx];
        im -= s[n] * sin_table[idx];
        idx += k;
        if (idx >= L) idx -= L;
      }
      out.values[d * q + k] = std::hypot(re, im);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Approximate entropy

enum class RadiusMode { StdScaled, Absolute };

struct ApEnParams {
  int m = 1;
  int tau = 1;
  std::vector<double> radii{0.1, 0.13, 0.16, 0.19, 0.22, 0.25};
  RadiusMode radius_mode = RadiusMode::StdScaled;

  void validate() const {
    if (m < 1) throw BadParam("ApEn embedding dimension m must be >= 1");
    if (tau < 1) throw BadParam("ApEn lag tau must be >= 1");
    if (radii.empty()) throw BadParam("ApEn needs at least one radius");
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (!(radii[i] > 0.0)) throw BadParam("ApEn radii must be positive");
      if (i > 0 && !(radii[i] > radii[i - 1])) throw BadParam("ApEn radii must be increasing");
    }
  }
};

/// Match counts behind an ApEn evaluation. counts_m[r][i] is the number of
/// embedded vectors within r_eff[r] (max-norm) of vector i at dimension m,
/// self-match included; counts_m1 likewise at dimension m + 1.
struct ApEnCounts {
  std::size_t n_m = 0;
  std::size_t n_m1 = 0;
  std::vector<double> r_eff;
  std::vector<std::vector<std::uint32_t>> counts_m;
  std::vector<std::vector<std::uint32_t>> counts_m1;
};

inline double population_std(std::span<const double> s) {
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double ss = 0.0;
  for (double v : s) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(s.size()));
}

inline ApEnCounts apen_counts(std::span<const double> signal, const ApEnParams& params) {
  params.validate();
  const auto m = static_cast<std::size_t>(params.m);
  const auto tau = static_cast<std::size_t>(params.tau);
  const std::size_t N = signal.size();
  if (N < m * tau + 2)
    throw SignalTooShort("ApEn needs at least m*tau+2 = " + std::to_string(m * tau + 2) +
                         " samples, got " + std::to_string(N));

  ApEnCounts c;
  c.n_m = N - (m - 1) * tau;
  c.n_m1 = N - m * tau;
  const double scale = params.radius_mode == RadiusMode::StdScaled ? population_std(signal) : 1.0;
  for (double r : params.radii) c.r_eff.push_back(r * scale);
  const std::size_t R = c.r_eff.size();
  c.counts_m.assign(R, std::vector<std::uint32_t>(c.n_m, 0));
  c.counts_m1.assign(R, std::vector<std::uint32_t>(c.n_m1, 0));

  // first_m[i] counts pairs whose smallest admitting radius index is r; a
  // prefix sum over r turns these into the cumulative counts.
  std::vector<std::vector<std::uint32_t>> first_m(R + 1, std::vector<std::uint32_t>(c.n_m, 0));
  std::vector<std::vector<std::uint32_t>> first_m1(R + 1, std::vector<std::uint32_t>(c.n_m1, 0));
  auto radius_slot = [&](double dist) {
    std::size_t r = 0;
    while (r < R && dist > c.r_eff[r]) ++r;
    return r;
  };

  for (std::size_t i = 0; i < c.n_m; ++i) {
    ++first_m[0][i];  // self-match, distance 0
    if (i < c.n_m1) ++first_m1[0][i];
    for (std::size_t j = i + 1; j < c.n_m; ++j) {
      double dist = 0.0;
      for (std::size_t l = 0; l < m; ++l)
        dist = std::max(dist, std::abs(signal[i + l * tau] - signal[j + l * tau]));
      const std::size_t slot = radius_slot(dist);
      ++first_m[slot][i];
      ++first_m[slot][j];
      if (j < c.n_m1) {
        const double dist1 = std::max(dist, std::abs(signal[i + m * tau] - signal[j + m * tau]));
        const std::size_t slot1 = radius_slot(dist1);
        ++first_m1[slot1][i];
        ++first_m1[slot1][j];
      }
    }
  }
  for (std::size_t i = 0; i < c.n_m; ++i) {
    std::uint32_t acc = 0;
    for (std::size_t r = 0; r < R; ++r) c.counts_m[r][i] = acc += first_m[r][i];
  }
  for (std::size_t i = 0; i < c.n_m1; ++i) {
    std::uint32_t acc = 0;
    for (std::size_t r = 0; r < R; ++r) c.counts_m1[r][i] = acc += first_m1[r][i];
  }
  return c;
}

namespace detail {

inline double apen_phi(const std::vector<std::uint32_t>& counts, std::size_t n) {
  double phi = 0.0;
  for (std::uint32_t ci : counts) phi += std::log(static_cast<double>(ci) / static_cast<double>(n));
  return phi / static_cast<double>(n);
}

inline double apen_from_counts(const ApEnCounts& c, std::size_t r) {
  return apen_phi(c.counts_m[r], c.n_m) - apen_phi(c.counts_m1[r], c.n_m1);
}

inline bool is_constant(std::span<const double> s) {
  return std::all_of(s.begin(), s.end(), [&](double v) { return v == s[0]; });
}

}  // namespace detail

/// ApEn = Phi^m(r) - Phi^{m+1}(r) with self-matches and natural log.
/// A constant signal returns exactly 0.
inline double apen(std::span<const double> signal, const ApEnParams& params,
                   std::size_t radius_index) {
  params.validate();
  if (radius_index >= params.radii.size()) throw BadParam("ApEn radius index out of range");
  const auto counts = apen_counts(signal, params);
  if (detail::is_constant(signal)) return 0.0;
  if (params.radius_mode == RadiusMode::StdScaled && counts.r_eff[radius_index] == 0.0) return 0.0;
  return detail::apen_from_counts(counts, radius_index);
}

/// One value per (channel, radius), channel-major.
inline FeatureVector apen_features(const KinematicSeries& series, const ApEnParams& params) {
  params.validate();
  FeatureVector out;
  out.family = FeatureFamily::ApEn;
  const std::size_t R = params.radii.size();
  out.values.resize(series.dims() * R);
  for (std::size_t d = 0; d < series.dims(); ++d) {
    const auto ch = series.channel(d);
    ApEnCounts counts;
    try {
      counts = apen_counts(ch, params);
    } catch (const SignalTooShort& e) {
      throw SignalTooShort(e.what(), static_cast<std::ptrdiff_t>(d));
    }
    const bool constant = detail::is_constant(ch);
    for (std::size_t r = 0; r < R; ++r)
      out.values[d * R + r] = constant ? 0.0 : detail::apen_from_counts(counts, r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequential motion texture

struct GlcmOffset {
  int drow = 0;
  int dcol = 1;
};

struct SmtParams {
  std::size_t n_windows = 10;
  int gray_levels = 8;
  std::array<GlcmOffset, 4> offsets{{{0, 1}, {1, 1}, {1, 0}, {1, -1}}};

  static constexpr std::size_t kStatsPerOffset = 5;
  static constexpr std::array<std::string_view, kStatsPerOffset> kStatNames = {
      "contrast", "correlation", "energy", "homogeneity", "entropy"};
  static constexpr std::size_t kFeaturesPerWindow = 4 * kStatsPerOffset;

  void validate() const {
    if (n_windows < 1) throw BadParam("SMT needs at least one window");
    if (gray_levels < 2) throw BadParam("SMT needs at least two gray levels");
  }
};

/// Gray levels 1..levels.
using GrayImage = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform bins over [min, max]; a flat input maps entirely to level 1.
inline GrayImage quantize(const Eigen::MatrixXd& values, int levels) {
  GrayImage out(values.rows(), values.cols());
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) {
    out.setOnes();
    return out;
  }
  const double width = hi - lo;
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const int bin = static_cast<int>(std::floor((values(r, c) - lo) / width * levels));
      out(r, c) = 1 + std::clamp(bin, 0, levels - 1);
    }
  return out;
}

/// Symmetric co-occurrence matrix normalized to unit sum; entry (a, b) holds
/// gray levels a+1, b+1.
inline Eigen::MatrixXd glcm(const GrayImage& image, int levels, GlcmOffset offset) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(levels, levels);
  double total = 0.0;
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    const Eigen::Index r2 = r + offset.drow;
    if (r2 < 0 || r2 >= image.rows()) continue;
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const Eigen::Index c2 = c + offset.dcol;
      if (c2 < 0 || c2 >= image.cols()) continue;
      const int a = image(r, c) - 1;
      const int b = image(r2, c2) - 1;
      P(a, b) += 1.0;
      P(b, a) += 1.0;
      total += 2.0;
    }
  }
  if (total > 0.0) P /= total;
  return P;
}

struct GlcmStats {
  double contrast = 0.0;
  double correlation = 0.0;
  double energy = 0.0;
  double homogeneity = 0.0;
  double entropy = 0.0;
};

/// Haralick statistics. Correlation is 0 when a marginal has zero variance.
inline GlcmStats glcm_stats(const Eigen::MatrixXd& P) {
  GlcmStats s;
  const Eigen::Index G = P.rows();
  double mu_i = 0.0, mu_j = 0.0;
  for (Eigen::Index a = 0; a < G; ++a)
    for (Eigen::Index b = 0; b < G; ++b) {
      mu_i += static_cast<double>(a + 1) * P(a, b);
      mu_j += static_cast<double>(b + 1) * P(a, b);
    }
  double var_i = 0.0, var_j = 0.0, cov = 0.0;
  for (Eigen::Index a = 0; a < G; ++a)
    for (Eigen::Index b = 0; b < G; ++b) {
      const double p = P(a, b);
      if (p == 0.0) continue;
      const double di = static_cast<double>(a + 1) - mu_i;
      const double dj = static_cast<double>(b + 1) - mu_j;
      const double diff = static_cast<double>(a - b);
      s.contrast += diff * diff * p;
      s.energy += p * p;
      s.homogeneity += p / (1.0 + diff * diff);
      s.entropy -= p * std::log(p);
      var_i += di * di * p;
      var_j += dj * dj * p;
      cov += di * dj * p;
    }
  s.correlation = (var_i > 0.0 && var_j > 0.0) ? cov / std::sqrt(var_i * var_j) : 0.0;
  return s;
}

/// Linear-kernel Gram matrix over frames of a window whose channels have been
/// standardized to zero mean / unit variance (flat channels become zero).
inline Eigen::MatrixXd frame_kernel(const ChannelMatrix& window) {
  ChannelMatrix z = window;
  for (Eigen::Index d = 0; d < z.rows(); ++d) {
    const double mean = z.row(d).mean();
    z.row(d).array() -= mean;
    const double sd = std::sqrt(z.row(d).squaredNorm() / static_cast<double>(z.cols()));
    if (sd > 0.0)
      z.row(d) /= sd;
    else
      z.row(d).setZero();
  }
  return (z.transpose() * z) / static_cast<double>(z.rows());
}

/// 20 texture statistics per window (4 offsets x 5 statistics, offset-major).
inline FeatureVector smt_features(const KinematicSeries& series, const SmtParams& params) {
  params.validate();
  const std::size_t L = series.frames();
  const std::size_t W = params.n_windows;
  if (L < 2 * W)
    throw TooFewFrames("SMT needs L >= 2 * n_windows (L=" + std::to_string(L) +
                       ", n_windows=" + std::to_string(W) + ")");
  FeatureVector out;
  out.family = FeatureFamily::SMT;
  out.values.reserve(SmtParams::kFeaturesPerWindow * W);
  const std::size_t base = L / W;
  for (std::size_t w = 0; w < W; ++w) {
    const std::size_t start = w * base;
    const std::size_t len = (w + 1 == W) ? L - start : base;
    const ChannelMatrix window =
        series.values().middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
    const GrayImage image = quantize(frame_kernel(window), params.gray_levels);
    for (const auto& off : params.offsets) {
      const auto st = glcm_stats(glcm(image, params.gray_levels, off));
      out.values.insert(out.values.end(),
                        {st.contrast, st.correlation, st.energy, st.homogeneity, st.entropy});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Family dispatch

struct FeatureConfig {
  std::size_t dct_q = 50;
  std::size_t dft_q = 50;
  ApEnParams apen;
  SmtParams smt;

  /// Canonical text of the parameters that shape `family`'s vector.
  std::string canonical(FeatureFamily family) const {
    std::ostringstream s;
    s << to_string(family) << ':';
    switch (family) {
      case FeatureFamily::DCT: s << "q=" << dct_q; break;
      case FeatureFamily::DFT: s << "q=" << dft_q; break;
      case FeatureFamily::ApEn:
        s << "m=" << apen.m << ",tau=" << apen.tau << ",mode="
          << (apen.radius_mode == RadiusMode::StdScaled ? "std" : "abs") << ",r=";
        for (double r : apen.radii) s << format_double(r) << ';';
        break;
      case FeatureFamily::SMT:
        s << "nw=" << smt.n_windows << ",gl=" << smt.gray_levels;
        break;
    }
    return s.str();
  }

  std::uint64_t hash(FeatureFamily family) const { return fnv1a(canonical(family)); }
};

inline FeatureVector extract_features(const KinematicSeries& series, FeatureFamily family,
                                      const FeatureConfig& config) {
  switch (family) {
    case FeatureFamily::DCT: return dct_features(series, config.dct_q);
    case FeatureFamily::DFT: return dft_features(series, config.dft_q);
    case FeatureFamily::ApEn: return apen_features(series, config.apen);
    case FeatureFamily::SMT: return smt_features(series, config.smt);
  }
  throw BadParam("unknown feature family");
}

inline FeatureVector extract_features(const TrialRecord& trial, FeatureFamily family,
                                      const FeatureConfig& config) {
  FeatureVector fv = extract_features(trial.series, family, config);
  fv.trial_id = trial.id();
  fv.params_hash = config.hash(family);
  return fv;
}

/// One row per trial; header `trial,<family>_0,<family>_1,...`.
inline void write_feature_csv(std::ostream& out, const std::vector<FeatureVector>& rows) {
  if (rows.empty()) return;
  const std::size_t dim = rows.front().values.size();
  out << "trial";
  for (std::size_t i = 0; i < dim; ++i) out << ',' << to_string(rows.front().family) << '_' << i;
  out << '\n';
  for (const auto& row : rows) {
    if (row.values.size() != dim || row.family != rows.front().family)
      throw DimMismatch("feature CSV rows must share family and length");
    out << row.trial_id;
    for (double v : row.values) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace skillseries
