#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/features.hpp"
#include "skillseries/pipeline.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

namespace detail {
#if defined(__SIZEOF_FLOAT128__)
using wide_float = __float128;
#else
using wide_float = long double;
#endif
}  // namespace detail

struct InferenceOptions {
  /// Mixed-precision refinement runs when cond(B_observed) exceeds this.
  double refine_above_condition = 1e6;
  int max_refinements = 10;
};

/// Least-squares DCT coefficients explaining only the frames outside
/// [n1, n2): F = argmin |B_obs F - s_obs|, with B_obs the inverse DCT map
/// (L x q) minus the window rows. One factorization serves every channel.
class WindowedDctSolver {
 public:
  WindowedDctSolver(const DctBasis& basis, std::size_t n1, std::size_t n2,
                    InferenceOptions options = {})
      : n1_(n1), n2_(n2), options_(options) {
    const std::size_t L = basis.frames();
    const std::size_t q = basis.coefficients();
    if (n1 > n2 || n2 > L)
      throw BadRange("window [" + std::to_string(n1) + ", " + std::to_string(n2) +
                     ") outside [0, " + std::to_string(L) + "]");
    if (L - (n2 - n1) < q)
      throw WindowTooLarge("window of " + std::to_string(n2 - n1) + " frames leaves fewer than q=" +
                               std::to_string(q) + " observed frames",
                           L - q);
    const auto m = static_cast<Eigen::Index>(L - (n2 - n1));
    observed_.resize(m, static_cast<Eigen::Index>(q));
    const Eigen::MatrixXd& fwd = basis.forward();
    Eigen::Index r = 0;
    for (std::size_t n = 0; n < L; ++n) {
      if (n >= n1 && n < n2) continue;
      observed_.row(r++) = fwd.col(static_cast<Eigen::Index>(n)).transpose();
    }
    qr_.compute(observed_);
    const Eigen::MatrixXd R =
        qr_.matrixQR().topRows(static_cast<Eigen::Index>(q)).triangularView<Eigen::Upper>();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    condition_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                         : std::numeric_limits<double>::infinity();
  }

  double condition() const noexcept { return condition_; }
  const Eigen::MatrixXd& observed_rows() const noexcept { return observed_; }

  /// Entries of `channel` outside the window, in frame order.
  Eigen::VectorXd observed_values(std::span<const double> channel) const {
    Eigen::VectorXd s(observed_.rows());
    Eigen::Index r = 0;
    for (std::size_t n = 0; n < channel.size(); ++n)
      if (n < n1_ || n >= n2_) s(r++) = channel[n];
    return s;
  }

  Eigen::VectorXd solve(std::span<const double> channel) const {
    if (channel.size() != static_cast<std::size_t>(observed_.rows()) + (n2_ - n1_))
      throw DimMismatch("channel length differs from the DCT basis");
    const Eigen::VectorXd s = observed_values(channel);
    Eigen::VectorXd x = qr_.solve(s);
    if (condition_ > options_.refine_above_condition) x = refine(s, x);
    return x;
  }

 private:
  Eigen::VectorXd solve_upper(const Eigen::VectorXd& rhs) const {
    const auto q = observed_.cols();
    return qr_.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(rhs);
  }
  Eigen::VectorXd solve_upper_transposed(const Eigen::VectorXd& rhs) const {
    const auto q = observed_.cols();
    return qr_.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>().transpose().solve(rhs);
  }

  // Iterative refinement on the augmented system [I B; B^T 0][r; x] = [s; 0],
  // residuals accumulated in extended precision, corrections solved with the
  // double-precision QR factors.
  Eigen::VectorXd refine(const Eigen::VectorXd& s, const Eigen::VectorXd& x0) const {
    using detail::wide_float;
    const Eigen::Index m = observed_.rows();
    const Eigen::Index q = observed_.cols();
    std::vector<wide_float> x(static_cast<std::size_t>(q)), r(static_cast<std::size_t>(m));
    for (Eigen::Index k = 0; k < q; ++k) x[static_cast<std::size_t>(k)] = x0(k);
    for (Eigen::Index i = 0; i < m; ++i) {
      wide_float acc = s(i);
      for (Eigen::Index k = 0; k < q; ++k)
        acc -= static_cast<wide_float>(observed_(i, k)) * x[static_cast<std::size_t>(k)];
      r[static_cast<std::size_t>(i)] = acc;
    }
    Eigen::VectorXd f(m), g(q);
    for (int it = 0; it < options_.max_refinements; ++it) {
      for (Eigen::Index i = 0; i < m; ++i) {
        wide_float acc = static_cast<wide_float>(s(i)) - r[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < q; ++k)
          acc -= static_cast<wide_float>(observed_(i, k)) * x[static_cast<std::size_t>(k)];
        f(i) = static_cast<double>(acc);
      }
      for (Eigen::Index k = 0; k < q; ++k) {
        wide_float acc = 0;
        for (Eigen::Index i = 0; i < m; ++i)
          acc -= static_cast<wide_float>(observed_(i, k)) * r[static_cast<std::size_t>(i)];
        g(k) = static_cast<double>(acc);
      }
      const Eigen::VectorXd h = solve_upper_transposed(g);
      Eigen::VectorXd d = qr_.householderQ().adjoint() * f;
      const Eigen::VectorXd dx = solve_upper(d.head(q) - h);
      d.head(q) = h;
      const Eigen::VectorXd dr = qr_.householderQ() * d;
      double x_norm = 0.0;
      for (Eigen::Index k = 0; k < q; ++k) {
        x[static_cast<std::size_t>(k)] += dx(k);
        x_norm = std::max(x_norm, std::abs(static_cast<double>(x[static_cast<std::size_t>(k)])));
      }
      for (Eigen::Index i = 0; i < m; ++i) r[static_cast<std::size_t>(i)] += dr(i);
      if (dx.cwiseAbs().maxCoeff() <= 1e-24 * x_norm) break;
    }
    Eigen::VectorXd out(q);
    for (Eigen::Index k = 0; k < q; ++k) out(k) = static_cast<double>(x[static_cast<std::size_t>(k)]);
    return out;
  }

  std::size_t n1_, n2_;
  InferenceOptions options_;
  Eigen::MatrixXd observed_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  double condition_ = 1.0;
};

inline Eigen::VectorXd infer_features_without_segment(std::span<const double> channel,
                                                      const DctBasis& basis, std::size_t n1,
                                                      std::size_t n2,
                                                      const InferenceOptions& options = {}) {
  if (channel.size() != basis.frames()) throw DimMismatch("channel length differs from the DCT basis");
  return WindowedDctSolver(basis, n1, n2, options).solve(channel);
}

// ---------------------------------------------------------------------------
// Impact curves

struct ImpactCurve {
  std::string trial_id;
  Criterion criterion = Criterion::GRS;
  std::size_t window_length = 100;
  std::size_t stride = 25;
  std::size_t coefficients = 50;
  std::vector<std::size_t> positions;  // window start frames
  std::vector<double> impacts;         // psi - psi_hat per position
  double baseline_score = 0.0;         // psi, prediction on the whole trial
  std::optional<double> ground_truth;
  std::optional<std::vector<std::optional<Gesture>>> gesture_overlay;
};

/// impact = psi - psi_hat, where psi_hat predicts from DCT features inferred
/// with each window of frames unobserved.
inline ImpactCurve impact_curve(const TrialRecord& trial, const TrainedPipeline& pipeline,
                                Criterion criterion, std::size_t window_length = 100,
                                std::size_t stride = 25, const InferenceOptions& options = {}) {
  if (pipeline.family != FeatureFamily::DCT)
    throw PipelineFamilyMismatch("task highlights need a DCT pipeline, got " +
                                 std::string(to_string(pipeline.family)));
  if (stride < 1) throw BadParam("highlight stride must be >= 1");
  const auto& series = trial.series;
  const std::size_t L = series.frames();
  const std::size_t q = pipeline.features.dct_q;
  const std::size_t D = series.dims();
  if (window_length > L || L - window_length < q)
    throw WindowTooLarge("window of " + std::to_string(window_length) + " frames on a " +
                             std::to_string(L) + "-frame trial leaves fewer than q=" +
                             std::to_string(q) + " observed frames",
                         L >= q ? L - q : 0);

  const DctBasis basis(L, q);
  const FeatureVector full = dct_features(series, q);
  ImpactCurve curve;
  curve.trial_id = trial.id();
  curve.criterion = criterion;
  curve.window_length = window_length;
  curve.stride = stride;
  curve.coefficients = q;
  curve.baseline_score = pipeline.predict(full.view(), criterion);
  curve.ground_truth = trial.labels.score(criterion);
  for (std::size_t p = 0; p + window_length <= L; p += stride) curve.positions.push_back(p);
  curve.impacts.resize(curve.positions.size());

  parallel_for(curve.positions.size(), [&](std::size_t i) {
    const std::size_t p = curve.positions[i];
    const WindowedDctSolver solver(basis, p, p + window_length, options);
    Eigen::VectorXd inferred(static_cast<Eigen::Index>(D * q));
    for (std::size_t d = 0; d < D; ++d)
      inferred.segment(static_cast<Eigen::Index>(d * q), static_cast<Eigen::Index>(q)) =
          solver.solve(series.channel(d));
    curve.impacts[i] = curve.baseline_score - pipeline.predict(inferred, criterion);
  });
  return curve;
}

/// Per position, the gesture covering most frames of the window; frames
/// outside every segment vote for "no gesture". Ties go to the lower gesture
/// id, and any gesture beats "no gesture" on a tie.
inline ImpactCurve attach_gesture_overlay(ImpactCurve curve,
                                          const std::vector<GestureSegment>& transcript) {
  std::vector<std::optional<Gesture>> labels;
  labels.reserve(curve.positions.size());
  for (std::size_t p : curve.positions) {
    const std::size_t end = p + curve.window_length;
    std::array<std::size_t, kGestureCount + 1> count{};
    std::size_t covered = 0;
    for (const auto& seg : transcript) {
      const std::size_t lo = std::max(p, seg.start_frame);
      const std::size_t hi = std::min(end, seg.end_frame);
      if (hi > lo) {
        count[static_cast<std::size_t>(seg.gesture)] += hi - lo;
        covered += hi - lo;
      }
    }
    const std::size_t none = curve.window_length - covered;
    std::optional<Gesture> best;
    std::size_t best_count = 0;
    for (int g = 1; g <= kGestureCount; ++g)
      if (count[static_cast<std::size_t>(g)] > best_count) {
        best_count = count[static_cast<std::size_t>(g)];
        best = static_cast<Gesture>(g);
      }
    if (none > best_count) best.reset();
    labels.push_back(best);
  }
  curve.gesture_overlay = std::move(labels);
  return curve;
}

inline void write_impact_csv(std::ostream& out, const ImpactCurve& curve) {
  out << "position,impact,gesture\n";
  for (std::size_t i = 0; i < curve.positions.size(); ++i) {
    out << curve.positions[i] << ',' << format_double(curve.impacts[i]) << ',';
    if (curve.gesture_overlay && (*curve.gesture_overlay)[i])
      out << gesture_name(*(*curve.gesture_overlay)[i]);
    out << '\n';
  }
}

inline nlohmann::json impact_json(const ImpactCurve& curve) {
  nlohmann::json j;
  j["trial"] = curve.trial_id;
  j["criterion"] = std::string(to_string(curve.criterion));
  j["predicted_score"] = curve.baseline_score;
  j["ground_truth_score"] = curve.ground_truth ? nlohmann::json(*curve.ground_truth) : nlohmann::json();
  j["window_length"] = curve.window_length;
  j["stride"] = curve.stride;
  j["dct_coefficients"] = curve.coefficients;
  j["positions"] = curve.positions;
  j["impacts"] = curve.impacts;
  if (curve.gesture_overlay) {
    nlohmann::json g = nlohmann::json::array();
    for (const auto& v : *curve.gesture_overlay) g.push_back(v ? nlohmann::json(gesture_name(*v)) : nlohmann::json());
    j["gestures"] = g;
  }
  return j;
}

}  // namespace skillseries
