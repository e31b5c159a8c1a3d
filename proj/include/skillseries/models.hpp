#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skillseries/data.hpp"
#include "skillseries/errors.hpp"
#include "skillseries/util.hpp"

namespace skillseries {

// ---------------------------------------------------------------------------
// 1-nearest-neighbor classifier

struct KnnModel {
  Eigen::MatrixXd train_points;  // n x k
  std::vector<SkillLevel> train_labels;

  KnnModel() = default;
  KnnModel(Eigen::MatrixXd points, std::vector<SkillLevel> labels)
      : train_points(std::move(points)), train_labels(std::move(labels)) {
    if (static_cast<std::size_t>(train_points.rows()) != train_labels.size())
      throw DimMismatch("k-NN point and label counts differ");
  }
};

/// Label of the closest training point (Euclidean); ties go to the lowest index.
inline SkillLevel knn_classify(const KnnModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (model.train_labels.empty()) throw EmptyModel("k-NN model has no training points");
  if (x.size() != model.train_points.cols())
    throw DimMismatch("k-NN query has " + std::to_string(x.size()) + " dims, model has " +
                      std::to_string(model.train_points.cols()));
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < model.train_points.rows(); ++i) {
    const double d2 = (model.train_points.row(i).transpose() - x).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<std::size_t>(i);
    }
  }
  return model.train_labels[best];
}

// ---------------------------------------------------------------------------
// Linear epsilon-insensitive support vector regression
//
//   minimize  1/2 |w|^2 + C sum_i max(0, |w.x_i + b - y_i| - eps)
//
// solved in the dual over the 2n box variables (alpha_i, alpha*_i) with the
// equality constraint sum(alpha - alpha*) = 0: a dense interior point solve
// whose active set is then polished exactly, falling back to sequential
// minimal optimization with second-order working-set selection. Either way
// the result is certified by the primal-dual gap.

struct SvrOptions {
  double rel_gap_tol = 1e-8;
  double kkt_tol = 1e-12;
  std::size_t max_iter = 20'000'000;
};

struct LinearSvrModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double C = 1.0;
  double epsilon = 0.1;
  std::size_t iterations = 0;
  double primal_objective = 0.0;
  double duality_gap = 0.0;
};

inline double svr_hinge_loss(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, double epsilon) {
  const Eigen::VectorXd r = (X * w).array() + b - y.array();
  return (r.array().abs() - epsilon).max(0.0).sum();
}

inline double svr_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, double C, double epsilon) {
  return 0.5 * w.squaredNorm() + C * svr_hinge_loss(w, b, X, y, epsilon);
}

namespace detail {

/// Bias minimizing the hinge term for fixed w; the minimizer set of this
/// convex piecewise-linear function is an interval, and `hint` is projected
/// onto it.
inline double refine_svr_bias(const Eigen::VectorXd& r, double epsilon, double hint) {
  auto loss = [&](double b) { return ((r.array() + b).abs() - epsilon).max(0.0).sum(); };
  std::vector<double> breaks;
  breaks.reserve(static_cast<std::size_t>(2 * r.size()));
  for (double ri : r) {
    breaks.push_back(-ri - epsilon);
    breaks.push_back(-ri + epsilon);
  }
  std::vector<double> values(breaks.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < breaks.size(); ++t) best = std::min(best, values[t] = loss(breaks[t]));
  const double slack = 1e-12 * (1.0 + best);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t t = 0; t < breaks.size(); ++t)
    if (values[t] <= best + slack) {
      lo = std::min(lo, breaks[t]);
      hi = std::max(hi, breaks[t]);
    }
  return std::clamp(hint, lo, hi);
}

/// Mehrotra predictor-corrector interior point for the SVR dual
///   min 1/2 x'Qx + p'x,  sum(alpha) - sum(alpha*) = 0,  0 <= x <= C,
/// x = (alpha, alpha*), Q = [K -K; -K K], p = (eps - y, eps + y), solved in
/// the scaled variable x / C. Returns x on convergence.
inline std::optional<Eigen::VectorXd> svr_dual_ipm(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                                                   double C, double epsilon, int max_iter = 200,
                                                   int* iterations = nullptr) {
  const Eigen::Index n = K.rows();
  const Eigen::Index m = 2 * n;
  Eigen::MatrixXd Q(m, m);
  Q << C * K, -C * K, -C * K, C * K;
  Eigen::VectorXd p(m);
  p << epsilon - y.array(), epsilon + y.array();
  Eigen::VectorXd a(m);
  a << Eigen::VectorXd::Ones(n), -Eigen::VectorXd::Ones(n);

  Eigen::VectorXd x = Eigen::VectorXd::Constant(m, 0.5);
  const double scale = 1.0 + p.cwiseAbs().maxCoeff() + Q.cwiseAbs().maxCoeff();
  Eigen::VectorXd z = Eigen::VectorXd::Constant(m, scale);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(m, scale);
  double lambda = 0.0;

  auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double step = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
    return step;
  };

  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd u = 1.0 - x.array();
    const Eigen::VectorXd rd = Q * x + p - a * lambda - z + s;
    const double rp = a.dot(x);
    const double mu = (x.dot(z) + u.dot(s)) / static_cast<double>(2 * m);
    if (rd.cwiseAbs().maxCoeff() <= 1e-13 * scale && std::abs(rp) <= 1e-13 * static_cast<double>(m) &&
        mu <= 1e-15 * scale) {
      if (iterations) *iterations = it;
      return x * C;
    }

    const Eigen::VectorXd D = z.cwiseQuotient(x) + s.cwiseQuotient(u);
    Eigen::MatrixXd M = Q;
    M.diagonal() += D;
    const Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd v2 = llt.solve(a);
    const double av2 = a.dot(v2);

    auto direction = [&](const Eigen::VectorXd& rxz, const Eigen::VectorXd& rus, Eigen::VectorXd& dx,
                         double& dl, Eigen::VectorXd& dz, Eigen::VectorXd& ds) {
      const Eigen::VectorXd h = -rd + rxz.cwiseQuotient(x) - rus.cwiseQuotient(u);
      const Eigen::VectorXd v1 = llt.solve(h);
      dl = (-rp - a.dot(v1)) / av2;
      dx = v1 + v2 * dl;
      dz = (rxz - z.cwiseProduct(dx)).cwiseQuotient(x);
      ds = (rus + s.cwiseProduct(dx)).cwiseQuotient(u);
    };

    Eigen::VectorXd dx, dz, ds;
    double dl = 0.0;
    direction(-x.cwiseProduct(z), -u.cwiseProduct(s), dx, dl, dz, ds);
    const double step_aff = std::min({max_step(x, dx), max_step(u, -dx), max_step(z, dz), max_step(s, ds)});
    const double mu_aff = ((x + step_aff * dx).dot(z + step_aff * dz) +
                           (u - step_aff * dx).dot(s + step_aff * ds)) /
                          static_cast<double>(2 * m);
    const double sigma = std::pow(mu_aff / mu, 3);
    const Eigen::VectorXd rxz = (-x.cwiseProduct(z) - dx.cwiseProduct(dz)).array() + sigma * mu;
    const Eigen::VectorXd rus = (-u.cwiseProduct(s) + dx.cwiseProduct(ds)).array() + sigma * mu;
    direction(rxz, rus, dx, dl, dz, ds);
    const double step =
        std::min(1.0, 0.995 * std::min({max_step(x, dx), max_step(u, -dx), max_step(z, dz), max_step(s, ds)}));
    x += step * dx;
    lambda += step * dl;
    z += step * dz;
    s += step * ds;
    if (!x.allFinite() || !z.allFinite() || !s.allFinite()) return std::nullopt;
  }
  if (iterations) *iterations = max_iter;
  return x * C;
}

}  // namespace detail

inline LinearSvrModel svr_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double C,
                              double epsilon, const SvrOptions& options = {}) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw DegenerateInput("SVR needs at least two training rows");
  if (y.size() != n) throw DimMismatch("SVR target length differs from row count");
  if (!(C > 0.0)) throw BadParam("SVR C must be positive");
  if (!(epsilon >= 0.0)) throw BadParam("SVR epsilon must be non-negative");

  const Eigen::MatrixXd K = X * X.transpose();
  const Eigen::Index l2 = 2 * n;
  // Variable t < n is alpha_t (sign +1), t >= n is alpha*_{t-n} (sign -1).
  auto sign = [n](Eigen::Index t) { return t < n ? 1.0 : -1.0; };
  auto row = [n](Eigen::Index t) { return t < n ? t : t - n; };
  auto Q = [&](Eigen::Index a, Eigen::Index b) { return sign(a) * sign(b) * K(row(a), row(b)); };

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(l2);
  Eigen::VectorXd G(l2);
  for (Eigen::Index t = 0; t < n; ++t) {
    G(t) = epsilon - y(t);
    G(t + n) = epsilon + y(t);
  }
  constexpr double kTau = 1e-12;
  auto at_upper = [&](Eigen::Index t) { return alpha(t) >= C; };
  auto at_lower = [&](Eigen::Index t) { return alpha(t) <= 0.0; };

  auto beta = [&] {
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) b(i) = alpha(i) - alpha(i + n);
    return b;
  };
  auto smo_bias = [&] {
    double ub = std::numeric_limits<double>::infinity();
    double lb = -ub;
    double sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index t = 0; t < l2; ++t) {
      const double yG = sign(t) * G(t);
      if (at_upper(t)) {
        if (sign(t) < 0) ub = std::min(ub, yG); else lb = std::max(lb, yG);
      } else if (at_lower(t)) {
        if (sign(t) > 0) ub = std::min(ub, yG); else lb = std::max(lb, yG);
      } else {
        ++n_free;
        sum_free += yG;
      }
    }
    const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);
    return -rho;
  };

  LinearSvrModel model;
  model.C = C;
  model.epsilon = epsilon;
  auto finalize = [&] {
    const Eigen::VectorXd b = beta();
    model.weights = X.transpose() * b;
    const Eigen::VectorXd r = X * model.weights - y;
    model.bias = detail::refine_svr_bias(r, epsilon, smo_bias());
    model.primal_objective = svr_objective(model.weights, model.bias, X, y, C, epsilon);
    const double dual = -0.5 * b.dot(K * b) - epsilon * alpha.sum() + y.dot(b);
    model.duality_gap = std::max(0.0, model.primal_objective - dual);
    return model.duality_gap <=
           options.rel_gap_tol * std::max(std::abs(model.primal_objective), std::abs(dual));
  };

  // Active-set polish: guess the final free/bound pattern, solve the KKT
  // equations of the free variables exactly, and keep the result only when it
  // is feasible and the duality gap certifies it. Patterns come from the
  // current alphas and from the current residuals at a few tolerances.
  auto reset_gradient = [&] {
    const Eigen::VectorXd Kbeta = K * beta();
    for (Eigen::Index t = 0; t < n; ++t) {
      G(t) = Kbeta(t) + epsilon - y(t);
      G(t + n) = -Kbeta(t) + epsilon + y(t);
    }
  };
  // code[i]: 0 = beta fixed at 0, +2 / -2 = beta fixed at +C / -C,
  // +1 / -1 = free alpha_i / free alpha*_i.
  std::vector<std::vector<int>> tried;
  auto solve_pattern = [&](const std::vector<int>& code) {
    if (std::find(tried.begin(), tried.end(), code) != tried.end()) return false;
    tried.push_back(code);
    std::vector<Eigen::Index> free_rows;
    Eigen::VectorXd b_fixed = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = code[static_cast<std::size_t>(i)];
      if (c == 1 || c == -1) free_rows.push_back(i);
      else b_fixed(i) = c == 2 ? C : (c == -2 ? -C : 0.0);
    }
    const auto m = static_cast<Eigen::Index>(free_rows.size());
    if (m == 0) return false;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    const Eigen::VectorXd Kb = K * b_fixed;
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto ia = free_rows[static_cast<std::size_t>(a)];
      for (Eigen::Index c = 0; c < m; ++c) A(a, c) = K(ia, free_rows[static_cast<std::size_t>(c)]);
      A(a, m) = 1.0;
      A(m, a) = 1.0;
      rhs(a) = y(ia) - code[static_cast<std::size_t>(ia)] * epsilon - Kb(ia);
    }
    rhs(m) = -b_fixed.sum();
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    Eigen::VectorXd sol = lu.solve(rhs);
    sol += lu.solve(rhs - A * sol);
    if (!sol.allFinite()) return false;
    Eigen::VectorXd trial = Eigen::VectorXd::Zero(l2);
    for (Eigen::Index i = 0; i < n; ++i) {
      trial(i) = std::max(b_fixed(i), 0.0);
      trial(i + n) = std::max(-b_fixed(i), 0.0);
    }
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto ia = free_rows[static_cast<std::size_t>(a)];
      const double v = sol(a) * code[static_cast<std::size_t>(ia)];
      if (v < 0.0 || v > C) return false;
      trial(code[static_cast<std::size_t>(ia)] > 0 ? ia : ia + n) = v;
    }
    const Eigen::VectorXd saved = alpha;
    alpha = trial;
    reset_gradient();
    if (finalize()) return true;
    alpha = saved;
    reset_gradient();
    return false;
  };
  auto polish = [&] {
    std::vector<int> code(static_cast<std::size_t>(n), 0);
    bool valid = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool up_free = !at_lower(i) && !at_upper(i), dn_free = !at_lower(i + n) && !at_upper(i + n);
      if (up_free && dn_free) valid = false;
      code[static_cast<std::size_t>(i)] = up_free ? 1 : dn_free ? -1 : at_upper(i) ? 2 : at_upper(i + n) ? -2 : 0;
    }
    if (valid && solve_pattern(code)) return true;
    if (epsilon <= 0.0) return false;
    const Eigen::VectorXd w = X.transpose() * beta();
    const Eigen::VectorXd r0 = X * w - y;
    const Eigen::VectorXd r = r0.array() + detail::refine_svr_bias(r0, epsilon, smo_bias());
    for (double rel : {0.3, 0.1, 3e-2, 1e-2, 1e-3, 1e-5}) {
      const double delta = rel * epsilon;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = std::abs(r(i));
        int c = 0;
        if (std::abs(a - epsilon) <= delta) c = r(i) < 0.0 ? 1 : -1;
        else if (a > epsilon) c = r(i) < 0.0 ? 2 : -2;
        code[static_cast<std::size_t>(i)] = c;
      }
      if (solve_pattern(code)) return true;
    }
    return false;
  };

  // Interior point first; the box-identified pattern is then polished to an
  // exact vertex of the active set. SMO from zero is the fallback.
  bool done = false;
  int ipm_iterations = 0;
  if (const auto x = detail::svr_dual_ipm(K, y, C, epsilon, 200, &ipm_iterations)) {
    alpha = x->cwiseMax(0.0).cwiseMin(C);
    reset_gradient();
    done = polish() || finalize();
    if (!done) {
      alpha.setZero();
      for (Eigen::Index t = 0; t < n; ++t) {
        G(t) = epsilon - y(t);
        G(t + n) = epsilon + y(t);
      }
    }
  }

  const std::size_t check_every = static_cast<std::size_t>(std::max<Eigen::Index>(50, l2));
  std::size_t iter = 0;
  for (; !done; ++iter) {
    if (iter > 0 && iter % check_every == 0 && (finalize() || polish())) break;
    if (iter >= options.max_iter) {
      finalize();
      throw NoConvergence("SVR solver hit its iteration cap", iter, model.duality_gap);
    }

    // Working set: i maximizes the first-order violation, j the second-order gain.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < l2; ++t) {
      if (sign(t) > 0) {
        if (!at_upper(t) && -G(t) >= gmax) { gmax = -G(t); i = t; }
      } else {
        if (!at_lower(t) && G(t) >= gmax) { gmax = G(t); i = t; }
      }
    }
    double best_gain = std::numeric_limits<double>::infinity();
    const double qii = i >= 0 ? K(row(i), row(i)) : 0.0;
    for (Eigen::Index t = 0; t < l2 && i >= 0; ++t) {
      const double qtt = K(row(t), row(t));
      if (sign(t) > 0) {
        if (at_lower(t)) continue;
        const double grad_diff = gmax + G(t);
        gmax2 = std::max(gmax2, G(t));
        if (grad_diff > 0.0) {
          double quad = qii + qtt - 2.0 * sign(i) * Q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double gain = -(grad_diff * grad_diff) / quad;
          if (gain <= best_gain) { best_gain = gain; j = t; }
        }
      } else {
        if (at_upper(t)) continue;
        const double grad_diff = gmax - G(t);
        gmax2 = std::max(gmax2, -G(t));
        if (grad_diff > 0.0) {
          double quad = qii + qtt + 2.0 * sign(i) * Q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double gain = -(grad_diff * grad_diff) / quad;
          if (gain <= best_gain) { best_gain = gain; j = t; }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < options.kkt_tol * (1.0 + y.cwiseAbs().maxCoeff())) {
      finalize();
      break;
    }

    const double old_ai = alpha(i), old_aj = alpha(j);
    const double qij = Q(i, j);
    const double qjj = K(row(j), row(j));
    if (sign(i) != sign(j)) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0.0) {
        if (alpha(j) < 0.0) { alpha(j) = 0.0; alpha(i) = diff; }
      } else {
        if (alpha(i) < 0.0) { alpha(i) = 0.0; alpha(j) = -diff; }
      }
      if (diff > 0.0) {
        if (alpha(i) > C) { alpha(i) = C; alpha(j) = C - diff; }
      } else {
        if (alpha(j) > C) { alpha(j) = C; alpha(i) = C + diff; }
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (G(i) - G(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > C) {
        if (alpha(i) > C) { alpha(i) = C; alpha(j) = sum - C; }
      } else {
        if (alpha(j) < 0.0) { alpha(j) = 0.0; alpha(i) = sum; }
      }
      if (sum > C) {
        if (alpha(j) > C) { alpha(j) = C; alpha(i) = sum - C; }
      } else {
        if (alpha(i) < 0.0) { alpha(i) = 0.0; alpha(j) = sum; }
      }
    }
    const double dai = alpha(i) - old_ai;
    const double daj = alpha(j) - old_aj;
    for (Eigen::Index t = 0; t < l2; ++t) G(t) += Q(i, t) * dai + Q(j, t) * daj;
  }
  model.iterations = done && iter == 0 ? static_cast<std::size_t>(ipm_iterations) : iter;
  const double scale = std::max(std::abs(model.primal_objective), 1e-300);
  if (model.duality_gap > 1e-6 * scale && model.duality_gap > 1e-12)
    throw NoConvergence("SVR stalled above the optimality tolerance", iter, model.duality_gap);
  return model;
}

inline double svr_predict(const LinearSvrModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != model.weights.size())
    throw DimMismatch("SVR input has " + std::to_string(x.size()) + " dims, model has " +
                      std::to_string(model.weights.size()));
  return model.weights.dot(x) + model.bias;
}

inline void write_svr(std::ostream& out, const LinearSvrModel& m) {
  out << "svr " << m.weights.size() << ' ' << format_double(m.C) << ' ' << format_double(m.epsilon)
      << '\n'
      << "weights";
  for (double w : m.weights) out << ' ' << format_double(w);
  out << "\nbias " << format_double(m.bias) << '\n';
}

inline LinearSvrModel read_svr(std::istream& in) {
  LinearSvrModel m;
  std::string tag;
  Eigen::Index k = 0;
  if (!(in >> tag) || tag != "svr" || !(in >> k >> m.C >> m.epsilon))
    throw DataError("SVR block: bad header");
  m.weights.resize(k);
  if (!(in >> tag) || tag != "weights") throw DataError("SVR block: expected weights");
  for (auto& w : m.weights) in >> w;
  if (!(in >> tag) || tag != "bias" || !(in >> m.bias)) throw DataError("SVR block: expected bias");
  return m;
}

}  // namespace skillseries
