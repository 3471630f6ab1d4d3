#ifndef ISAR_BPDN_HPP
#define ISAR_BPDN_HPP

// Weighted complex basis pursuit denoise,
//
//   minimize  sum_j w_j |x_j|   subject to  ||A x - y||_2 <= kappa,
//
// solved matrix-free by Newton root finding on the Pareto curve
// phi(tau) = min { ||A x - y||_2 : sum_j w_j |x_j| <= tau }, each LASSO
// subproblem handled by a nonmonotone spectral projected gradient method.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "signal_model.hpp"

namespace isar {

/// Positive per-pixel weights for the weighted one-norm.
class WeightMatrix {
public:
  WeightMatrix() = default;
  explicit WeightMatrix(RVector w) : w_(std::move(w)) {
    for (Eigen::Index i = 0; i < w_.size(); ++i)
      if (!(w_[i] > 0.0) || !std::isfinite(w_[i]))
        throw std::invalid_argument("weights must be positive and finite");
  }
  static WeightMatrix unit(std::size_t n) {
    return WeightMatrix(RVector::Ones(static_cast<Eigen::Index>(n)));
  }
  static WeightMatrix constant(std::size_t n, double c) {
    return WeightMatrix(RVector::Constant(static_cast<Eigen::Index>(n), c));
  }

  const RVector& values() const { return w_; }
  Eigen::Index size() const { return w_.size(); }
  double operator[](Eigen::Index i) const { return w_[i]; }

private:
  RVector w_;
};

enum class Termination { converged, budget_exhausted };

inline std::string_view to_string(Termination t) {
  return t == Termination::converged ? "converged" : "budget_exhausted";
}

struct SolverConfig {
  double kappa = 0.0;
  int max_outer_iterations = 40;
  long max_matvecs = 20000;
  double optimality_tol = 1e-5;
  /// Empty means unit weights.
  std::optional<WeightMatrix> weights;

  // Spectral projected gradient internals.
  double bp_tol = 1e-6;
  double step_min = 1e-16;
  double step_max = 1e5;
  int n_prev_values = 3;
  int max_line_errors = 10;

  void validate() const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
      throw std::invalid_argument("kappa must be finite and >= 0");
    if (!(optimality_tol > 0.0) || !(bp_tol > 0.0))
      throw std::invalid_argument("solver tolerances must be positive");
    if (max_outer_iterations < 1 || max_matvecs < 1)
      throw std::invalid_argument("solver budgets must be >= 1");
  }
};

/// kappa = ratio * ||y||_2; the default ratio 0.01 is the usual misfit estimate.
inline double kappa_from_ratio(const RcsAmplitude& y, double ratio = 0.01) {
  return ratio * y.values.norm();
}

struct SolverReport {
  double residual = 0.0;
  double weighted_l1 = 0.0;
  long matvecs = 0;
  int outer_iterations = 0;
  Termination termination = Termination::converged;

  friend bool operator==(const SolverReport&, const SolverReport&) = default;
};

/// One point on the Pareto root-finding trajectory, logged after each
/// LASSO subproblem (i.e. whenever tau changes) and at exit.
struct ParetoPoint {
  int outer_iter = 0;
  double tau = 0.0;
  double residual = 0.0;
  double weighted_l1 = 0.0;
  long matvecs = 0;
};

struct BpdnResult {
  ComplexImage image;
  SolverReport report;
  std::vector<ParetoPoint> trajectory;
};

template <typename Op>
concept LinearOperator = requires(const Op& op, const CVector& in, CVector& out) {
  { op.rows() } -> std::convertible_to<Eigen::Index>;
  { op.cols() } -> std::convertible_to<Eigen::Index>;
  op.apply(in, out);
  op.apply_adjoint(in, out);
};

/// Euclidean projection of v onto { u : sum_j w_j |u_j| <= tau }. Each entry
/// keeps its phase; magnitudes are soft-thresholded by lambda * w_j with the
/// multiplier lambda found by a sort-and-scan over the breakpoints |v_j|/w_j.
inline CVector project_weighted_l1_ball(const CVector& v, const RVector& w, double tau) {
  if (v.size() != w.size()) throw DimensionError("projection: weight length mismatch");
  if (tau < 0.0) throw std::invalid_argument("projection: tau must be >= 0");
  const Eigen::Index n = v.size();
  if (n == 0) return v;
  if (tau == 0.0) return CVector::Zero(n);

  RVector mag = v.cwiseAbs();
  if (mag.dot(w) <= tau) return v;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return mag[a] / w[a] > mag[b] / w[b];
  });

  double lambda = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Eigen::Index j = order[k];
    s1 += w[j] * mag[j];
    s2 += w[j] * w[j];
    lambda = (s1 - tau) / s2;
    const double next = k + 1 < order.size() ? mag[order[k + 1]] / w[order[k + 1]] : 0.0;
    if (lambda >= next) break;
  }
  lambda = std::max(lambda, 0.0);

  CVector out(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double shrunk = mag[j] - lambda * w[j];
    out[j] = shrunk > 0.0 ? v[j] * (shrunk / mag[j]) : cdouble{0.0, 0.0};
  }
  return out;
}

inline CVector project_weighted_l1_ball(const CVector& v, const WeightMatrix& w, double tau) {
  return project_weighted_l1_ball(v, w.values(), tau);
}

template <LinearOperator Op>
class BpdnSolver {
public:
  BpdnSolver(const Op& op, SolverConfig config) : op_(op), cfg_(std::move(config)) {
    cfg_.validate();
    const auto n = static_cast<std::size_t>(op_.cols());
    if (cfg_.weights) {
      if (cfg_.weights->size() != op_.cols())
        throw DimensionError("solver: weight length does not match image size");
      w_ = cfg_.weights->values();
    } else {
      w_ = WeightMatrix::unit(n).values();
    }
  }

  BpdnResult solve(const CVector& b) {
    if (b.size() != op_.rows()) throw DimensionError("solver: data length mismatch");
    detail::require_finite(b, "solve_bpdn");

    matvecs_ = 0;
    BpdnResult result;
    const Eigen::Index n = op_.cols();
    const double sigma = cfg_.kappa;
    const double b_norm = b.norm();

    if (b_norm <= sigma) {
      result.image.values = CVector::Zero(n);
      result.report = {b_norm, 0.0, 0, 0, Termination::converged};
      result.trajectory.push_back({0, 0.0, b_norm, 0.0, 0});
      return result;
    }

    // Scale for relative root errors; kappa = 0 asks for a basis pursuit fit.
    const double sigma_scale = std::max(sigma, cfg_.bp_tol * b_norm);
    const double opt_tol = cfg_.optimality_tol;

    double tau = 0.0;
    CVector x = CVector::Zero(n);
    CVector r = b;
    CVector g;
    adjoint(r, g);
    g = -g;
    double f = 0.5 * r.squaredNorm();

    double step_max = cfg_.step_max;
    double g_step = step_max;
    {
      const CVector dx = project(x - g, tau) - x;
      const double dx_norm = dx.cwiseAbs().maxCoeff();
      if (dx_norm >= 1.0 / step_max)
        g_step = std::min(step_max, std::max(cfg_.step_min, 1.0 / dx_norm));
    }

    std::vector<double> last_f(static_cast<std::size_t>(cfg_.n_prev_values),
                               -std::numeric_limits<double>::infinity());
    last_f[0] = f;
    double f_best = f;
    CVector x_best = x;
    std::optional<CVector> feasible_best;
    double feasible_best_l1 = std::numeric_limits<double>::infinity();

    int line_errors_left = cfg_.max_line_errors;
    int outer = 0;
    bool updated_tau_last = false;
    bool converged = false;
    long iter = 0;

    while (true) {
      const double r_norm = r.norm();
      const double g_norm = dual_norm(g);
      const double primal_l1 = weighted_l1(x);
      const double gap = r.dot(r - b).real() + tau * g_norm;
      const double r_gap = std::abs(gap) / std::max(f, 0.5 * sigma_scale * sigma_scale);
      const double a_error1 = r_norm - sigma;
      const double r_error1 = std::abs(a_error1) / sigma_scale;
      const double r_error2 =
          std::abs(f - 0.5 * sigma * sigma) / std::max(f, 0.5 * sigma_scale * sigma_scale);

      if (r_norm <= sigma * (1.0 + opt_tol) && primal_l1 < feasible_best_l1) {
        feasible_best = x;
        feasible_best_l1 = primal_l1;
      }

      // A root needs both |r - kappa| and the LASSO duality gap small; the
      // gap bounds how far the weighted one-norm is from optimal.
      const bool root = r_error1 <= opt_tol && r_gap <= opt_tol;
      const bool bp_solution = r_norm <= cfg_.bp_tol * b_norm;
      if (root || bp_solution) converged = true;
      // g ~ 0 means a least-squares point that cannot reach kappa.
      const bool least_squares = g_norm <= cfg_.bp_tol * r_norm;
      if (converged || least_squares || matvecs_ >= cfg_.max_matvecs) {
        result.trajectory.push_back({outer, tau, r_norm, primal_l1, matvecs_});
        break;
      }

      // Newton step on tau once the current subproblem is solved to a
      // tolerance that tightens as the residual approaches kappa.
      const bool subproblem_done = r_gap <= std::max(opt_tol, 0.1 * r_error2);
      const bool update_tau = subproblem_done && !updated_tau_last && iter > 0;
      const bool initial_update = iter == 0;
      updated_tau_last = false;

      if (update_tau || initial_update) {
        result.trajectory.push_back({outer, tau, r_norm, primal_l1, matvecs_});
        if (outer >= cfg_.max_outer_iterations) break;
        const double tau_old = tau;
        tau = std::max(0.0, tau + r_norm * a_error1 / g_norm);
        ++outer;
        updated_tau_last = !initial_update;
        if (tau < tau_old) {
          // The ball shrank; restart from the projected (feasible) point.
          x = project(x, tau);
          CVector ax;
          forward(x, ax);
          r = b - ax;
          f = 0.5 * r.squaredNorm();
          adjoint(r, g);
          g = -g;
        }
        // Function history refers to the previous subproblem.
        std::fill(last_f.begin(), last_f.end(), -std::numeric_limits<double>::infinity());
        last_f[0] = f;
      }

      // Projected gradient step and line search.
      const double f_old = f;
      const CVector x_old = x;
      const CVector g_old = g;
      const CVector r_old = r;
      const double f_max = *std::max_element(last_f.begin(), last_f.end());

      bool line_ok = line_search_curvy(x_old, g_step, g, f_max, b, tau, x, r, f);
      if (!line_ok) {
        x = x_old;
        f = f_old;
        const CVector dx = project(x - g_step * g, tau) - x;
        const double gtd = g.dot(dx).real();
        line_ok = line_search_feasible(f_old, x_old, dx, gtd, f_max, b, x, r, f);
      }
      if (!line_ok) {
        x = x_old;
        f = f_old;
        r = r_old;
        if (line_errors_left <= 0) {
          result.trajectory.push_back({outer, tau, r.norm(), weighted_l1(x), matvecs_});
          break;
        }
        step_max /= 10.0;
        --line_errors_left;
      }

      if (line_ok) {
        adjoint(r, g);
        g = -g;
        const CVector s = x - x_old;
        const CVector y = g - g_old;
        const double sts = s.squaredNorm();
        const double sty = s.dot(y).real();
        g_step = sty <= 0.0 ? step_max : std::min(step_max, std::max(cfg_.step_min, sts / sty));
      } else {
        g = g_old;
        g_step = std::min(step_max, g_step);
      }

      ++iter;
      if (f > 0.5 * sigma * sigma) {
        last_f[static_cast<std::size_t>(iter % cfg_.n_prev_values)] = f;
        if (f_best > f) {
          f_best = f;
          x_best = x;
        }
      }
    }

    if (!converged) {
      if (feasible_best) {
        x = *feasible_best;
      } else if (0.5 * r.squaredNorm() > f_best) {
        x = x_best;
      }
      forward(x, r);
      r = b - r;
    }

    result.image.values = std::move(x);
    result.report.residual = r.norm();
    result.report.weighted_l1 = weighted_l1(result.image.values);
    result.report.matvecs = matvecs_;
    result.report.outer_iterations = outer;
    result.report.termination = converged ? Termination::converged : Termination::budget_exhausted;
    return result;
  }

  long matvecs() const { return matvecs_; }

private:
  double weighted_l1(const CVector& x) const { return x.cwiseAbs().dot(w_); }
  double dual_norm(const CVector& g) const { return g.cwiseAbs().cwiseQuotient(w_).maxCoeff(); }
  CVector project(const CVector& v, double tau) const {
    return project_weighted_l1_ball(v, w_, tau);
  }

  void forward(const CVector& x, CVector& out) {
    op_.apply(x, out);
    ++matvecs_;
  }
  void adjoint(const CVector& y, CVector& out) {
    op_.apply_adjoint(y, out);
    ++matvecs_;
  }

  // Backtracking along the projected arc x(step) = P(x - step * scale * d).
  bool line_search_curvy(const CVector& x0, double g_step, const CVector& g, double f_max,
                         const CVector& b, double tau, CVector& x_new, CVector& r_new,
                         double& f_new) {
    constexpr double gamma = 1e-4;
    constexpr int max_its = 10;
    const double n_sqrt = std::sqrt(static_cast<double>(x0.size()));
    const CVector d = g_step * g;
    double step = 1.0;
    double scale = 1.0;
    double s_norm = 0.0;
    int n_safe = 0;
    CVector ax;
    for (int it = 0;; ++it) {
      x_new = project(x0 - (step * scale) * d, tau);
      forward(x_new, ax);
      r_new = b - ax;
      f_new = 0.5 * r_new.squaredNorm();
      const CVector s = x_new - x0;
      const double gts = scale * d.dot(s).real();
      if (gts >= 0.0) return false;
      if (f_new < f_max + gamma * step * gts) return true;
      if (it >= max_its || matvecs_ >= cfg_.max_matvecs) return false;
      step /= 2.0;
      const double s_norm_old = s_norm;
      s_norm = s.norm() / n_sqrt;
      if (std::abs(s_norm - s_norm_old) <= 1e-6 * s_norm) {
        const double d_norm = d.norm() / n_sqrt;
        scale = s_norm / d_norm / std::pow(2.0, n_safe);
        ++n_safe;
      }
    }
  }

  // Backtracking with safeguarded quadratic interpolation along a feasible
  // direction dx.
  bool line_search_feasible(double f0, const CVector& x0, const CVector& dx, double gtd,
                            double f_max, const CVector& b, CVector& x_new, CVector& r_new,
                            double& f_new) {
    constexpr double gamma = 1e-4;
    constexpr int max_its = 10;
    gtd = -std::abs(gtd);
    double step = 1.0;
    CVector ax;
    for (int it = 0;; ++it) {
      x_new = x0 + step * dx;
      forward(x_new, ax);
      r_new = b - ax;
      f_new = 0.5 * r_new.squaredNorm();
      if (f_new < f_max + gamma * step * gtd) return true;
      if (it >= max_its || matvecs_ >= cfg_.max_matvecs) return false;
      if (step <= 0.1) {
        step /= 2.0;
      } else {
        double tmp = (-gtd * step * step) / (2.0 * (f_new - f0 - step * gtd));
        if (!(tmp >= 0.1) || tmp > 0.9 * step) tmp = step / 2.0;
        step = tmp;
      }
    }
  }

  const Op& op_;
  SolverConfig cfg_;
  RVector w_;
  long matvecs_ = 0;
};

template <LinearOperator Op>
BpdnResult solve_bpdn(const Op& op, const RcsAmplitude& y, const SolverConfig& config) {
  BpdnSolver<Op> solver(op, config);
  return solver.solve(y.values);
}

inline BpdnResult solve_bpdn(const RcsAmplitude& y, const ImageGrid& grid,
                             const MeasurementGeometry& geom, const SolverConfig& config) {
  if (y.size() != static_cast<Eigen::Index>(geom.size()))
    throw DimensionError("solve_bpdn: data length does not match geometry");
  const MeasurementOperator op(grid, geom);
  return solve_bpdn(op, y, config);
}

/// The (tau, residual) trajectory of the Pareto root finding.
template <LinearOperator Op>
std::vector<ParetoPoint> pareto_root_find(const Op& op, const RcsAmplitude& y,
                                          const SolverConfig& config) {
  return solve_bpdn(op, y, config).trajectory;
}

inline std::vector<ParetoPoint> pareto_root_find(const RcsAmplitude& y, const ImageGrid& grid,
                                                 const MeasurementGeometry& geom,
                                                 const SolverConfig& config) {
  return solve_bpdn(y, grid, geom, config).trajectory;
}

}  // namespace isar

#endif  // ISAR_BPDN_HPP
