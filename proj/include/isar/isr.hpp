#ifndef ISAR_ISR_HPP
#define ISAR_ISR_HPP

// Iterative smooth reweighting: repeated weighted BPDN solves where the
// weights come from a spatially smoothed magnitude of the previous solution,
// which pulls the energy of each scattering centre into a compact cluster.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpdn.hpp"
#include "signal_model.hpp"

namespace isar {

/// Offset added to the smoothed image before inversion.
struct EtaRule {
  enum class Kind { smallest_nonzero, fixed };
  Kind kind = Kind::smallest_nonzero;
  double value = 0.0;

  static EtaRule smallest_nonzero() { return {}; }
  static EtaRule fixed(double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("eta must be positive");
    return {Kind::fixed, v};
  }
};

struct IsrConfig {
  /// Smoothing radius in meters; <= 0 means two grid spacings.
  double radius = 0.0;
  int iterations = 4;
  EtaRule eta;
  SolverConfig solver;

  double radius_for(const ImageGrid& grid) const {
    return radius > 0.0 ? radius : 2.0 * grid.spacing();
  }
  void validate() const {
    if (iterations < 1) throw std::invalid_argument("isr: iterations must be >= 1");
    if (!std::isfinite(radius)) throw std::invalid_argument("isr: radius must be finite");
    solver.validate();
  }
};

class IsrIterationError : public std::runtime_error {
public:
  IsrIterationError(int iteration, const std::string& what)
      : std::runtime_error("isr iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

private:
  int iteration_;
};

/// Cone kernel: 1 - r/d inside the radius, 0 from r = d outwards.
inline double smoothing_kernel(double delta_r, double d) {
  if (delta_r < d) return 1.0 - delta_r / d;
  return 0.0;
}

/// |x| convolved with the cone kernel over grid neighbours closer than d.
/// Pixels near the border only see in-grid neighbours.
inline RVector smooth_image(const ComplexImage& x, const ImageGrid& grid, double d) {
  if (x.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("smooth_image: image length does not match grid");
  if (!(d > 0.0)) throw std::invalid_argument("smooth_image: radius must be positive");

  struct Tap {
    long dx, dy;
    double weight;
  };
  std::vector<Tap> taps;
  const double h = grid.spacing();
  const long reach = static_cast<long>(std::ceil(d / h));
  for (long dy = -reach; dy <= reach; ++dy)
    for (long dx = -reach; dx <= reach; ++dx) {
      const double r = h * std::hypot(static_cast<double>(dx), static_cast<double>(dy));
      const double k = smoothing_kernel(r, d);
      if (k > 0.0) taps.push_back({dx, dy, k});
    }

  const RVector mag = x.values.cwiseAbs();
  const auto nx = static_cast<long>(grid.nx());
  const auto ny = static_cast<long>(grid.ny());
  RVector out = RVector::Zero(mag.size());
  for (long iy = 0; iy < ny; ++iy)
    for (long ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (const Tap& t : taps) {
        const long jx = ix + t.dx;
        const long jy = iy + t.dy;
        if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
        acc += t.weight * mag[jy * nx + jx];
      }
      out[iy * nx + ix] = acc;
    }
  return out;
}

/// W = 1 / (x^D + eta). An all-zero x^D yields unit weights.
inline WeightMatrix reweight(const RVector& smoothed, EtaRule rule = {}) {
  double eta = rule.value;
  if (rule.kind == EtaRule::Kind::smallest_nonzero) {
    eta = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < smoothed.size(); ++i) {
      if (smoothed[i] < 0.0 || !std::isfinite(smoothed[i]))
        throw std::invalid_argument("reweight: smoothed image must be finite and >= 0");
      if (smoothed[i] > 0.0) eta = std::min(eta, smoothed[i]);
    }
    if (!std::isfinite(eta)) return WeightMatrix::unit(static_cast<std::size_t>(smoothed.size()));
  }
  return WeightMatrix((smoothed.array() + eta).inverse().matrix());
}

struct IsrResult {
  ComplexImage image;
  std::vector<SolverReport> reports;
  /// Solution after each iteration, first to last.
  std::vector<ComplexImage> iterates;
  std::vector<std::vector<ParetoPoint>> trajectories;
};

template <LinearOperator Op>
IsrResult isr_solve(const Op& op, const ImageGrid& grid, const RcsAmplitude& y,
                    const IsrConfig& config) {
  config.validate();
  if (op.cols() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("isr_solve: operator does not match grid");
  const double d = config.radius_for(grid);

  IsrResult out;
  SolverConfig solver_cfg = config.solver;
  solver_cfg.weights.reset();
  for (int t = 1; t <= config.iterations; ++t) {
    if (t > 1) solver_cfg.weights = reweight(smooth_image(out.image, grid, d), config.eta);
    BpdnResult step;
    try {
      step = solve_bpdn(op, y, solver_cfg);
    } catch (const std::exception& e) {
      throw IsrIterationError(t, e.what());
    }
    out.image = step.image;
    out.iterates.push_back(std::move(step.image));
    out.reports.push_back(step.report);
    out.trajectories.push_back(std::move(step.trajectory));
  }
  return out;
}

inline IsrResult isr_solve(const RcsAmplitude& y, const ImageGrid& grid,
                           const MeasurementGeometry& geom, const IsrConfig& config) {
  if (y.size() != static_cast<Eigen::Index>(geom.size()))
    throw DimensionError("isr_solve: data length does not match geometry");
  const MeasurementOperator op(grid, geom);
  return isr_solve(op, grid, y, config);
}

}  // namespace isar

#endif  // ISAR_ISR_HPP
