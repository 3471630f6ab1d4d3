#ifndef ISAR_BACKPROJECTION_HPP
#define ISAR_BACKPROJECTION_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "signal_model.hpp"

namespace isar {

enum class WindowKind { none, hann };

struct WindowSpec {
  WindowKind kind = WindowKind::hann;
};

namespace detail {

// Symmetric Hann taper; a single-sample axis gets weight 1. Two samples would
// put both at zero, which cannot be normalised.
inline std::vector<double> hann_axis(std::size_t n) {
  if (n < 2) return std::vector<double>(n, 1.0);
  if (n == 2) throw std::invalid_argument("hann_window: a 2-sample axis has no nonzero weight");
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i)
    h[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                 static_cast<double>(n - 1)));
  return h;
}

}  // namespace detail

/// Separable frequency x angle Hann window over the sample set, rescaled to
/// mean 1 so windowed backprojection keeps point amplitudes.
inline RVector hann_window(const MeasurementGeometry& geom) {
  const auto hf = detail::hann_axis(geom.n_freq());
  const auto ha = detail::hann_axis(geom.n_angle());
  RVector w(static_cast<Eigen::Index>(geom.size()));
  for (std::size_t i = 0; i < hf.size(); ++i)
    for (std::size_t j = 0; j < ha.size(); ++j)
      w[static_cast<Eigen::Index>(i * ha.size() + j)] = hf[i] * ha[j];
  return w / w.mean();
}

inline RVector window_weights(const MeasurementGeometry& geom, WindowSpec window) {
  if (window.kind == WindowKind::hann) return hann_window(geom);
  return RVector::Ones(static_cast<Eigen::Index>(geom.size()));
}

/// x_bp = (1/M) A^H (w .* y)
inline ComplexImage backproject(const RcsAmplitude& y, const MeasurementOperator& op,
                                WindowSpec window = {}) {
  if (y.size() != op.rows()) throw DimensionError("backproject: data length mismatch");
  detail::require_finite(y.values, "backproject");
  const RVector w = window_weights(op.geometry(), window);
  const CVector weighted = y.values.cwiseProduct(w.cast<cdouble>());
  ComplexImage x;
  op.apply_adjoint(weighted, x.values);
  x.values /= static_cast<double>(op.rows());
  return x;
}

inline ComplexImage backproject(const RcsAmplitude& y, const ImageGrid& grid,
                                const MeasurementGeometry& geom, WindowSpec window = {}) {
  if (y.size() != static_cast<Eigen::Index>(geom.size()))
    throw DimensionError("backproject: data length mismatch");
  return backproject(y, MeasurementOperator(grid, geom), window);
}

struct Peak {
  double x = 0.0;
  double y = 0.0;
  std::size_t index = 0;
  double magnitude = 0.0;
};

/// Strict 8-neighbourhood local maxima of |x| at or above
/// max|x| * 10^(threshold_db/20), strongest first.
inline std::vector<Peak> peak_detect(const ComplexImage& image, const ImageGrid& grid,
                                     double threshold_db = -10.0) {
  if (image.size() == 0) throw std::invalid_argument("peak_detect: empty image");
  if (image.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("peak_detect: image length does not match grid");
  if (threshold_db > 0.0) throw std::invalid_argument("peak_detect: threshold must be <= 0 dB");

  const RVector mag = image.values.cwiseAbs();
  const double peak = mag.maxCoeff();
  std::vector<Peak> peaks;
  if (!(peak > 0.0)) return peaks;
  const double floor = peak * std::pow(10.0, threshold_db / 20.0);

  const auto nx = static_cast<long>(grid.nx());
  const auto ny = static_cast<long>(grid.ny());
  for (long iy = 0; iy < ny; ++iy) {
    for (long ix = 0; ix < nx; ++ix) {
      const double v = mag[iy * nx + ix];
      if (v < floor) continue;
      bool strict_max = true;
      for (long dy = -1; dy <= 1 && strict_max; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const long jx = ix + dx;
          const long jy = iy + dy;
          if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
          if (mag[jy * nx + jx] >= v) {
            strict_max = false;
            break;
          }
        }
      }
      if (!strict_max) continue;
      const auto j = static_cast<std::size_t>(iy * nx + ix);
      peaks.push_back({grid.x_of(j), grid.y_of(j), j, v});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.magnitude > b.magnitude; });
  return peaks;
}

/// 20 log10(|x| / max|x|); zero pixels map to -infinity.
inline RVector normalized_db(const ComplexImage& image) {
  const RVector mag = image.values.cwiseAbs();
  const double peak = mag.size() > 0 ? mag.maxCoeff() : 0.0;
  RVector db(mag.size());
  for (Eigen::Index i = 0; i < mag.size(); ++i)
    db[i] = (peak > 0.0 && mag[i] > 0.0) ? 20.0 * std::log10(mag[i] / peak)
                                         : -std::numeric_limits<double>::infinity();
  return db;
}

}  // namespace isar

#endif  // ISAR_BACKPROJECTION_HPP
