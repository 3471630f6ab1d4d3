#ifndef ISAR_SIGNAL_MODEL_HPP
#define ISAR_SIGNAL_MODEL_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace isar {

using cdouble = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kSpeedOfLight = 299792458.0;

class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline double deg_to_rad(double deg) { return deg * (std::numbers::pi / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / std::numbers::pi); }

/// Two-way wavenumber 2k = 4*pi*f/c0 in rad/m.
inline double two_way_wavenumber(double freq_hz) {
  return 4.0 * std::numbers::pi * freq_hz / kSpeedOfLight;
}

namespace detail {

inline bool all_finite(const CVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) return false;
  return true;
}

inline void require_finite(const CVector& v, const char* what) {
  if (!all_finite(v)) throw NonFiniteError(std::string(what) + ": non-finite entry");
}

inline void require_increasing(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string(what) + ": empty axis");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NonFiniteError(std::string(what) + ": non-finite value");
    if (i > 0 && !(v[i] > v[i - 1]))
      throw std::invalid_argument(std::string(what) + ": values must be strictly increasing");
  }
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = hi;
  return out;
}

}  // namespace detail

/// Sample set of a turntable measurement: a frequency axis times an azimuth
/// axis. Samples are ordered frequency-major, angle-minor.
class MeasurementGeometry {
public:
  MeasurementGeometry() = default;

  static MeasurementGeometry from_degrees(std::vector<double> freqs_hz,
                                          std::vector<double> angles_deg) {
    detail::require_increasing(freqs_hz, "frequency axis");
    detail::require_increasing(angles_deg, "angle axis");
    MeasurementGeometry g;
    g.freqs_ = std::move(freqs_hz);
    g.angles_deg_ = std::move(angles_deg);
    g.angles_rad_.reserve(g.angles_deg_.size());
    for (double a : g.angles_deg_) g.angles_rad_.push_back(deg_to_rad(a));
    return g;
  }

  /// Uniform axes, endpoints inclusive.
  static MeasurementGeometry uniform(double f_min_hz, double f_max_hz, std::size_t n_freq,
                                     double az_min_deg, double az_max_deg,
                                     std::size_t n_angle) {
    if (n_freq == 0 || n_angle == 0)
      throw std::invalid_argument("geometry needs at least one frequency and one angle");
    return from_degrees(detail::linspace(f_min_hz, f_max_hz, n_freq),
                        detail::linspace(az_min_deg, az_max_deg, n_angle));
  }

  std::size_t n_freq() const { return freqs_.size(); }
  std::size_t n_angle() const { return angles_deg_.size(); }
  std::size_t size() const { return n_freq() * n_angle(); }

  std::span<const double> frequencies() const { return freqs_; }
  std::span<const double> angles_deg() const { return angles_deg_; }
  std::span<const double> angles_rad() const { return angles_rad_; }

  double frequency_of(std::size_t m) const { return freqs_[m / n_angle()]; }
  double angle_rad_of(std::size_t m) const { return angles_rad_[m % n_angle()]; }

  double bandwidth() const { return freqs_.empty() ? 0.0 : freqs_.back() - freqs_.front(); }

  /// c0 / (2B); infinite for a single-frequency geometry.
  double range_resolution() const {
    const double b = bandwidth();
    return b > 0.0 ? kSpeedOfLight / (2.0 * b) : std::numeric_limits<double>::infinity();
  }

  friend bool operator==(const MeasurementGeometry&, const MeasurementGeometry&) = default;

private:
  std::vector<double> freqs_;
  std::vector<double> angles_deg_;
  std::vector<double> angles_rad_;
};

/// Square-cell Cartesian grid centred on the origin. Points are stored
/// row-major: index = iy * nx + ix.
class ImageGrid {
public:
  ImageGrid() = default;

  /// extent_x/extent_y are full widths; the half-width is rounded down to a
  /// whole number of cells so the origin is always a grid point.
  ImageGrid(double extent_x, double extent_y, double spacing) : spacing_(spacing) {
    if (!(spacing > 0.0) || !std::isfinite(spacing))
      throw std::invalid_argument("grid spacing must be positive");
    if (!(extent_x > 0.0) || !(extent_y > 0.0) || !std::isfinite(extent_x) ||
        !std::isfinite(extent_y))
      throw std::invalid_argument("grid extents must be positive");
    nx_ = 2 * half_cells(extent_x, spacing) + 1;
    ny_ = 2 * half_cells(extent_y, spacing) + 1;
  }

  static ImageGrid square(double extent, double spacing) { return {extent, extent, spacing}; }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }
  double spacing() const { return spacing_; }

  double x_at(std::size_t ix) const {
    return (static_cast<double>(ix) - static_cast<double>(nx_ / 2)) * spacing_;
  }
  double y_at(std::size_t iy) const {
    return (static_cast<double>(iy) - static_cast<double>(ny_ / 2)) * spacing_;
  }
  double x_of(std::size_t j) const { return x_at(j % nx_); }
  double y_of(std::size_t j) const { return y_at(j / nx_); }
  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }

  double half_width_x() const { return x_at(nx_ - 1); }
  double half_width_y() const { return y_at(ny_ - 1); }

  bool contains(double x, double y) const {
    const double tol = 1e-9 * spacing_;
    return std::abs(x) <= half_width_x() + tol && std::abs(y) <= half_width_y() + tol;
  }

  /// Index of the grid point nearest to (x, y), clamped to the grid.
  std::size_t nearest(double x, double y) const {
    auto clamp_idx = [](double v, std::size_t n) {
      const double r = std::round(v);
      if (r < 0.0) return std::size_t{0};
      if (r > static_cast<double>(n - 1)) return n - 1;
      return static_cast<std::size_t>(r);
    };
    const std::size_t ix = clamp_idx(x / spacing_ + static_cast<double>(nx_ / 2), nx_);
    const std::size_t iy = clamp_idx(y / spacing_ + static_cast<double>(ny_ / 2), ny_);
    return index(ix, iy);
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

private:
  static std::size_t half_cells(double extent, double spacing) {
    return static_cast<std::size_t>(std::floor(0.5 * extent / spacing + 1e-9));
  }

  double spacing_ = 0.0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
};

/// Complex RCS amplitude per measurement sample; |y|^2 is RCS in m^2.
struct RcsAmplitude {
  CVector values;
  Eigen::Index size() const { return values.size(); }
};

/// Complex reflectivity per grid point.
struct ComplexImage {
  CVector values;
  Eigen::Index size() const { return values.size(); }
};

struct PointScatterer {
  double x = 0.0;
  double y = 0.0;
  cdouble amplitude{1.0, 0.0};

  /// Scatterer with RCS given in dBsm and scattering phase in degrees.
  static PointScatterer from_dbsm(double x, double y, double dbsm, double phase_deg = 0.0) {
    return {x, y, std::polar(std::pow(10.0, dbsm / 20.0), deg_to_rad(phase_deg))};
  }
};

/// Far-field two-way phase factor of a point at (x, y) for one sample.
inline cdouble phase_factor(double freq_hz, double angle_rad, double x, double y) {
  const double q = two_way_wavenumber(freq_hz);
  return std::polar(1.0, -q * (x * std::cos(angle_rad) + y * std::sin(angle_rad)));
}

/// Matrix-free forward operator A and its adjoint. The phase of sample m at
/// pixel (ix, iy) factors as ex(m, ix) * ey(m, iy), so both products reduce
/// to dense GEMMs against small precomputed tables.
class MeasurementOperator {
public:
  MeasurementOperator(ImageGrid grid, MeasurementGeometry geom)
      : grid_(std::move(grid)), geom_(std::move(geom)) {
    if (grid_.size() == 0 || geom_.size() == 0)
      throw std::invalid_argument("operator needs a non-empty grid and geometry");
    const auto m_count = static_cast<Eigen::Index>(geom_.size());
    ex_t_.resize(static_cast<Eigen::Index>(grid_.nx()), m_count);
    ey_t_.resize(static_cast<Eigen::Index>(grid_.ny()), m_count);
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const auto mu = static_cast<std::size_t>(m);
      const double q = two_way_wavenumber(geom_.frequency_of(mu));
      const double th = geom_.angle_rad_of(mu);
      const double qx = q * std::cos(th);
      const double qy = q * std::sin(th);
      for (std::size_t ix = 0; ix < grid_.nx(); ++ix)
        ex_t_(static_cast<Eigen::Index>(ix), m) = std::polar(1.0, -qx * grid_.x_at(ix));
      for (std::size_t iy = 0; iy < grid_.ny(); ++iy)
        ey_t_(static_cast<Eigen::Index>(iy), m) = std::polar(1.0, -qy * grid_.y_at(iy));
    }
  }

  Eigen::Index rows() const { return static_cast<Eigen::Index>(geom_.size()); }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(grid_.size()); }
  const ImageGrid& grid() const { return grid_; }
  const MeasurementGeometry& geometry() const { return geom_; }

  /// out = A x
  void apply(const CVector& x, CVector& out) const {
    if (x.size() != cols()) throw DimensionError("forward: image length does not match grid");
    Eigen::Map<const RowMat> img(x.data(), ny(), nx());
    const Eigen::MatrixXcd partial = img * ex_t_;
    out = ey_t_.cwiseProduct(partial).colwise().sum().transpose();
  }

  /// out = A^H y
  void apply_adjoint(const CVector& y, CVector& out) const {
    if (y.size() != rows()) throw DimensionError("adjoint: data length does not match geometry");
    const Eigen::MatrixXcd weighted = ey_t_.conjugate() * y.asDiagonal();
    out.resize(cols());
    Eigen::Map<RowMat> img(out.data(), ny(), nx());
    img.noalias() = weighted * ex_t_.adjoint();
  }

  /// Explicit M x N matrix; only sensible for small test instances.
  Eigen::MatrixXcd dense() const {
    Eigen::MatrixXcd a(rows(), cols());
    for (Eigen::Index m = 0; m < rows(); ++m)
      for (std::size_t j = 0; j < grid_.size(); ++j)
        a(m, static_cast<Eigen::Index>(j)) =
            ex_t_(static_cast<Eigen::Index>(j % grid_.nx()), m) *
            ey_t_(static_cast<Eigen::Index>(j / grid_.nx()), m);
    return a;
  }

private:
  using RowMat = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Index nx() const { return static_cast<Eigen::Index>(grid_.nx()); }
  Eigen::Index ny() const { return static_cast<Eigen::Index>(grid_.ny()); }

  ImageGrid grid_;
  MeasurementGeometry geom_;
  Eigen::MatrixXcd ex_t_;  // nx x M
  Eigen::MatrixXcd ey_t_;  // ny x M
};

inline RcsAmplitude forward_apply(const ComplexImage& image, const MeasurementOperator& op) {
  detail::require_finite(image.values, "forward_apply");
  RcsAmplitude y;
  op.apply(image.values, y.values);
  return y;
}

inline RcsAmplitude forward_apply(const ComplexImage& image, const ImageGrid& grid,
                                  const MeasurementGeometry& geom) {
  if (image.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("forward_apply: image length does not match grid");
  return forward_apply(image, MeasurementOperator(grid, geom));
}

inline ComplexImage adjoint_apply(const RcsAmplitude& y, const MeasurementOperator& op) {
  detail::require_finite(y.values, "adjoint_apply");
  ComplexImage x;
  op.apply_adjoint(y.values, x.values);
  return x;
}

inline ComplexImage adjoint_apply(const RcsAmplitude& y, const ImageGrid& grid,
                                  const MeasurementGeometry& geom) {
  if (y.size() != static_cast<Eigen::Index>(geom.size()))
    throw DimensionError("adjoint_apply: data length does not match geometry");
  return adjoint_apply(y, MeasurementOperator(grid, geom));
}

/// Coherent sum of the scatterers' far-field responses; positions need not
/// lie on any grid.
inline RcsAmplitude synthesize_measurement(std::span<const PointScatterer> scatterers,
                                           const MeasurementGeometry& geom) {
  for (const auto& s : scatterers)
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.amplitude.real()) ||
        !std::isfinite(s.amplitude.imag()))
      throw NonFiniteError("synthesize_measurement: non-finite scatterer");
  RcsAmplitude y;
  y.values = CVector::Zero(static_cast<Eigen::Index>(geom.size()));
  for (std::size_t m = 0; m < geom.size(); ++m) {
    const double f = geom.frequency_of(m);
    const double th = geom.angle_rad_of(m);
    cdouble acc{0.0, 0.0};
    for (const auto& s : scatterers) acc += s.amplitude * phase_factor(f, th, s.x, s.y);
    y.values[static_cast<Eigen::Index>(m)] = acc;
  }
  return y;
}

/// sigma_m = |y_m|^2 in m^2.
inline RVector rcs_from_amplitude(const RcsAmplitude& y) { return y.values.cwiseAbs2(); }

/// 10 log10(sigma); zero maps to -infinity.
inline double dbsm(double sigma_m2) {
  if (sigma_m2 == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sigma_m2);
}

inline double dbsm_to_m2(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace isar

#endif  // ISAR_SIGNAL_MODEL_HPP
