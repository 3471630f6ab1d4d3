#ifndef ISAR_RCS_EXTRACTION_HPP
#define ISAR_RCS_EXTRACTION_HPP

// RCS extraction by image gating, and the two simulation experiments built
// on it: two-point resolution and the rotational extraction sweep.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <thread>
#include <vector>

#include "backprojection.hpp"
#include "bpdn.hpp"
#include "isr.hpp"
#include "signal_model.hpp"

namespace isar {

struct GateSpec {
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.10;
  double eval_freq_hz = 15e9;
  double eval_angle_rad = 0.0;

  void validate(const ImageGrid& grid, const MeasurementGeometry& geom) const {
    if (!(radius > 0.0)) throw std::invalid_argument("gate radius must be positive");
    if (!grid.contains(center_x, center_y))
      throw std::invalid_argument("gate centre lies outside the image grid");
    const auto f = geom.frequencies();
    if (eval_freq_hz < f.front() || eval_freq_hz > f.back())
      throw std::invalid_argument("evaluation frequency outside the measured band");
  }
};

class EmptyGateError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Zeroes every pixel farther than the gate radius from the gate centre.
inline ComplexImage gate_image(const ComplexImage& x, const ImageGrid& grid, const GateSpec& gate) {
  if (x.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("gate_image: image length does not match grid");
  if (!(gate.radius > 0.0)) throw std::invalid_argument("gate radius must be positive");
  ComplexImage out = x;
  std::size_t inside = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double r = std::hypot(grid.x_of(j) - gate.center_x, grid.y_of(j) - gate.center_y);
    if (r > gate.radius)
      out.values[static_cast<Eigen::Index>(j)] = 0.0;
    else
      ++inside;
  }
  if (inside == 0) throw EmptyGateError("gate contains no grid point");
  return out;
}

/// Coherent single-sample re-propagation of a gated image at the gate's
/// evaluation frequency and angle, divided by the imaging chain's gain.
inline cdouble repropagate(const ComplexImage& x_gated, const ImageGrid& grid, const GateSpec& gate) {
  if (x_gated.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("repropagate: image length does not match grid");
  cdouble acc{0.0, 0.0};
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const cdouble v = x_gated.values[static_cast<Eigen::Index>(j)];
    if (v == cdouble{0.0, 0.0}) continue;
    acc += v * phase_factor(gate.eval_freq_hz, gate.eval_angle_rad, grid.x_of(j), grid.y_of(j));
  }
  return acc;
}

/// RCS in dBsm of a gated image. `gain` is the magnitude a unit point
/// scatterer at the gate centre produces through the same imaging chain; it is
/// 1 for sparse images, whose pixels already carry scatterer amplitudes.
/// An all-zero gate gives -infinity.
inline double extract_rcs(const ComplexImage& x_gated, const ImageGrid& grid, const GateSpec& gate,
                          double gain = 1.0) {
  if (!(gain > 0.0)) throw std::invalid_argument("extract_rcs: gain must be positive");
  return dbsm(std::norm(repropagate(x_gated, grid, gate) / gain));
}

/// Gated re-propagation gain of windowed backprojection for a unit scatterer
/// at the gate centre. A backprojected point spreads over roughly one
/// resolution cell of pixels, so the coherent gate sum exceeds the point
/// amplitude by about the number of pixels per cell.
inline double backprojection_gain(const MeasurementOperator& op, WindowSpec window,
                                  const GateSpec& gate) {
  const PointScatterer unit{gate.center_x, gate.center_y, {1.0, 0.0}};
  const RcsAmplitude y = synthesize_measurement(std::span(&unit, 1), op.geometry());
  const ComplexImage img = gate_image(backproject(y, op, window), op.grid(), gate);
  return std::abs(repropagate(img, op.grid(), gate));
}

enum class Method { bp, l1, isr };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::bp: return "bp";
    case Method::l1: return "l1";
    case Method::isr: return "isr";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "bp") return Method::bp;
  if (s == "l1") return Method::l1;
  if (s == "isr") return Method::isr;
  throw std::invalid_argument("unknown imaging method: " + std::string(s));
}

struct ImagingConfig {
  WindowSpec window;
  /// kappa = kappa_ratio * ||y||_2 for every sparse solve.
  double kappa_ratio = 0.01;
  /// Smoothing, iteration count and solver budgets; solver.kappa is derived.
  IsrConfig isr;

  void validate() const {
    if (!(kappa_ratio >= 0.0) || !std::isfinite(kappa_ratio))
      throw std::invalid_argument("kappa ratio must be finite and >= 0");
    isr.validate();
  }
};

struct ImagingResult {
  ComplexImage image;
  std::vector<SolverReport> reports;
  std::vector<ComplexImage> iterates;
  std::vector<std::vector<ParetoPoint>> trajectories;

  bool budget_exhausted() const {
    return std::any_of(reports.begin(), reports.end(), [](const SolverReport& r) {
      return r.termination == Termination::budget_exhausted;
    });
  }
};

inline ImagingResult form_image(Method method, const RcsAmplitude& y, const MeasurementOperator& op,
                                const ImagingConfig& cfg) {
  ImagingResult out;
  if (method == Method::bp) {
    out.image = backproject(y, op, cfg.window);
    return out;
  }
  IsrConfig isr = cfg.isr;
  isr.solver.kappa = kappa_from_ratio(y, cfg.kappa_ratio);
  if (method == Method::l1) isr.iterations = 1;
  IsrResult r = isr_solve(op, op.grid(), y, isr);
  out.image = std::move(r.image);
  out.reports = std::move(r.reports);
  out.iterates = std::move(r.iterates);
  out.trajectories = std::move(r.trajectories);
  return out;
}

/// Gain to pass to extract_rcs for an image formed by `method`.
inline double extraction_gain(Method method, const MeasurementOperator& op, const ImagingConfig& cfg,
                              const GateSpec& gate) {
  return method == Method::bp ? backprojection_gain(op, cfg.window, gate) : 1.0;
}

struct Cluster {
  std::vector<std::size_t> pixels;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  double total_magnitude = 0.0;
};

/// 8-connected components of pixels with |x| >= max|x| * 10^(threshold_db/20).
/// Centroids are |x|-weighted. Largest total magnitude first.
inline std::vector<Cluster> find_clusters(const ComplexImage& image, const ImageGrid& grid,
                                          double threshold_db = -40.0) {
  if (image.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("find_clusters: image length does not match grid");
  std::vector<Cluster> clusters;
  if (image.size() == 0) return clusters;
  const RVector mag = image.values.cwiseAbs();
  const double peak = mag.maxCoeff();
  if (!(peak > 0.0)) return clusters;
  const double floor = peak * std::pow(10.0, threshold_db / 20.0);

  const auto nx = static_cast<long>(grid.nx());
  const auto ny = static_cast<long>(grid.ny());
  std::vector<char> seen(grid.size(), 0);
  std::vector<long> stack;
  for (long start = 0; start < nx * ny; ++start) {
    if (seen[static_cast<std::size_t>(start)] || mag[start] < floor) continue;
    Cluster c;
    double wx = 0.0, wy = 0.0;
    stack.push_back(start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const long j = stack.back();
      stack.pop_back();
      const auto ju = static_cast<std::size_t>(j);
      c.pixels.push_back(ju);
      c.total_magnitude += mag[j];
      wx += mag[j] * grid.x_of(ju);
      wy += mag[j] * grid.y_of(ju);
      const long ix = j % nx, iy = j / nx;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long kx = ix + dx, ky = iy + dy;
          if (kx < 0 || ky < 0 || kx >= nx || ky >= ny) continue;
          const long k = ky * nx + kx;
          if (seen[static_cast<std::size_t>(k)] || mag[k] < floor) continue;
          seen[static_cast<std::size_t>(k)] = 1;
          stack.push_back(k);
        }
    }
    c.centroid_x = wx / c.total_magnitude;
    c.centroid_y = wy / c.total_magnitude;
    clusters.push_back(std::move(c));
  }
  std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return a.total_magnitude > b.total_magnitude;
  });
  return clusters;
}

/// Geometry, grid and imaging parameters shared by the experiments.
struct ExperimentSetup {
  MeasurementGeometry geometry = MeasurementGeometry::uniform(13.5e9, 16.5e9, 41, -5.7, 5.7, 41);
  ImageGrid grid = ImageGrid::square(1.0, 0.01);
  ImagingConfig imaging;
};

struct TwoPointResult {
  std::vector<PointScatterer> scatterers;
  RcsAmplitude data;
  ImagingResult imaging;
  std::vector<Peak> peaks;
  std::vector<Cluster> clusters;
};

/// Two equal unit scatterers at (+-separation/2, 0), imaged with `method`.
inline TwoPointResult two_point_experiment(double separation, Method method,
                                           const ExperimentSetup& setup,
                                           double peak_threshold_db = -10.0,
                                           double cluster_threshold_db = -40.0) {
  if (!(separation >= 0.0) || !std::isfinite(separation))
    throw std::invalid_argument("separation must be finite and >= 0");
  setup.imaging.validate();
  TwoPointResult out;
  out.scatterers = {{-0.5 * separation, 0.0, {1.0, 0.0}}, {0.5 * separation, 0.0, {1.0, 0.0}}};
  out.data = synthesize_measurement(out.scatterers, setup.geometry);
  const MeasurementOperator op(setup.grid, setup.geometry);
  out.imaging = form_image(method, out.data, op, setup.imaging);
  out.peaks = peak_detect(out.imaging.image, setup.grid, peak_threshold_db);
  out.clusters = find_clusters(out.imaging.image, setup.grid, cluster_threshold_db);
  return out;
}

struct SweepSetup {
  ExperimentSetup experiment;
  double target_dbsm = -30.0;
  cdouble reference_amplitude{1.0, 0.0};
  std::size_t positions = 360;
  double gate_radius = 0.10;
  double eval_freq_hz = 15e9;
  double eval_angle_rad = 0.0;
  /// Worker threads; 0 means hardware concurrency.
  unsigned jobs = 0;
};

struct SweepStatistics {
  std::vector<double> position_deg;
  std::vector<double> extracted_dbsm;
  double mean_dbsm = 0.0;
  double p10_dbsm = 0.0;
  double p90_dbsm = 0.0;
  /// Placements whose sparse solve ran out of budget.
  std::size_t budget_exhausted = 0;
};

/// Nearest-rank percentile (rank ceil(p n), 1-based) of unsorted values.
inline double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

/// Mean of linear power, reported in dB. -infinity entries add zero power.
inline double mean_power_db(const std::vector<double>& db_values) {
  if (db_values.empty()) throw std::invalid_argument("mean of an empty set");
  double acc = 0.0;
  for (double v : db_values) acc += std::isinf(v) && v < 0 ? 0.0 : dbsm_to_m2(v);
  return dbsm(acc / static_cast<double>(db_values.size()));
}

/// One placement of the sweep: reference at the origin, target at
/// `distance` along `angle_deg`, target RCS extracted through a gate at its
/// known position.
inline double sweep_placement(double distance, double angle_deg, Method method,
                              const SweepSetup& setup, const MeasurementOperator& op,
                              bool* budget_exhausted = nullptr) {
  const double a = deg_to_rad(angle_deg);
  const double tx = distance * std::cos(a);
  const double ty = distance * std::sin(a);
  const std::vector<PointScatterer> scene{
      {0.0, 0.0, setup.reference_amplitude},
      PointScatterer::from_dbsm(tx, ty, setup.target_dbsm, 0.0)};
  const RcsAmplitude y = synthesize_measurement(scene, op.geometry());
  const ImagingResult img = form_image(method, y, op, setup.experiment.imaging);
  if (budget_exhausted) *budget_exhausted = img.budget_exhausted();
  const GateSpec gate{tx, ty, setup.gate_radius, setup.eval_freq_hz, setup.eval_angle_rad};
  ComplexImage gated;
  try {
    gated = gate_image(img.image, op.grid(), gate);
  } catch (const EmptyGateError&) {
    return -std::numeric_limits<double>::infinity();
  }
  return extract_rcs(gated, op.grid(), gate,
                     extraction_gain(method, op, setup.experiment.imaging, gate));
}

inline SweepStatistics sweep_statistics(double distance, Method method, const SweepSetup& setup) {
  if (!(distance > 0.0) || !std::isfinite(distance))
    throw std::invalid_argument("sweep distance must be positive");
  if (setup.positions == 0) throw std::invalid_argument("sweep needs at least one position");
  setup.experiment.imaging.validate();
  const GateSpec probe{distance, 0.0, setup.gate_radius, setup.eval_freq_hz, setup.eval_angle_rad};
  probe.validate(setup.experiment.grid, setup.experiment.geometry);
  if (!setup.experiment.grid.contains(0.0, distance) || !setup.experiment.grid.contains(-distance, 0.0))
    throw std::invalid_argument("sweep circle leaves the image grid");

  const MeasurementOperator op(setup.experiment.grid, setup.experiment.geometry);
  const std::size_t n = setup.positions;
  SweepStatistics st;
  st.position_deg.resize(n);
  st.extracted_dbsm.resize(n);
  std::vector<char> exhausted(n, 0);
  for (std::size_t k = 0; k < n; ++k)
    st.position_deg[k] = 360.0 * static_cast<double>(k) / static_cast<double>(n);

  unsigned jobs = setup.jobs ? setup.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        bool ex = false;
        st.extracted_dbsm[k] = sweep_placement(distance, st.position_deg[k], method, setup, op, &ex);
        exhausted[k] = ex;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  st.mean_dbsm = mean_power_db(st.extracted_dbsm);
  st.p10_dbsm = nearest_rank_percentile(st.extracted_dbsm, 0.10);
  st.p90_dbsm = nearest_rank_percentile(st.extracted_dbsm, 0.90);
  st.budget_exhausted = static_cast<std::size_t>(std::count(exhausted.begin(), exhausted.end(), 1));
  return st;
}

}  // namespace isar

#endif  // ISAR_RCS_EXTRACTION_HPP
