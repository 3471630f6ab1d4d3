#ifndef ISAR_IO_HPP
#define ISAR_IO_HPP

// CSV artifacts and key = value scenario files.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "backprojection.hpp"
#include "bpdn.hpp"
#include "isr.hpp"
#include "rcs_extraction.hpp"
#include "signal_model.hpp"

namespace isar::io {

/// Malformed input file; `line` is 1-based, 0 when not tied to a line.
class CsvError : public std::runtime_error {
public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return v;
}

inline double parse_field(const std::string& s, std::size_t line, std::string_view column) {
  const auto v = parse_double(s);
  if (!v) throw CsvError(line, "column '" + std::string(column) + "': not a number: '" + s + "'");
  return *v;
}

inline std::string timestamp_line() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "# generated %Y-%m-%dT%H:%M:%SZ\n", &tm);
  return buf;
}

/// Options shared by every CSV writer.
struct WriteOptions {
  bool timestamp = false;
  /// Extra "# key: value" lines written before the header.
  std::vector<std::string> notes;
};

inline void write_preamble(std::ostream& os, const WriteOptions& opt) {
  if (opt.timestamp) os << timestamp_line();
  for (const auto& n : opt.notes) os << "# " << n << '\n';
}

namespace detail {

// Reads non-comment lines, checks the header, returns (line number, fields).
class CsvReader {
public:
  CsvReader(std::istream& is, std::vector<std::string_view> header) : is_(is) {
    std::string line;
    while (next_line(line)) {
      const auto fields = split(line, ',');
      if (fields.size() != header.size() ||
          !std::equal(fields.begin(), fields.end(), header.begin()))
        throw CsvError(line_no_, "unexpected header '" + line + "'");
      width_ = header.size();
      header_ = std::move(header);
      return;
    }
    throw CsvError(0, "missing header");
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    if (!next_line(line)) return false;
    fields = split(line, ',');
    if (fields.size() != width_)
      throw CsvError(line_no_, "expected " + std::to_string(width_) + " columns, found " +
                                   std::to_string(fields.size()));
    return true;
  }

  double number(const std::vector<std::string>& fields, std::size_t col) const {
    return parse_field(fields[col], line_no_, header_[col]);
  }
  std::size_t line() const { return line_no_; }

private:
  bool next_line(std::string& out) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      const std::string t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      out = t;
      return true;
    }
    return false;
  }

  std::istream& is_;
  std::vector<std::string_view> header_;
  std::size_t width_ = 0;
  std::size_t line_no_ = 0;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return is;
}

}  // namespace detail

// ---------------------------------------------------------------- RCS data

struct RcsData {
  MeasurementGeometry geometry;
  RcsAmplitude amplitude;
};

inline void write_rcs_csv(std::ostream& os, const MeasurementGeometry& geom, const RcsAmplitude& y,
                          const WriteOptions& opt = {}) {
  if (y.size() != static_cast<Eigen::Index>(geom.size()))
    throw DimensionError("write_rcs_csv: data length does not match geometry");
  write_preamble(os, opt);
  os << "freq_hz,angle_deg,re,im\n";
  const auto freqs = geom.frequencies();
  const auto angles = geom.angles_deg();
  for (std::size_t i = 0; i < freqs.size(); ++i)
    for (std::size_t j = 0; j < angles.size(); ++j) {
      const cdouble v = y.values[static_cast<Eigen::Index>(i * angles.size() + j)];
      os << format_double(freqs[i]) << ',' << format_double(angles[j]) << ','
         << format_double(v.real()) << ',' << format_double(v.imag()) << '\n';
    }
}

inline void write_rcs_csv(const std::string& path, const MeasurementGeometry& geom,
                          const RcsAmplitude& y, const WriteOptions& opt = {}) {
  auto os = detail::open_out(path);
  write_rcs_csv(os, geom, y, opt);
}

/// Parses frequency-major rows. The angle axis is read from the first
/// frequency block and every later block must repeat it exactly.
inline RcsData load_rcs_csv(std::istream& is) {
  detail::CsvReader reader(is, {"freq_hz", "angle_deg", "re", "im"});
  std::vector<double> freqs, angles;
  std::vector<cdouble> values;
  std::vector<std::string> f;
  std::size_t angle_pos = 0;
  bool first_block = true;
  while (reader.next(f)) {
    const double fr = reader.number(f, 0);
    const double an = reader.number(f, 1);
    const cdouble v{reader.number(f, 2), reader.number(f, 3)};
    if (!std::isfinite(fr) || !std::isfinite(an) || !std::isfinite(v.real()) ||
        !std::isfinite(v.imag()))
      throw CsvError(reader.line(), "non-finite value");

    if (freqs.empty()) {
      freqs.push_back(fr);
    } else if (fr != freqs.back()) {
      if (!(fr > freqs.back())) throw CsvError(reader.line(), "frequency axis not increasing");
      if (first_block) first_block = false;
      if (angle_pos != angles.size())
        throw CsvError(reader.line(), "frequency block has " + std::to_string(angle_pos) +
                                          " rows, expected " + std::to_string(angles.size()));
      freqs.push_back(fr);
      angle_pos = 0;
    }
    if (first_block) {
      if (!angles.empty() && !(an > angles.back()))
        throw CsvError(reader.line(), "angle axis not increasing");
      angles.push_back(an);
    } else {
      if (angle_pos >= angles.size() || angles[angle_pos] != an)
        throw CsvError(reader.line(), "angle does not match the axis of the first block");
    }
    ++angle_pos;
    values.push_back(v);
  }
  if (values.empty()) throw CsvError(reader.line(), "no data rows");
  if (angle_pos != angles.size())
    throw CsvError(reader.line(), "last frequency block has " + std::to_string(angle_pos) +
                                      " rows, expected " + std::to_string(angles.size()));

  RcsData out;
  out.geometry = MeasurementGeometry::from_degrees(std::move(freqs), std::move(angles));
  out.amplitude.values = Eigen::Map<const CVector>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

inline RcsData load_rcs_csv(const std::string& path) {
  auto is = detail::open_in(path);
  return load_rcs_csv(is);
}

// ------------------------------------------------------------ image raster

inline void write_raster_csv(std::ostream& os, const ComplexImage& x, const ImageGrid& grid,
                             const WriteOptions& opt = {}) {
  if (x.size() != static_cast<Eigen::Index>(grid.size()))
    throw DimensionError("write_raster_csv: image length does not match grid");
  write_preamble(os, opt);
  os << "x_m,y_m,re,im,mag_db\n";
  const RVector db = normalized_db(x);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    os << format_double(grid.x_of(j)) << ',' << format_double(grid.y_of(j)) << ','
       << format_double(x.values[i].real()) << ',' << format_double(x.values[i].imag()) << ','
       << format_double(db[i]) << '\n';
  }
}

inline void write_raster_csv(const std::string& path, const ComplexImage& x,
                             const ImageGrid& grid, const WriteOptions& opt = {}) {
  auto os = detail::open_out(path);
  write_raster_csv(os, x, grid, opt);
}

struct Raster {
  ImageGrid grid;
  ComplexImage image;
};

/// Reads a raster written by write_raster_csv; the rows must cover a full
/// origin-centred grid in row-major order.
inline Raster load_raster_csv(std::istream& is) {
  detail::CsvReader reader(is, {"x_m", "y_m", "re", "im", "mag_db"});
  std::vector<double> xs, ys;
  std::vector<cdouble> values;
  std::vector<std::string> f;
  while (reader.next(f)) {
    xs.push_back(reader.number(f, 0));
    ys.push_back(reader.number(f, 1));
    values.emplace_back(reader.number(f, 2), reader.number(f, 3));
  }
  if (values.empty()) throw CsvError(reader.line(), "no data rows");

  std::size_t nx = 1;
  while (nx < ys.size() && ys[nx] == ys[0]) ++nx;
  if (values.size() % nx != 0) throw CsvError(0, "raster is not a complete grid");
  const std::size_t ny = values.size() / nx;
  const double spacing = nx > 1 ? xs[1] - xs[0] : (ny > 1 ? ys[nx] - ys[0] : 1.0);
  if (!(spacing > 0.0)) throw CsvError(0, "raster x coordinates not increasing");
  const ImageGrid grid(static_cast<double>(nx - 1) * spacing + 0.5 * spacing,
                       static_cast<double>(ny - 1) * spacing + 0.5 * spacing, spacing);
  if (grid.nx() != nx || grid.ny() != ny)
    throw CsvError(0, "raster is not an origin-centred odd-sized grid");
  const double tol = 1e-6 * spacing;
  for (std::size_t j = 0; j < values.size(); ++j)
    if (std::abs(xs[j] - grid.x_of(j)) > tol || std::abs(ys[j] - grid.y_of(j)) > tol)
      throw CsvError(0, "raster row " + std::to_string(j + 1) + " is off the expected grid");

  Raster out{grid, {}};
  out.image.values = Eigen::Map<const CVector>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

inline Raster load_raster_csv(const std::string& path) {
  auto is = detail::open_in(path);
  return load_raster_csv(is);
}

// ------------------------------------------------------------ small tables

inline void write_peaks_csv(std::ostream& os, const std::vector<Peak>& peaks,
                            const WriteOptions& opt = {}) {
  write_preamble(os, opt);
  os << "x_m,y_m,mag_db\n";
  const double top = peaks.empty() ? 1.0 : peaks.front().magnitude;
  for (const auto& p : peaks)
    os << format_double(p.x) << ',' << format_double(p.y) << ','
       << format_double(20.0 * std::log10(p.magnitude / top)) << '\n';
}

inline void write_solver_log_csv(std::ostream& os, const std::vector<ParetoPoint>& trajectory,
                                 const WriteOptions& opt = {}) {
  write_preamble(os, opt);
  os << "outer_iter,tau,residual,weighted_l1,matvecs\n";
  for (const auto& p : trajectory)
    os << p.outer_iter << ',' << format_double(p.tau) << ',' << format_double(p.residual) << ','
       << format_double(p.weighted_l1) << ',' << p.matvecs << '\n';
}

inline void write_sweep_csv(std::ostream& os, const SweepStatistics& st,
                            const WriteOptions& opt = {}) {
  write_preamble(os, opt);
  os << "position_deg,extracted_dbsm\n";
  for (std::size_t k = 0; k < st.position_deg.size(); ++k)
    os << format_double(st.position_deg[k]) << ',' << format_double(st.extracted_dbsm[k]) << '\n';
}

inline void write_sweep_summary_csv(std::ostream& os, const SweepStatistics& st,
                                    const WriteOptions& opt = {}) {
  write_preamble(os, opt);
  os << "mean_dbsm,p10_dbsm,p90_dbsm\n"
     << format_double(st.mean_dbsm) << ',' << format_double(st.p10_dbsm) << ','
     << format_double(st.p90_dbsm) << '\n';
}

// ---------------------------------------------------------------- scenario

/// Everything a CLI run needs, validated as a whole before any compute.
struct Scenario {
  double f_min_hz = 13.5e9;
  double f_max_hz = 16.5e9;
  std::size_t n_freq = 41;
  double az_min_deg = -5.7;
  double az_max_deg = 5.7;
  std::size_t n_angle = 41;
  double grid_extent_m = 1.0;
  double grid_spacing_m = 0.01;

  std::vector<PointScatterer> scatterers;
  Method method = Method::bp;
  ImagingConfig imaging;

  double gate_radius_m = 0.10;
  double eval_freq_hz = 15e9;
  double eval_angle_deg = 0.0;
  double peak_threshold_db = -10.0;
  double cluster_threshold_db = -40.0;
  std::size_t sweep_positions = 360;
  double target_dbsm = -30.0;
  double reference_dbsm = 0.0;
  std::string output_dir = ".";

  MeasurementGeometry geometry() const {
    return MeasurementGeometry::uniform(f_min_hz, f_max_hz, n_freq, az_min_deg, az_max_deg, n_angle);
  }
  ImageGrid grid() const { return ImageGrid::square(grid_extent_m, grid_spacing_m); }

  ExperimentSetup experiment() const { return {geometry(), grid(), imaging}; }

  SweepSetup sweep(unsigned jobs) const {
    SweepSetup s;
    s.experiment = experiment();
    s.target_dbsm = target_dbsm;
    s.reference_amplitude = std::isinf(reference_dbsm) && reference_dbsm < 0
                                ? cdouble{0.0, 0.0}
                                : cdouble{std::pow(10.0, reference_dbsm / 20.0), 0.0};
    s.positions = sweep_positions;
    s.gate_radius = gate_radius_m;
    s.eval_freq_hz = eval_freq_hz;
    s.eval_angle_rad = deg_to_rad(eval_angle_deg);
    s.jobs = jobs;
    return s;
  }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const {
    try {
      if (!(f_max_hz >= f_min_hz)) throw std::invalid_argument("f_max_hz must be >= f_min_hz");
      if (n_freq > 1 && !(f_max_hz > f_min_hz))
        throw std::invalid_argument("n_freq > 1 needs f_max_hz > f_min_hz");
      if (n_angle > 1 && !(az_max_deg > az_min_deg))
        throw std::invalid_argument("n_angle > 1 needs az_max_deg > az_min_deg");
      const auto geom = geometry();
      (void)grid();
      imaging.validate();
      for (const auto& s : scatterers)
        if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.amplitude.real()) ||
            !std::isfinite(s.amplitude.imag()))
          throw std::invalid_argument("scatterer values must be finite");
      if (!(gate_radius_m > 0.0)) throw std::invalid_argument("gate_radius_m must be positive");
      if (eval_freq_hz < geom.frequencies().front() || eval_freq_hz > geom.frequencies().back())
        throw std::invalid_argument("eval_freq_hz outside the frequency band");
      if (peak_threshold_db > 0.0 || cluster_threshold_db > 0.0)
        throw std::invalid_argument("thresholds must be <= 0 dB");
      if (sweep_positions == 0) throw std::invalid_argument("sweep_positions must be >= 1");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
  }
};

namespace detail {

inline double config_number(const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v) throw ConfigError("key '" + key + "': not a number: '" + value + "'");
  return *v;
}

inline std::size_t config_count(const std::string& key, const std::string& value) {
  const double v = config_number(key, value);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e9)
    throw ConfigError("key '" + key + "': expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

inline std::vector<double> config_tuple(const std::string& key, const std::string& value,
                                        std::size_t n) {
  const auto parts = split(value, ',');
  if (parts.size() != n)
    throw ConfigError("key '" + key + "': expected " + std::to_string(n) + " comma-separated values");
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(config_number(key, p));
  return out;
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. `scatterer` and
/// `scatterer_dbsm` may repeat; any other repeated or unknown key is an error.
inline Scenario parse_scenario(std::istream& is) {
  Scenario sc;
  std::map<std::string, std::size_t> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key != "scatterer" && key != "scatterer_dbsm" && seen.count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    seen[key] = line_no;

    auto num = [&] { return detail::config_number(key, value); };
    auto count = [&] { return detail::config_count(key, value); };
    auto& solver = sc.imaging.isr.solver;
    try {
      if (key == "f_min_hz") sc.f_min_hz = num();
      else if (key == "f_max_hz") sc.f_max_hz = num();
      else if (key == "n_freq") sc.n_freq = count();
      else if (key == "az_min_deg") sc.az_min_deg = num();
      else if (key == "az_max_deg") sc.az_max_deg = num();
      else if (key == "n_angle") sc.n_angle = count();
      else if (key == "grid_extent_m") sc.grid_extent_m = num();
      else if (key == "grid_spacing_m") sc.grid_spacing_m = num();
      else if (key == "scatterer") {
        const auto t = detail::config_tuple(key, value, 4);
        sc.scatterers.push_back({t[0], t[1], {t[2], t[3]}});
      } else if (key == "scatterer_dbsm") {
        const auto t = detail::config_tuple(key, value, 4);
        sc.scatterers.push_back(PointScatterer::from_dbsm(t[0], t[1], t[2], t[3]));
      } else if (key == "method") sc.method = parse_method(value);
      else if (key == "window") {
        if (value == "hann") sc.imaging.window.kind = WindowKind::hann;
        else if (value == "none") sc.imaging.window.kind = WindowKind::none;
        else throw ConfigError("key 'window': expected hann or none");
      } else if (key == "kappa_ratio") sc.imaging.kappa_ratio = num();
      else if (key == "isr_iterations") sc.imaging.isr.iterations = static_cast<int>(count());
      else if (key == "isr_radius_m") sc.imaging.isr.radius = num();
      else if (key == "eta") {
        sc.imaging.isr.eta = value == "smallest_nonzero" ? EtaRule::smallest_nonzero()
                                                         : EtaRule::fixed(num());
      } else if (key == "max_outer_iterations") solver.max_outer_iterations = static_cast<int>(count());
      else if (key == "max_matvecs") solver.max_matvecs = static_cast<long>(count());
      else if (key == "optimality_tol") solver.optimality_tol = num();
      else if (key == "gate_radius_m") sc.gate_radius_m = num();
      else if (key == "eval_freq_hz") sc.eval_freq_hz = num();
      else if (key == "eval_angle_deg") sc.eval_angle_deg = num();
      else if (key == "peak_threshold_db") sc.peak_threshold_db = num();
      else if (key == "cluster_threshold_db") sc.cluster_threshold_db = num();
      else if (key == "sweep_positions") sc.sweep_positions = count();
      else if (key == "target_dbsm") sc.target_dbsm = num();
      else if (key == "reference_dbsm") sc.reference_dbsm = num();
      else if (key == "output_dir") sc.output_dir = value;
      else throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  auto is = detail::open_in(path);
  return parse_scenario(is);
}

}  // namespace isar::io

#endif  // ISAR_IO_HPP
