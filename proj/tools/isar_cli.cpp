// isar: simulate turntable RCS data, form ISAR images (backprojection, l1,
// smooth-reweighted l1) and extract per-scatterer RCS by image gating.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include <isar/isar.hpp>

namespace fs = std::filesystem;
using namespace isar;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kBadCsv = 3, kBudget = 4 };

struct Common {
  std::string scenario_path;
  std::string out_dir;
  std::string method;
  bool no_timestamp = false;
  unsigned jobs = 0;
  std::optional<double> gate_radius;
};

io::Scenario load(const Common& c) {
  io::Scenario sc = c.scenario_path.empty() ? io::Scenario{} : io::load_scenario(c.scenario_path);
  if (!c.method.empty()) sc.method = parse_method(c.method);
  if (c.gate_radius) sc.gate_radius_m = *c.gate_radius;
  if (!c.out_dir.empty()) sc.output_dir = c.out_dir;
  sc.validate();
  return sc;
}

io::WriteOptions write_options(const Common& c, bool exhausted = false) {
  io::WriteOptions opt;
  opt.timestamp = !c.no_timestamp;
  if (exhausted) opt.notes.push_back("status: budget_exhausted");
  return opt;
}

std::string out_path(const io::Scenario& sc, const std::string& name) {
  fs::create_directories(sc.output_dir);
  return (fs::path(sc.output_dir) / name).string();
}

template <typename Writer>
void write_file(const std::string& path, Writer&& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  w(os);
}

void write_solver_logs(const io::Scenario& sc, const Common& c, const ImagingResult& img,
                       const std::string& stem) {
  for (std::size_t t = 0; t < img.trajectories.size(); ++t)
    write_file(out_path(sc, stem + "_solver_log_iter" + std::to_string(t + 1) + ".csv"),
               [&](std::ostream& os) { io::write_solver_log_csv(os, img.trajectories[t], write_options(c)); });
}

void report_solves(const ImagingResult& img) {
  for (std::size_t t = 0; t < img.reports.size(); ++t) {
    const auto& r = img.reports[t];
    std::fprintf(stderr, "solve %zu: residual %.6g, weighted l1 %.6g, %ld matvecs, %s\n", t + 1,
                 r.residual, r.weighted_l1, r.matvecs, std::string(to_string(r.termination)).c_str());
  }
}

int run_simulate(const Common& c, const std::string& output) {
  const io::Scenario sc = load(c);
  if (sc.scatterers.empty()) throw io::ConfigError("simulate needs at least one scatterer");
  const auto geom = sc.geometry();
  const auto y = synthesize_measurement(sc.scatterers, geom);
  const std::string path = output.empty() ? out_path(sc, "rcs.csv") : output;
  io::write_rcs_csv(path, geom, y, write_options(c));
  std::printf("wrote %zu samples to %s\n", geom.size(), path.c_str());
  return kOk;
}

int run_image(const Common& c, const std::string& input, const std::string& output, bool snapshots) {
  const io::Scenario sc = load(c);
  const io::RcsData data = io::load_rcs_csv(input);
  const auto grid = sc.grid();
  const MeasurementOperator op(grid, data.geometry);
  const ImagingResult img = form_image(sc.method, data.amplitude, op, sc.imaging);
  const bool exhausted = img.budget_exhausted();
  const std::string path = output.empty() ? out_path(sc, "image.csv") : output;
  io::write_raster_csv(path, img.image, grid, write_options(c, exhausted));
  if (snapshots) {
    const fs::path p(path);
    for (std::size_t t = 0; t < img.iterates.size(); ++t) {
      const auto snap = p.parent_path() / (p.stem().string() + "_iter" + std::to_string(t + 1) +
                                           p.extension().string());
      io::write_raster_csv(snap.string(), img.iterates[t], grid, write_options(c, exhausted));
    }
  }
  if (!img.trajectories.empty()) write_solver_logs(sc, c, img, fs::path(path).stem().string());
  report_solves(img);
  std::printf("wrote %s image (%zu x %zu) to %s\n", std::string(to_string(sc.method)).c_str(),
              grid.nx(), grid.ny(), path.c_str());
  if (exhausted) {
    std::fprintf(stderr, "error: solver budget exhausted; output flagged as partial\n");
    return kBudget;
  }
  return kOk;
}

int run_extract(const Common& c, const std::string& raster_path, const std::string& input,
                double gate_x, double gate_y, std::optional<double> eval_freq,
                std::optional<double> eval_angle_deg) {
  io::Scenario sc = load(c);
  if (eval_freq) sc.eval_freq_hz = *eval_freq;
  if (eval_angle_deg) sc.eval_angle_deg = *eval_angle_deg;
  sc.validate();
  if (raster_path.empty() == input.empty())
    throw io::ConfigError("extract needs exactly one of --raster or --input");

  ImageGrid grid;
  ComplexImage image;
  MeasurementGeometry geom = sc.geometry();
  bool exhausted = false;
  if (!raster_path.empty()) {
    io::Raster r = io::load_raster_csv(raster_path);
    grid = r.grid;
    image = std::move(r.image);
  } else {
    io::RcsData data = io::load_rcs_csv(input);
    geom = data.geometry;
    grid = sc.grid();
    const MeasurementOperator op(grid, geom);
    const ImagingResult img = form_image(sc.method, data.amplitude, op, sc.imaging);
    report_solves(img);
    exhausted = img.budget_exhausted();
    image = img.image;
  }
  const GateSpec gate{gate_x, gate_y, sc.gate_radius_m, sc.eval_freq_hz, deg_to_rad(sc.eval_angle_deg)};
  gate.validate(grid, geom);
  const ComplexImage gated = gate_image(image, grid, gate);
  double gain = 1.0;
  if (sc.method == Method::bp) gain = backprojection_gain(MeasurementOperator(grid, geom), sc.imaging.window, gate);
  const double value = extract_rcs(gated, grid, gate, gain);
  std::printf("extracted_dbsm\n%s\n", io::format_double(value).c_str());
  if (exhausted) {
    std::fprintf(stderr, "error: solver budget exhausted; value is from a partial solve\n");
    return kBudget;
  }
  return kOk;
}

int run_two_point(const Common& c, double separation) {
  const io::Scenario sc = load(c);
  const TwoPointResult res = two_point_experiment(separation, sc.method, sc.experiment(),
                                                  sc.peak_threshold_db, sc.cluster_threshold_db);
  const bool exhausted = res.imaging.budget_exhausted();
  const auto grid = sc.grid();
  io::write_raster_csv(out_path(sc, "two_point_raster.csv"), res.imaging.image, grid,
                       write_options(c, exhausted));
  write_file(out_path(sc, "peaks.csv"),
             [&](std::ostream& os) { io::write_peaks_csv(os, res.peaks, write_options(c, exhausted)); });
  if (!res.imaging.trajectories.empty()) write_solver_logs(sc, c, res.imaging, "two_point");
  report_solves(res.imaging);
  std::printf("method %s, separation %g m: %zu peaks, %zu clusters\n",
              std::string(to_string(sc.method)).c_str(), separation, res.peaks.size(),
              res.clusters.size());
  for (const auto& cl : res.clusters)
    std::printf("  cluster of %zu pixels at (%.4f, %.4f) m\n", cl.pixels.size(), cl.centroid_x,
                cl.centroid_y);
  if (exhausted) {
    std::fprintf(stderr, "error: solver budget exhausted; outputs flagged as partial\n");
    return kBudget;
  }
  return kOk;
}

int run_sweep(const Common& c, double distance) {
  const io::Scenario sc = load(c);
  const SweepStatistics st = sweep_statistics(distance, sc.method, sc.sweep(c.jobs));
  const bool exhausted = st.budget_exhausted > 0;
  write_file(out_path(sc, "sweep.csv"),
             [&](std::ostream& os) { io::write_sweep_csv(os, st, write_options(c, exhausted)); });
  write_file(out_path(sc, "sweep_summary.csv"),
             [&](std::ostream& os) { io::write_sweep_summary_csv(os, st, write_options(c, exhausted)); });
  std::printf("mean_dbsm,p10_dbsm,p90_dbsm\n%s,%s,%s\n", io::format_double(st.mean_dbsm).c_str(),
              io::format_double(st.p10_dbsm).c_str(), io::format_double(st.p90_dbsm).c_str());
  if (exhausted) {
    std::fprintf(stderr, "error: solver budget exhausted at %zu placements\n", st.budget_exhausted);
    return kBudget;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISAR imaging and RCS extraction"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", common.scenario_path, "Scenario file (key = value)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out-dir", common.out_dir, "Output directory (overrides output_dir)");
    sub->add_flag("--no-timestamp", common.no_timestamp, "Omit the timestamp comment line");
  };
  auto add_method = [&](CLI::App* sub) {
    sub->add_option("--method", common.method, "Imaging method")
        ->check(CLI::IsMember({"bp", "l1", "isr"}));
  };

  std::string output, input, raster;
  bool snapshots = false;
  double separation = 0.15, distance = 0.30, gate_x = 0.0, gate_y = 0.0;
  std::optional<double> eval_freq, eval_angle;

  auto* simulate = app.add_subcommand("simulate", "Write synthetic RCS data for the scenario's scatterers");
  add_common(simulate);
  simulate->add_option("--output,-o", output, "RCS CSV path (default <out-dir>/rcs.csv)");

  auto* image = app.add_subcommand("image", "Form an image from an RCS CSV");
  add_common(image);
  add_method(image);
  image->add_option("--input,-i", input, "RCS CSV")->required()->check(CLI::ExistingFile);
  image->add_option("--output,-o", output, "Raster CSV path (default <out-dir>/image.csv)");
  image->add_flag("--snapshots", snapshots, "Also write every sparse iterate as <stem>_iter{t}");

  auto* extract = app.add_subcommand("extract", "Gate an image and extract RCS at one (f, angle)");
  add_common(extract);
  add_method(extract);
  extract->add_option("--raster", raster, "Raster CSV to gate")->check(CLI::ExistingFile);
  extract->add_option("--input,-i", input, "RCS CSV to image first")->check(CLI::ExistingFile);
  extract->add_option("--gate-x", gate_x, "Gate centre x (m)")->required();
  extract->add_option("--gate-y", gate_y, "Gate centre y (m)")->required();
  extract->add_option("--gate-radius", common.gate_radius, "Gate radius (m)");
  extract->add_option("--eval-freq", eval_freq, "Evaluation frequency (Hz)");
  extract->add_option("--eval-angle", eval_angle, "Evaluation angle (deg)");

  auto* two_point = app.add_subcommand("two-point", "Two equal point scatterers at +-separation/2");
  add_common(two_point);
  add_method(two_point);
  two_point->add_option("--separation", separation, "Separation (m)")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "RCS extraction statistics over a full rotation");
  add_common(sweep);
  add_method(sweep);
  sweep->add_option("--distance", distance, "Target distance from origin (m)")->check(CLI::PositiveNumber);
  sweep->add_option("--gate-radius", common.gate_radius, "Gate radius (m)");
  sweep->add_option("--jobs", common.jobs, "Worker threads (default: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (common.jobs == 0) common.jobs = std::max(1u, std::thread::hardware_concurrency());

  try {
    if (*simulate) return run_simulate(common, output);
    if (*image) return run_image(common, input, output, snapshots);
    if (*extract) return run_extract(common, raster, input, gate_x, gate_y, eval_freq, eval_angle);
    if (*two_point) return run_two_point(common, separation);
    if (*sweep) return run_sweep(common, distance);
  } catch (const io::CsvError& e) {
    std::fprintf(stderr, "error: malformed CSV: %s\n", e.what());
    return kBadCsv;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
