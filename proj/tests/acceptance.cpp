// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <isar/isar.hpp>

using namespace isar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

CVector random_cvector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd;
  CVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = {nd(rng), nd(rng)};
  return v;
}

double residual_of(const MeasurementOperator& op, const ComplexImage& x, const RcsAmplitude& y) {
  CVector ax;
  op.apply(x.values, ax);
  return (ax - y.values).norm();
}

// ---------------------------------------------------------------------------

Outcome resolution_limit() {
  Outcome o;
  const ExperimentSetup setup;
  const double res = setup.geometry.range_resolution();
  o.check(std::abs(setup.geometry.bandwidth() - 3e9) < 1.0, "B = 3 GHz");
  o.check(std::abs(res - 0.04997) < 5e-6, fmt("c0/(2B) = %.6f m", res));
  for (auto [sep, want] : {std::pair{0.15, std::size_t{2}}, std::pair{0.05, std::size_t{1}}}) {
    const auto t0 = Clock::now();
    const auto r = two_point_experiment(sep, Method::bp, setup);
    const double dt = seconds_since(t0);
    o.check(r.peaks.size() == want,
            fmt("%.2f m: %.0f peaks", sep, static_cast<double>(r.peaks.size())));
    o.check(dt < 10.0, fmt("%.2f m in %.2f s", sep, dt));
  }
  return o;
}

Outcome isr_super_resolution(std::vector<double>& feasibility) {
  Outcome o;
  const ExperimentSetup setup;
  const auto t0 = Clock::now();
  const auto r = two_point_experiment(0.05, Method::isr, setup);
  const double dt = seconds_since(t0);
  o.check(r.clusters.size() == 2, fmt("%.0f clusters", static_cast<double>(r.clusters.size())));
  if (r.clusters.size() == 2) {
    auto c = r.clusters;
    std::sort(c.begin(), c.end(), [](const Cluster& a, const Cluster& b) { return a.centroid_x < b.centroid_x; });
    const double e0 = std::hypot(c[0].centroid_x + 0.025, c[0].centroid_y);
    const double e1 = std::hypot(c[1].centroid_x - 0.025, c[1].centroid_y);
    o.check(std::max(e0, e1) <= 0.02,
            fmt("centroids (%.4f, %.4f) m, worst error %.4f m", c[0].centroid_x, c[1].centroid_x, std::max(e0, e1)));
  }
  o.check(dt < 300.0, fmt("%.1f s", dt));
  const MeasurementOperator op(setup.grid, setup.geometry);
  for (const auto& x : r.imaging.iterates) feasibility.push_back(residual_of(op, x, r.data) / r.data.values.norm());
  return o;
}

Outcome solver_feasibility(std::vector<double> ratios) {
  Outcome o;
  std::size_t exhausted = 0;
  for (const char* name : {"default.cfg", "extraction.cfg"}) {
    const auto sc = io::load_scenario(std::string(ISAR_SCENARIO_DIR) + "/" + name);
    const auto geom = sc.geometry();
    const auto grid = sc.grid();
    const MeasurementOperator op(grid, geom);
    const auto y = synthesize_measurement(sc.scatterers, geom);
    for (Method m : {Method::l1, Method::isr}) {
      const auto img = form_image(m, y, op, sc.imaging);
      for (const auto& x : img.iterates) ratios.push_back(residual_of(op, x, y) / y.values.norm());
      for (const auto& rep : img.reports) exhausted += rep.termination != Termination::converged;
    }
  }
  const double worst = *std::max_element(ratios.begin(), ratios.end());
  o.check(worst <= 0.0101, fmt("%.0f solves, worst ||Ax-y||/||y|| = %.6f", static_cast<double>(ratios.size()), worst));
  o.check(exhausted == 0, fmt("%.0f budget exhaustions", static_cast<double>(exhausted)));
  return o;
}

Outcome adjoint_dot_test() {
  Outcome o;
  std::mt19937_64 rng(4);
  const auto geom = MeasurementGeometry::uniform(13.5e9, 16.5e9, 5, -5.7, 5.7, 7);
  const ImageGrid grid(0.08, 0.08, 0.01);
  const MeasurementOperator op(grid, geom);
  double worst = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const CVector x = random_cvector(rng, op.cols());
    const CVector y = random_cvector(rng, op.rows());
    CVector ax, ahy;
    op.apply(x, ax);
    op.apply_adjoint(y, ahy);
    const cdouble lhs = ax.dot(y);
    const cdouble rhs = x.dot(ahy);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  o.check(grid.nx() == 9 && grid.ny() == 9 && geom.size() == 35, "5x7 samples, 9x9 grid");
  o.check(worst < 1e-10, fmt("%.0f pairs, worst relative error %.2e", trials, worst));
  return o;
}

Outcome amplitude_calibration() {
  Outcome o;
  const ExperimentSetup setup;
  const MeasurementOperator op(setup.grid, setup.geometry);
  const std::size_t j = setup.grid.nearest(0.12, -0.07);
  const double x0 = setup.grid.x_of(j);
  const double y0 = setup.grid.y_of(j);
  const GateSpec gate{x0, y0, 0.10};
  for (double truth : {0.0, -30.0}) {
    const auto s = PointScatterer::from_dbsm(x0, y0, truth, 0.0);
    const auto y = synthesize_measurement(std::span(&s, 1), setup.geometry);
    const auto img = backproject(y, op, {WindowKind::none});
    if (truth == 0.0) {
      const double peak = img.values.cwiseAbs().maxCoeff();
      o.check(std::abs(peak - 1.0) <= 1e-6, fmt("0 dBsm BP peak %.9f", peak));
    }
    const double v = extract_rcs(gate_image(img, setup.grid, gate), setup.grid, gate,
                                 backprojection_gain(op, {WindowKind::none}, gate));
    o.check(std::abs(v - truth) <= 0.2, fmt("%.0f dBsm extracted as %.4f dBsm", truth, v));
  }
  return o;
}

Outcome statistical_sweep() {
  Outcome o;
  SweepSetup setup;
  auto t0 = Clock::now();
  const auto bp = sweep_statistics(0.3, Method::bp, setup);
  const double dt_bp = seconds_since(t0);
  const double bp_spread = bp.p90_dbsm - bp.p10_dbsm;
  o.check(std::abs(bp.mean_dbsm + 30.0) <= 1.5,
          fmt("BP mean %.3f, p10 %.3f, p90 %.3f dBsm", bp.mean_dbsm, bp.p10_dbsm, bp.p90_dbsm));
  o.check(bp_spread < 6.0, fmt("BP spread %.3f dB", bp_spread));
  o.check(dt_bp < 120.0, fmt("BP 360 positions in %.1f s", dt_bp));

  // ISR at the reduced 36-position setting (every 10 degrees).
  setup.positions = 36;
  t0 = Clock::now();
  const auto isr = sweep_statistics(0.3, Method::isr, setup);
  const double dt_isr = seconds_since(t0);
  const auto bp36 = sweep_statistics(0.3, Method::bp, setup);
  const double isr_spread = isr.p90_dbsm - isr.p10_dbsm;
  o.check(std::isfinite(isr.mean_dbsm) && isr.budget_exhausted == 0,
          fmt("ISR(36) mean %.3f, p10 %.3f, p90 %.3f dBsm", isr.mean_dbsm, isr.p10_dbsm, isr.p90_dbsm));
  o.check(isr_spread >= bp_spread, fmt("ISR spread %.3f dB >= BP(360) spread %.3f dB", isr_spread, bp_spread));
  o.check(isr_spread >= bp36.p90_dbsm - bp36.p10_dbsm,
          fmt("ISR spread >= BP(36) spread %.3f dB", bp36.p90_dbsm - bp36.p10_dbsm));
  o.check(dt_isr < 7200.0, fmt("ISR 36 positions in %.1f s", dt_isr));
  return o;
}

Outcome projection_oracle() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> u(0.05, 0.95), wd(0.1, 3.0);
  double worst = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const Eigen::Index n = dim(rng);
    const CVector v = random_cvector(rng, n);
    RVector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = wd(rng);
    const RVector mag = v.cwiseAbs();
    const double tau = u(rng) * mag.dot(w);
    auto g = [&](double lam) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += w[i] * std::max(0.0, mag[i] - lam * w[i]);
      return s;
    };
    double lo = 0.0, hi = mag.cwiseQuotient(w).maxCoeff();
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > tau ? lo : hi) = mid;
    }
    const double lam = 0.5 * (lo + hi);
    const CVector p = project_weighted_l1_ball(v, w, tau);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = mag[i] - lam * w[i];
      const cdouble ref = s > 0.0 ? v[i] * (s / mag[i]) : cdouble{};
      worst = std::max(worst, std::abs(p[i] - ref));
    }
  }
  o.check(worst <= 1e-8, fmt("%.0f instances, worst deviation %.2e", trials, worst));
  return o;
}

Outcome property_suites() {
  Outcome o;
  std::mt19937_64 rng(99);
  const auto geom = MeasurementGeometry::uniform(13.5e9, 16.5e9, 41, -5.7, 5.7, 41);
  const auto grid = ImageGrid::square(0.3, 0.01);
  const MeasurementOperator op(grid, geom);

  // Linearity of the forward operator and of unwindowed backprojection.
  {
    const CVector x1 = random_cvector(rng, op.cols()), x2 = random_cvector(rng, op.cols());
    const cdouble a{0.3, -1.2}, b{2.0, 0.5};
    CVector lhs, r1, r2;
    op.apply(a * x1 + b * x2, lhs);
    op.apply(x1, r1);
    op.apply(x2, r2);
    const double e1 = (lhs - a * r1 - b * r2).norm() / lhs.norm();
    const RcsAmplitude y1{r1}, y2{r2};
    const auto bl = backproject(RcsAmplitude{a * r1 + b * r2}, op, {WindowKind::none}).values;
    const CVector br = a * backproject(y1, op, {WindowKind::none}).values + b * backproject(y2, op, {WindowKind::none}).values;
    const double e2 = (bl - br).norm() / br.norm();
    o.check(e1 < 1e-12 && e2 < 1e-12, fmt("linearity %.1e / %.1e", e1, e2));
  }

  // Phase equivariance and determinism of the solver.
  {
    const PointScatterer pts[] = {{0.03, 0.0, {1.0, 0.0}}, {-0.08, 0.05, {0.4, -0.4}}};
    const auto y = synthesize_measurement(pts, geom);
    SolverConfig cfg;
    cfg.kappa = kappa_from_ratio(y);
    const auto base = solve_bpdn(op, y, cfg);
    const auto again = solve_bpdn(op, y, cfg);
    const cdouble ph = std::polar(1.0, 0.77);
    const auto rot = solve_bpdn(op, RcsAmplitude{ph * y.values}, cfg);
    const double e = (rot.image.values - ph * base.image.values).norm() / base.image.values.norm();
    o.check(e < 1e-4, fmt("phase equivariance %.1e", e));
    o.check(base.report == again.report && base.image.values == again.image.values, "solver determinism");
  }

  // Kernel support and range.
  {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool ok = smoothing_kernel(0.0, 0.02) == 1.0 && smoothing_kernel(0.02, 0.02) == 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double d = 1e-3 + u(rng), r = 2.0 * u(rng);
      const double k = smoothing_kernel(r, d);
      ok = ok && k >= 0.0 && k <= 1.0 && (r < d || k == 0.0);
    }
    o.check(ok, "kernel support");
  }

  // Idempotent gating, phase-invariant extraction.
  {
    const ComplexImage x{random_cvector(rng, op.cols())};
    const GateSpec gate{0.05, -0.04, 0.06};
    const auto g1 = gate_image(x, grid, gate);
    const double r1 = extract_rcs(g1, grid, gate);
    const double r2 = extract_rcs(ComplexImage{std::polar(1.0, 2.0) * g1.values}, grid, gate);
    o.check(gate_image(g1, grid, gate).values == g1.values, "idempotent gating");
    o.check(std::abs(r1 - r2) < 1e-10, "extraction phase invariance");
  }

  // Sweep independent of evaluation order.
  {
    SweepSetup s;
    s.positions = 24;
    s.jobs = 1;
    const auto a = sweep_statistics(0.2, Method::bp, s);
    s.jobs = 4;
    const auto b = sweep_statistics(0.2, Method::bp, s);
    o.check(a.extracted_dbsm == b.extracted_dbsm && a.mean_dbsm == b.mean_dbsm, "sweep determinism");
  }
  return o;
}

}  // namespace

int main() {
  std::vector<double> feasibility;
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"resolution limit", resolution_limit},
      {"ISR super-resolution", [&] { return isr_super_resolution(feasibility); }},
      {"solver feasibility", [&] { return solver_feasibility(feasibility); }},
      {"adjoint dot test", adjoint_dot_test},
      {"amplitude calibration", amplitude_calibration},
      {"statistical sweep", statistical_sweep},
      {"weighted projection oracle", projection_oracle},
      {"property suites", property_suites},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s [%zu] %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
