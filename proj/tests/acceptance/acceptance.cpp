// Acceptance run: one PASS/FAIL/SKIP line per criterion, nonzero exit on any
// FAIL. Criteria 4, 5, 6 and 8 share one N_n = 8 TT run, which dominates the
// wall time; --useries caches its U series between invocations.

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "tfdgqme/tfdgqme.hpp"

using namespace tfdgqme;

namespace {

constexpr double kDeskDt = 1.50083e-3;

struct Outcome {
  enum Status { kPass, kFail, kSkip } status = kPass;
  std::string detail;
};

const char* status_name(Outcome::Status s) {
  switch (s) {
    case Outcome::kPass: return "PASS";
    case Outcome::kFail: return "FAIL";
    case Outcome::kSkip: return "SKIP";
  }
  return "?";
}

// Collects named checks into one outcome.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    all_ &= ok;
    add((ok ? "" : "NOT ") + what);
  }
  void lt(const std::string& name, double value, double bound) {
    std::ostringstream os;
    os << name << " = " << value << " (< " << bound << ")";
    expect(value < bound, os.str());
  }
  void note(const std::string& s) { add(s); }
  Outcome outcome() const { return {all_ ? Outcome::kPass : Outcome::kFail, text_}; }

 private:
  void add(const std::string& s) { text_ += (text_.empty() ? "" : "; ") + s; }
  bool all_ = true;
  std::string text_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 1) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

Eigen::Matrix2cd donor_start() {
  Eigen::Matrix2cd s = Eigen::Matrix2cd::Zero();
  s(0, 0) = 1.0;
  return s;
}

std::vector<double> direct_sigma_z(const PropagatorSeries& u) {
  std::vector<double> z;
  for (const auto& m : u.entries) z.push_back((m(kDD, kDD) - m(kAA, kDD)).real());
  return z;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Everything downstream of a U series for one model.
struct PipelineRun {
  PropagatorSeries u;
  ElectronicLiouvillian lv;
  PfiSeries pfi;
  std::vector<KernelSeries> kernels;  // full, pop, donor, acceptor
  InhomSeries inhom;                   // acceptor
  double propagate_seconds = 0.0;
  double solve_seconds = 0.0;

  const KernelSeries& kernel(GqmeKind k) const { return kernels[static_cast<std::size_t>(k)]; }

  // With drop_last the kernels stop one step short of the U series, so no
  // kernel point depends on the one-sided end stencil.
  void solve(bool drop_last = false) {
    const auto t0 = std::chrono::steady_clock::now();
    pfi = differentiate(u, &lv.matrix);
    VolterraOptions vo;
    if (drop_last) vo.n_points = pfi.size() - 1;
    kernels.clear();
    for (const auto& t : all_gqme_types()) kernels.push_back(solve_kernel(pfi, t, lv, vo));
    inhom = solve_inhomogeneous(pfi, GqmeType::make(GqmeKind::kAcceptor), vo);
    solve_seconds = seconds_since(t0);
  }

  GqmeResult gqme(GqmeKind k, double t_final) const {
    GqmeOptions opt;
    opt.t_final = t_final;
    return propagate_gqme(kernel(k), k == GqmeKind::kAcceptor ? &inhom : nullptr, lv, donor_start(), opt);
  }

  // sigma_z of direct, full, pop and donor+acceptor up to t_final.
  std::vector<std::pair<std::string, std::vector<double>>> sigma_z_routes(double t_final) const {
    return {{"direct", direct_sigma_z(u)},
            {"full", gqme(GqmeKind::kFull, t_final).sigma_z},
            {"pop", gqme(GqmeKind::kPopulations, t_final).sigma_z},
            {"donor+acceptor", combined_sigma_z(gqme(GqmeKind::kDonor, t_final), gqme(GqmeKind::kAcceptor, t_final))}};
  }
};

// Criterion 1: isolated two-level limit through the whole TT pipeline.
Outcome rabi_limit() {
  const auto t0 = std::chrono::steady_clock::now();
  SpinBosonParams p;
  p.xi = 0.0;
  p.n_modes = 1;
  p.n_fock = 2;
  p.t_final = 10.0;
  // The second-order PFI stencils leave an O(dt^2) spurious full kernel; a
  // sixth of the desk step brings it below the 1e-6 target.
  p.dt = kDeskDt / 6.0;
  PipelineRun run;
  TtRunOptions opt;
  opt.rank = 2;
  run.u = compute_U_series(p, Backend::kTt, opt);
  run.lv = projected_liouvillian(p);
  run.solve();
  const std::size_t n = run.u.size();
  const auto ref = rabi_series(p.epsilon, p.gamma_c, p.dt, static_cast<int>(n));
  Checks c;
  for (const auto& [name, z] : run.sigma_z_routes(p.t_final)) c.lt(name, sup_diff(z, ref, n), 1e-6);
  const double secs = seconds_since(t0);
  c.lt("seconds", secs, 60.0);
  c.note("dt = " + format_double(p.dt));
  return c.outcome();
}

// Criterion 2: independent-boson limit.
Outcome dephasing_limit() {
  const auto t0 = std::chrono::steady_clock::now();
  SpinBosonParams p;
  p.gamma_c = 0.0;
  p.n_modes = 2;
  p.n_fock = 10;
  p.t_final = 5.0;
  TtRunOptions opt;
  opt.rank = 20;
  const auto tt = tt_reduced_series(p, pure_state_vector(PureState::kPlus), opt);
  const auto ref = dephasing_reference(p);
  double pop = 0.0, coh = 0.0;
  for (std::size_t i = 0; i < tt.sigma.size(); ++i) {
    for (const auto* s : {&tt.sigma[i], &ref.sigma[i]})
      pop = std::max({pop, std::abs((*s)(0, 0) - 0.5), std::abs((*s)(1, 1) - 0.5)});
    coh = std::max(coh, std::abs(tt.sigma[i](0, 1) - ref.sigma[i](0, 1)));
  }
  Checks c;
  c.lt("population drift", pop, 1e-8);
  c.lt("TT vs dense coherence", coh, 1e-5);
  c.lt("seconds", seconds_since(t0), 300.0);
  return c.outcome();
}

// Criterion 3: TT and dense U series agree element by element.
Outcome backend_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Checks c;
  for (int n_modes : {2, 4}) {
    SpinBosonParams p;
    p.n_modes = n_modes;
    p.n_fock = 10;
    p.t_final = 5.0;
    const double dim = 2.0 * std::pow(static_cast<double>(p.n_fock), 2 * n_modes);
    if (dim > kDefaultDenseLimit) {
      c.note("N_n = " + std::to_string(n_modes) + " skipped (dense dimension " + format_double(dim) + ")");
      continue;
    }
    TtRunOptions opt;
    opt.rank = 20;
    const auto tt = compute_U_series(p, Backend::kTt, opt);
    const auto dense = compute_U_series(p, Backend::kDense);
    double worst = 0.0;
    for (std::size_t i = 0; i < tt.size(); ++i)
      worst = std::max(worst, (tt.entries[i] - dense.entries[i]).cwiseAbs().maxCoeff());
    c.lt("N_n = " + std::to_string(n_modes) + " sup |U_tt - U_dense|", worst, 1e-4);
  }
  c.lt("seconds", seconds_since(t0), 1800.0);
  return c.outcome();
}

// Shared desk-scale run for criteria 4, 5, 6 and 8.
struct DeskRun {
  SpinBosonParams params;
  Index rank = 10;
  PipelineRun run;
  double seconds = 0.0;
};

DeskRun make_desk_run(const std::string& cache) {
  DeskRun d;
  d.params.n_modes = 8;
  d.params.n_fock = 6;
  d.params.dt = kDeskDt / 2.0;
  d.params.t_final = 15.0 + d.params.dt;
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;
  cfg.params = d.params;
  cfg.tt_rank = d.rank;
  const std::string fp = cfg.fingerprint();
  bool loaded = false;
  if (!cache.empty() && std::filesystem::exists(cache)) {
    auto f = read_useries(cache);
    if (f.series.fingerprint == fp) {
      d.run.u = std::move(f.series);
      loaded = true;
    }
  }
  d.run.lv = projected_liouvillian(d.params);
  if (!loaded) {
    TtRunOptions opt;
    opt.rank = d.rank;
    d.run.u = compute_U_series(d.params, Backend::kTt, opt);
    d.run.u.fingerprint = fp;
    if (!cache.empty()) write_useries(cache, d.run.u, d.run.lv.matrix);
  }
  d.run.propagate_seconds = seconds_since(t0);
  d.run.solve(true);
  d.seconds = seconds_since(t0);
  return d;
}

// Criterion 4: the four GQMEs and direct propagation agree.
Outcome type_equivalence(const DeskRun& d) {
  const auto t0 = std::chrono::steady_clock::now();
  const double t_end = 10.0;
  const std::size_t n = static_cast<std::size_t>(std::lround(t_end / d.params.dt)) + 1;
  const auto routes = d.run.sigma_z_routes(t_end);
  Checks c;
  double worst = 0.0;
  std::string pair;
  for (std::size_t a = 0; a < routes.size(); ++a)
    for (std::size_t b = a + 1; b < routes.size(); ++b) {
      const double m = sup_diff(routes[a].second, routes[b].second, n);
      if (m >= worst) {
        worst = m;
        pair = routes[a].first + " vs " + routes[b].first;
      }
    }
  c.lt("largest pairwise sup |dsigma_z| (" + pair + ")", worst, 1e-3);
  const double secs = d.seconds + seconds_since(t0);
  c.lt("seconds", secs, 3600.0);
  c.note("N_n = 8, n_fock = " + std::to_string(d.params.n_fock) + ", rank " + std::to_string(d.rank) +
         ", dt = " + format_double(d.params.dt));
  return c.outcome();
}

// Criterion 5: structural zeros of the exact kernels.
Outcome kernel_structure(const DeskRun& d) {
  Checks c;
  double corner = 0.0, full_max = 0.0;
  for (const auto& m : d.run.kernel(GqmeKind::kFull).entries) {
    full_max = std::max(full_max, m.cwiseAbs().maxCoeff());
    for (int a : {kDD, kAA})
      for (int b : {kDD, kAA}) corner = std::max(corner, std::abs(m(a, b)));
  }
  c.lt("max |K_full corner| / max |K_full|", corner / full_max, 1e-5);
  double re = 0.0, im = 0.0;
  for (const auto& m : d.run.kernel(GqmeKind::kPopulations).entries) {
    re = std::max(re, m.real().cwiseAbs().maxCoeff());
    im = std::max(im, m.imag().cwiseAbs().maxCoeff());
  }
  c.lt("max |Im K_pop| / max |Re K_pop|", im / re, 1e-4);
  double ire = 0.0, iim = 0.0;
  for (const auto& v : d.run.inhom.entries) {
    ire = std::max(ire, std::abs(v[0].real()));
    iim = std::max(iim, std::abs(v[0].imag()));
  }
  c.lt("max |Im I_AA| / max |Re I_AA|", iim / ire, 1e-6);
  return c.outcome();
}

// Criterion 6: plug-back residuals and iteration counts.
Outcome volterra_consistency(const DeskRun& d) {
  Checks c;
  const int envelope[] = {10, 5, 4, 4};
  for (std::size_t i = 0; i < d.run.kernels.size(); ++i) {
    const auto& k = d.run.kernels[i];
    c.lt(k.type.name() + " residual", kernel_residual(d.run.pfi, k, d.run.lv), 1e-10);
    c.expect(k.iterations_used <= envelope[i], k.type.name() + " iterations " + std::to_string(k.iterations_used) +
                                                   " <= " + std::to_string(envelope[i]));
  }
  c.lt("I_AA residual", inhom_residual(d.run.pfi, d.run.inhom), 1e-10);
  c.expect(d.run.inhom.iterations_used <= 4, "I_AA iterations " + std::to_string(d.run.inhom.iterations_used) + " <= 4");
  return c.outcome();
}

// Criterion 7: convergence orders against the isolated two-level system.
Outcome convergence_orders() {
  const Eigen::Matrix4cd l = commutator_superoperator(electronic_hamiltonian(1.0, 1.0));
  auto rabi_u = [](double dt, double t_final) {
    PropagatorSeries u;
    u.dt = dt;
    const int n = static_cast<int>(std::lround(t_final / dt)) + 1;
    for (int i = 0; i < n; ++i) u.entries.push_back(two_level_propagator(1.0, 1.0, i * dt));
    return u;
  };
  // F and Fdot against i dU/dt = <L> U and i d2U/dt2 = -i <L>^2 U.
  auto pfi_error = [&](double dt) {
    const auto u = rabi_u(dt, 2.0);
    const auto p = differentiate(u);
    double e = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      e = std::max(e, (p.F[i] - l * u.entries[i]).cwiseAbs().maxCoeff());
      e = std::max(e, (p.Fdot[i] + kI * l * l * u.entries[i]).cwiseAbs().maxCoeff());
    }
    return e;
  };
  // RK4 on the memoryless equation.
  auto rk4_error = [&](double dt) {
    KernelSeries k;
    k.dt = dt;
    k.type = GqmeType::make(GqmeKind::kFull);
    const int n = static_cast<int>(std::lround(5.0 / dt)) + 1;
    k.entries.assign(n, Eigen::MatrixXcd::Zero(4, 4));
    GqmeOptions opt;
    opt.t_final = 5.0;
    const auto r = propagate_gqme(k, nullptr, {l}, donor_start(), opt);
    return sup_diff(r.sigma_z, rabi_series(1.0, 1.0, dt, n), n);
  };
  // Populations-only kernel from the trapezoidal Volterra solve against
  // 2 Gamma^2 cos(2 eps tau) [[1, -1], [-1, 1]].
  auto kernel_error = [&](double dt) {
    const auto p = differentiate(rabi_u(dt, 3.0), &l);
    const auto k = solve_kernel(p, GqmeType::make(GqmeKind::kPopulations), ElectronicLiouvillian{});
    Eigen::Matrix2cd shape;
    shape << 1.0, -1.0, -1.0, 1.0;
    double e = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i)
      e = std::max(e, (k.entries[i] - 2.0 * std::cos(2.0 * i * dt) * shape).cwiseAbs().maxCoeff());
    return e;
  };
  Checks c;
  auto ratio = [&](const std::string& name, double coarse, double fine, double lo, double hi) {
    const double r = coarse / fine;
    c.expect(r > lo && r < hi, name + " ratio " + fixed(r, 2) + " in (" + fixed(lo, 1) + ", " + fixed(hi, 1) + ")");
  };
  ratio("PFI", pfi_error(3e-3), pfi_error(1.5e-3), 3.5, 4.5);
  ratio("RK4", rk4_error(0.05), rk4_error(0.025), 14.0, 18.0);
  ratio("trapezoidal kernel", kernel_error(3e-3), kernel_error(1.5e-3), 3.5, 4.5);
  return c.outcome();
}

// Criterion 8: backward memory-time search on the desk kernels.
Outcome memory_time(const DeskRun& d) {
  Checks c;
  const double t_mem_max = 15.0, conv = 5e-4;
  std::vector<std::pair<std::string, double>> found;
  for (const auto& t : all_gqme_types()) {
    const auto& k = d.run.kernel(t.kind);
    const InhomSeries* in = t.kind == GqmeKind::kAcceptor ? &d.run.inhom : nullptr;
    const auto s = memory_time_search(k, in, d.run.lv, donor_start(), conv, t_mem_max, t_mem_max);
    const double dev = max_deviation(s.result, s.reference);
    c.expect(deviations_monotone(s), t.name() + " monotone");
    c.lt(t.name() + " t_mem " + fixed(s.memory_time, 2) + " deviation", dev, conv);
    found.emplace_back(t.name(), s.memory_time);
  }
  std::string shortest = found.front().first;
  double best = found.front().second;
  for (const auto& [name, tm] : found)
    if (tm < best) best = tm, shortest = name;
  c.note("shortest memory: " + shortest + (shortest == "full" ? " (matches the expected ordering)" : " (full is not shortest)"));
  return c.outcome();
}

// Criterion 9: model 1 at full bath size. Not gating.
Outcome stretch() {
  const auto t0 = std::chrono::steady_clock::now();
  SpinBosonParams p;
  p.t_final = 10.0;
  TtRunOptions opt;
  opt.rank = 30;
  const auto u = compute_U_series(p, Backend::kTt, opt);
  const auto z = direct_sigma_z(u);
  // Damped oscillation: sigma_z dips below zero and the late-time swing is
  // smaller than the first one.
  const std::size_t n = z.size(), half = n / 2;
  const double first_min = *std::min_element(z.begin(), z.begin() + half);
  double late_lo = 1.0, late_hi = -1.0;
  for (std::size_t i = half; i < n; ++i) late_lo = std::min(late_lo, z[i]), late_hi = std::max(late_hi, z[i]);
  Checks c;
  c.expect(first_min < 0.0, "sigma_z crosses zero (min " + fixed(first_min, 3) + ")");
  c.expect(late_hi - late_lo < 1.0 - first_min, "oscillation damped (late swing " + fixed(late_hi - late_lo, 3) + ")");
  c.note("seconds " + fixed(seconds_since(t0), 0));
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool run_stretch = false;
  std::string cache;
  std::vector<int> only;
  app.add_flag("--stretch", run_stretch, "also run the full-size model (hours)");
  app.add_option("--useries", cache, "cache file for the desk-run U series");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int i) { return selected.empty() || selected.count(i); };

  bool failed = false;
  auto report = [&](int id, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {Outcome::kFail, std::string("exception: ") + e.what()};
    }
    failed |= o.status == Outcome::kFail;
    std::cout << "criterion " << id << ": " << status_name(o.status) << " [" << fixed(seconds_since(t0)) << " s] "
              << o.detail << std::endl;
  };

  report(1, rabi_limit);
  report(2, dephasing_limit);
  report(3, backend_equivalence);
  std::optional<DeskRun> desk;
  if (wanted(4) || wanted(5) || wanted(6) || wanted(8)) {
    try {
      desk = make_desk_run(cache);
    } catch (const std::exception& e) {
      std::cerr << "desk run failed: " << e.what() << "\n";
    }
  }
  auto on_desk = [&](Outcome (*f)(const DeskRun&)) {
    return [&desk, f]() -> Outcome {
      if (!desk) return {Outcome::kFail, "desk run unavailable"};
      return f(*desk);
    };
  };
  report(4, on_desk(type_equivalence));
  report(5, on_desk(kernel_structure));
  report(6, on_desk(volterra_consistency));
  report(7, convergence_orders);
  report(8, on_desk(memory_time));
  report(9, [&]() -> Outcome {
    if (!run_stretch) return {Outcome::kSkip, "not gating; pass --stretch to run (hours)"};
    return stretch();
  });
  return failed ? 1 : 0;
}
