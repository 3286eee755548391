// Command-line driver: each pipeline stage is a subcommand operating on
// text series files; `pipeline` chains them from a model config.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfdgqme/tfdgqme.hpp"

namespace fs = std::filesystem;
using namespace tfdgqme;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitCompare = 3;

struct ComparisonFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelOverrides {
  std::string config;
  std::string backend;
  int rank = 0;
  int n_modes = 0;
  int n_fock = 0;
  double t_final = -1.0;
  double dt = -1.0;
  int jobs = 1;

  void attach(CLI::App* app, bool config_required = true) {
    auto* c = app->add_option("--config", config, "model config file");
    if (config_required) c->required();
    app->add_option("--backend", backend, "tt or dense (overrides the config)");
    app->add_option("--rank", rank, "TT manifold rank (overrides tt_rank)");
    app->add_option("--n-modes", n_modes, "number of bath modes (overrides n_modes)");
    app->add_option("--n-fock", n_fock, "harmonic levels per mode (overrides n_fock)");
    app->add_option("--t-final", t_final, "final propagation time (overrides t_final)");
    app->add_option("--dt", dt, "time step (overrides dt)");
    app->add_option("--jobs", jobs, "concurrent trajectories or solves")->check(CLI::PositiveNumber);
  }

  ModelConfig load() const {
    ModelConfig c = load_config(config);
    if (!backend.empty()) {
      parse_backend(backend);
      c.backend = backend;
    }
    if (rank > 0) c.tt_rank = rank;
    if (n_modes > 0) c.params.n_modes = n_modes;
    if (n_fock > 0) c.params.n_fock = n_fock;
    if (t_final >= 0.0) c.params.t_final = t_final;
    if (dt > 0.0) c.params.dt = dt;
    c.params.validate();
    return c;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_same(const std::string& what, const std::string& a, const std::string& b) {
  if (a != b) throw InputError("fingerprint mismatch: " + what + " (" + a + " vs " + b + ")");
}

void require_same_dt(double a, double b) {
  if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b)))
    throw InputError("grid spacing mismatch: " + format_double(a) + " vs " + format_double(b));
}

std::string run_propagate(const ModelConfig& cfg, int jobs, const std::string& out) {
  TtRunOptions opt;
  opt.rank = cfg.tt_rank;
  PropagatorSeries u = compute_U_series(cfg.params, parse_backend(cfg.backend), opt, jobs);
  u.fingerprint = cfg.fingerprint();
  return write_useries(out, u, projected_liouvillian(cfg.params).matrix);
}

std::string run_pfi(const std::string& in, const std::string& out) {
  const USeriesFile u = read_useries(in);
  const PfiSeries p = differentiate(u.series, &u.liouvillian, kDD);
  return write_pfi(out, p, u.liouvillian, u.fingerprint);
}

struct KernelOutputs {
  std::string kernel_fp;
  std::string inhom_fp;
  int iterations = 0;
  double residual = 0.0;
};

KernelOutputs run_kernel(const std::string& in, const GqmeType& type, const VolterraOptions& vo,
                         const std::string& out, const std::string& inhom_out) {
  const PfiFile p = read_pfi(in);
  const ElectronicLiouvillian lv{p.liouvillian};
  const KernelSeries k = solve_kernel(p.pfi, type, lv, vo);
  KernelOutputs r;
  r.kernel_fp = write_kernel(out, k, p.liouvillian, p.fingerprint);
  r.iterations = k.iterations_used;
  r.residual = kernel_residual(p.pfi, k, lv);
  if (type.needs_inhom(p.pfi.gamma)) {
    const InhomSeries in_s = solve_inhomogeneous(p.pfi, type, vo);
    r.inhom_fp = write_inhom(inhom_out, in_s, p.fingerprint);
  }
  return r;
}

std::string default_inhom_path(const std::string& kernel_path) { return kernel_path + ".inhom"; }

// Kernel plus (when needed) its inhomogeneous term, checked for consistency.
struct LoadedKernel {
  KernelFile k;
  std::optional<InhomSeries> inhom;
};

LoadedKernel load_kernel(const std::string& path, const std::string& inhom_path) {
  LoadedKernel out{read_kernel(path), std::nullopt};
  if (out.k.kernel.type.needs_inhom(kDD)) {
    const std::string ip = inhom_path.empty() ? default_inhom_path(path) : inhom_path;
    out.inhom = read_inhom(ip);
    require_same("kernel and inhomogeneous term model", out.k.kernel.fingerprint, out.inhom->fingerprint);
    require_same_dt(out.k.kernel.dt, out.inhom->dt);
    if (!(out.inhom->type == out.k.kernel.type)) throw InputError("inhomogeneous term belongs to a different GQME type");
  }
  return out;
}

Eigen::Matrix2cd donor_start() {
  Eigen::Matrix2cd s = Eigen::Matrix2cd::Zero();
  s(0, 0) = 1.0;
  return s;
}

std::string run_gqme(const std::string& kernel_path, const std::string& inhom_path, double t_mem, double t_final,
                     const std::string& out) {
  const LoadedKernel lk = load_kernel(kernel_path, inhom_path);
  GqmeOptions go;
  go.memory_time = t_mem;
  go.t_final = t_final >= 0.0 ? t_final : (lk.k.kernel.size() - 1) * lk.k.kernel.dt;
  const GqmeResult r = propagate_gqme(lk.k.kernel, lk.inhom ? &*lk.inhom : nullptr,
                                      ElectronicLiouvillian{lk.k.liouvillian}, donor_start(), go);
  return write_result(out, result_from_gqme(r, lk.k.kernel.fingerprint), lk.k.fingerprint);
}

nlohmann::json run_memtime(const std::string& kernel_path, const std::string& inhom_path, double conv, double t_mem_max,
                           double t_final, const std::string& out) {
  const LoadedKernel lk = load_kernel(kernel_path, inhom_path);
  const double h = lk.k.kernel.dt;
  const double tmax = t_mem_max >= 0.0 ? t_mem_max : (lk.k.kernel.size() - 1) * h;
  const double tf = t_final >= 0.0 ? t_final : tmax;
  const MemoryTimeSearch s = memory_time_search(lk.k.kernel, lk.inhom ? &*lk.inhom : nullptr,
                                                ElectronicLiouvillian{lk.k.liouvillian}, donor_start(), conv, tmax, tf);
  const std::string fp = write_result(out, result_from_gqme(s.result, lk.k.kernel.fingerprint), lk.k.fingerprint);
  nlohmann::json j;
  j["gqme_type"] = lk.k.kernel.type.name();
  j["memory_time"] = s.memory_time;
  j["monotone"] = deviations_monotone(s);
  j["output"] = out;
  j["fingerprint"] = fp;
  for (const auto& c : s.scanned) j["scan"].push_back({{"t_mem", c.memory_time}, {"deviation", c.deviation}});
  return j;
}

// "a" or "a+b"; the latter combines donor-only and acceptor-only results.
std::vector<double> load_sigma_z(const std::string& spec, double& dt, std::string& model) {
  const auto plus = spec.find('+');
  if (plus == std::string::npos) {
    const ResultFile r = read_result(spec);
    if (r.sigma_z.empty()) throw InputError(spec + ": result has no population difference");
    dt = r.dt;
    model = r.model;
    return r.sigma_z;
  }
  const ResultFile a = read_result(spec.substr(0, plus));
  const ResultFile b = read_result(spec.substr(plus + 1));
  const ResultFile& donor = a.kind == "donor" ? a : b;
  const ResultFile& acceptor = a.kind == "donor" ? b : a;
  if (donor.kind != "donor" || acceptor.kind != "acceptor")
    throw InputError("'a+b' comparison needs one donor and one acceptor result");
  require_same("donor and acceptor model", donor.model, acceptor.model);
  require_same_dt(donor.dt, acceptor.dt);
  if (donor.sigma.size() != acceptor.sigma.size()) throw InputError("donor and acceptor results differ in length");
  dt = donor.dt;
  model = donor.model;
  std::vector<double> z(donor.sigma.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (donor.sigma[i][0] - acceptor.sigma[i][0]).real();
  return z;
}

double run_compare(const std::string& a, const std::string& b, double t_max) {
  double dta = 0, dtb = 0;
  std::string ma, mb;
  const auto za = load_sigma_z(a, dta, ma);
  const auto zb = load_sigma_z(b, dtb, mb);
  require_same_dt(dta, dtb);
  if (ma != "analytic" && mb != "analytic") require_same("compared results model", ma, mb);
  std::size_t n = std::min(za.size(), zb.size());
  if (t_max >= 0.0) n = std::min<std::size_t>(n, static_cast<std::size_t>(std::lround(t_max / dta)) + 1);
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(za[i] - zb[i]));
  return m;
}

std::string run_rabi(double eps, double gam, double dt, double t_final, const std::string& out) {
  ResultFile r;
  r.kind = "rabi";
  r.model = "analytic";
  r.dt = dt;
  r.sigma_z = rabi_series(eps, gam, dt, static_cast<int>(std::lround(t_final / dt)) + 1);
  return write_result(out, r, "analytic");
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ComparisonFailure& e) {
    std::cerr << "comparison failed: " << e.what() << "\n";
    return kExitCompare;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact GQME memory kernels of the spin-boson model from tensor-train thermo-field dynamics"};
  app.require_subcommand(1);
  std::function<void()> action;

  // propagate
  ModelOverrides prop_model;
  std::string prop_out;
  auto* prop = app.add_subcommand("propagate", "propagate the model and write the U series");
  prop_model.attach(prop);
  prop->add_option("--out", prop_out, "output U-series file")->required();
  prop->callback([&] {
    action = [&] {
      const ModelConfig cfg = prop_model.load();
      const std::string fp = run_propagate(cfg, prop_model.jobs, prop_out);
      std::cout << prop_out << " " << fp << "\n";
    };
  });

  // pfi
  std::string pfi_in, pfi_out;
  auto* pfi = app.add_subcommand("pfi", "differentiate a U series into F, Fdot and Z");
  pfi->add_option("useries", pfi_in, "input U-series file")->required();
  pfi->add_option("--out", pfi_out, "output PFI file")->required();
  pfi->callback([&] {
    action = [&] { std::cout << pfi_out << " " << run_pfi(pfi_in, pfi_out) << "\n"; };
  });

  // kernel
  std::string ker_in, ker_out, ker_inhom, ker_type = "full";
  VolterraOptions ker_vo;
  auto* ker = app.add_subcommand("kernel", "solve for a memory kernel (and inhomogeneous term)");
  ker->add_option("pfi", ker_in, "input PFI file")->required();
  ker->add_option("--type", ker_type, "full, pop, donor or acceptor");
  ker->add_option("--out", ker_out, "output kernel file")->required();
  ker->add_option("--inhom", ker_inhom, "output inhomogeneous-term file (default <out>.inhom)");
  ker->add_option("--tol", ker_vo.tol, "fixed-point tolerance");
  ker->add_option("--max-iter", ker_vo.max_iter, "fixed-point iteration limit");
  ker->callback([&] {
    action = [&] {
      const auto r = run_kernel(ker_in, GqmeType::parse(ker_type), ker_vo, ker_out,
                                ker_inhom.empty() ? default_inhom_path(ker_out) : ker_inhom);
      std::cout << ker_out << " " << r.kernel_fp << " iterations=" << r.iterations
                << " residual=" << format_double(r.residual) << "\n";
      if (!r.inhom_fp.empty())
        std::cout << (ker_inhom.empty() ? default_inhom_path(ker_out) : ker_inhom) << " " << r.inhom_fp << "\n";
    };
  });

  // gqme
  std::string gq_in, gq_inhom, gq_out, gq_type;
  double gq_tmem = -1.0, gq_tfinal = -1.0;
  auto* gq = app.add_subcommand("gqme", "propagate a GQME with RK4");
  gq->add_option("kernel", gq_in, "input kernel file")->required();
  gq->add_option("--type", gq_type, "expected GQME type (checked against the kernel file)");
  gq->add_option("--inhom", gq_inhom, "inhomogeneous-term file (default <kernel>.inhom)");
  gq->add_option("--t-mem", gq_tmem, "memory time (default: whole kernel)");
  gq->add_option("--t-final", gq_tfinal, "final time (default: kernel length)");
  gq->add_option("--out", gq_out, "output result file")->required();
  gq->callback([&] {
    action = [&] {
      if (!gq_type.empty() && !(read_kernel(gq_in).kernel.type == GqmeType::parse(gq_type)))
        throw InputError("kernel file is not of type '" + gq_type + "'");
      std::cout << gq_out << " " << run_gqme(gq_in, gq_inhom, gq_tmem, gq_tfinal, gq_out) << "\n";
    };
  });

  // memtime
  std::string mt_in, mt_inhom, mt_out;
  double mt_conv = 5e-4, mt_tmax = -1.0, mt_tfinal = -1.0;
  auto* mt = app.add_subcommand("memtime", "search for the shortest converged memory time");
  mt->add_option("kernel", mt_in, "input kernel file")->required();
  mt->add_option("--inhom", mt_inhom, "inhomogeneous-term file (default <kernel>.inhom)");
  mt->add_option("--conv-param", mt_conv, "largest allowed deviation from the reference dynamics");
  mt->add_option("--t-mem", mt_tmax, "largest memory time considered (default: whole kernel)");
  mt->add_option("--t-final", mt_tfinal, "final time of the comparison runs (default: --t-mem)");
  mt->add_option("--out", mt_out, "output result file at the selected memory time")->required();
  mt->callback([&] {
    action = [&] { std::cout << run_memtime(mt_in, mt_inhom, mt_conv, mt_tmax, mt_tfinal, mt_out).dump(2) << "\n"; };
  });

  // compare
  std::string cmp_a, cmp_b;
  double cmp_tol = 1e-3, cmp_tmax = -1.0;
  auto* cmp = app.add_subcommand("compare", "sup-norm difference of sigma_z between two results");
  cmp->add_option("a", cmp_a, "result file, or donor+acceptor pair 'd.res+a.res'")->required();
  cmp->add_option("b", cmp_b, "result file, or donor+acceptor pair")->required();
  cmp->add_option("--tol", cmp_tol, "pass threshold");
  cmp->add_option("--t-max", cmp_tmax, "compare only up to this time");
  cmp->callback([&] {
    action = [&] {
      const double m = run_compare(cmp_a, cmp_b, cmp_tmax);
      std::cout << "sup |dsigma_z| = " << format_double(m) << " (tol " << format_double(cmp_tol) << ")\n";
      if (!(m < cmp_tol) && !(m == 0.0)) throw ComparisonFailure("difference above tolerance");
    };
  });

  // rabi
  double rb_eps = 1.0, rb_gam = 1.0, rb_dt = 1.50083e-3, rb_tf = 10.0;
  std::string rb_out;
  auto* rb = app.add_subcommand("rabi", "write the closed-form isolated two-level sigma_z");
  rb->add_option("--epsilon", rb_eps, "energy bias");
  rb->add_option("--gamma", rb_gam, "electronic coupling");
  rb->add_option("--dt", rb_dt, "grid spacing");
  rb->add_option("--t-final", rb_tf, "final time");
  rb->add_option("--out", rb_out, "output result file")->required();
  rb->callback([&] {
    action = [&] { std::cout << rb_out << " " << run_rabi(rb_eps, rb_gam, rb_dt, rb_tf, rb_out) << "\n"; };
  });

  // pipeline
  ModelOverrides pl_model;
  std::string pl_out;
  double pl_conv = 5e-4, pl_tmem = -1.0;
  bool pl_memtime = false;
  auto* pl = app.add_subcommand("pipeline", "run every stage for all four GQME types");
  pl_model.attach(pl);
  pl->add_option("--out", pl_out, "output directory")->required();
  pl->add_option("--t-mem", pl_tmem, "memory time for the GQME runs (default: whole kernel)");
  pl->add_option("--conv-param", pl_conv, "convergence parameter of the memory-time search");
  pl->add_flag("--memtime", pl_memtime, "also run the memory-time search for each type");
  pl->callback([&] {
    action = [&] {
      const ModelConfig cfg = pl_model.load();
      fs::create_directories(pl_out);
      nlohmann::json manifest;
      manifest["config"] = pl_model.config;
      manifest["model"] = cfg.fingerprint();
      auto stage = [&](const std::string& name, const std::string& path, const std::string& input,
                       const std::function<std::string()>& run) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::string fp = run();
        manifest["stages"].push_back(
            {{"stage", name}, {"output", path}, {"fingerprint", fp}, {"input", input}, {"seconds", seconds_since(t0)}});
        std::cerr << name << ": " << path << " (" << format_double(seconds_since(t0)) << " s)\n";
        return fp;
      };
      const std::string u_path = (fs::path(pl_out) / "useries.txt").string();
      const std::string pfi_path = (fs::path(pl_out) / "pfi.txt").string();
      const std::string u_fp = stage("propagate", u_path, pl_model.config, [&] { return run_propagate(cfg, pl_model.jobs, u_path); });
      const std::string pfi_fp = stage("pfi", pfi_path, u_fp, [&] { return run_pfi(u_path, pfi_path); });

      const auto types = all_gqme_types();
      std::vector<std::function<KernelOutputs()>> solves;
      for (const auto& t : types) {
        const std::string kp = (fs::path(pl_out) / ("kernel_" + t.name() + ".txt")).string();
        solves.push_back([=] { return run_kernel(pfi_path, t, VolterraOptions{}, kp, default_inhom_path(kp)); });
      }
      const auto t0 = std::chrono::steady_clock::now();
      const auto kres = run_parallel(std::move(solves), pl_model.jobs);
      for (std::size_t i = 0; i < types.size(); ++i) {
        const std::string kp = (fs::path(pl_out) / ("kernel_" + types[i].name() + ".txt")).string();
        manifest["stages"].push_back({{"stage", "kernel"},
                                      {"type", types[i].name()},
                                      {"output", kp},
                                      {"fingerprint", kres[i].kernel_fp},
                                      {"input", pfi_fp},
                                      {"iterations", kres[i].iterations},
                                      {"residual", kres[i].residual},
                                      {"seconds", seconds_since(t0)}});
        if (!kres[i].inhom_fp.empty())
          manifest["stages"].push_back({{"stage", "inhom"},
                                        {"type", types[i].name()},
                                        {"output", default_inhom_path(kp)},
                                        {"fingerprint", kres[i].inhom_fp},
                                        {"input", pfi_fp}});
      }
      std::cerr << "kernel: 4 types (" << format_double(seconds_since(t0)) << " s)\n";

      const std::string direct_path = (fs::path(pl_out) / "result_direct.txt").string();
      stage("direct", direct_path, u_fp, [&] {
        ResultFile r = result_from_useries(read_useries(u_path).series);
        return write_result(direct_path, r, u_fp);
      });
      for (std::size_t i = 0; i < types.size(); ++i) {
        const std::string kp = (fs::path(pl_out) / ("kernel_" + types[i].name() + ".txt")).string();
        const std::string rp = (fs::path(pl_out) / ("result_" + types[i].name() + ".txt")).string();
        stage("gqme", rp, kres[i].kernel_fp, [&] { return run_gqme(kp, "", pl_tmem, -1.0, rp); });
        if (pl_memtime) {
          const std::string mp = (fs::path(pl_out) / ("memtime_" + types[i].name() + ".txt")).string();
          const auto t1 = std::chrono::steady_clock::now();
          nlohmann::json j = run_memtime(kp, "", pl_conv, -1.0, -1.0, mp);
          j["seconds"] = seconds_since(t1);
          j["input"] = kres[i].kernel_fp;
          j["stage"] = "memtime";
          manifest["stages"].push_back(j);
        }
      }
      auto res = [&](const std::string& n) { return (fs::path(pl_out) / ("result_" + n + ".txt")).string(); };
      const std::vector<std::pair<std::string, std::string>> pairs = {
          {res("full"), direct_path}, {res("pop"), direct_path}, {res("donor") + "+" + res("acceptor"), direct_path}};
      for (const auto& [a, b] : pairs) {
        const double m = run_compare(a, b, -1.0);
        manifest["comparisons"].push_back({{"a", a}, {"b", b}, {"sup_sigma_z", m}});
        std::cout << a << " vs direct: sup |dsigma_z| = " << format_double(m) << "\n";
      }
      write_atomic((fs::path(pl_out) / "manifest.json").string(), manifest.dump(2) + "\n");
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  return guarded(action);
}
