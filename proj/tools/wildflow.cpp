// wildflow: parameter-ledger certification and surrogate field pipeline for
// the convex-integration construction on the torus.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wildflow/pipeline.hpp"
#include "wildflow/snapshot.hpp"

using namespace wildflow;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ExponentSet exponents_from(const Config& cfg) {
  ExponentSet e;
  e.beta = cfg.get_double("beta", 0.2);
  e.gamma = cfg.get_double("gamma", 0.3);
  e.b = cfg.get_double("b", 1.01);
  e.sigma = cfg.get_double("sigma", 5.91e-4);
  e.alpha = cfg.get_double("alpha", 1e-4);
  e.d = static_cast<int>(cfg.get_long("d", 3));
  e.T = cfg.get_double("T", 1.0);
  e.nu = cfg.get_double("nu", 1.0);
  if (cfg.has("log_a")) e.set_log_a(cfg.get_double("log_a"));
  else e.set_a(cfg.get_double("a", 16.0));
  return e;
}

void write_manifest(const fs::path& out, const std::string& mode, const Config& cfg,
                    const json& summary) {
  std::ofstream os(out / "manifest.jsonl");
  json m;
  m["mode"] = mode;
  json c;
  for (const auto& [k, v] : cfg.entries()) c[k] = v;
  m["config"] = c;
  os << m.dump() << "\n";
  os << summary.dump() << "\n";
}

int cmd_ledger(const Config& cfg, const fs::path& out, int qmax) {
  ExponentSet e = exponents_from(cfg);
  auto adm = validate_exponents(e);
  {
    std::ofstream os(out / "admissibility.csv");
    os << "constraint,margin,pass\n";
    for (const auto& c : adm.checks)
      os << c.id << "," << fmt(c.margin) << "," << (c.pass ? 1 : 0) << "\n";
  }
  if (!adm.pass) {
    std::fprintf(stderr, "ledger: inadmissible exponent set\n");
    return 2;
  }
  double gate = cfg.get_double("gate", std::log(10.0));
  Schedule s = compute_schedule(e, qmax + 2);
  LedgerReport rep = check_ledger(s, gate);
  {
    std::ofstream os(out / "margins.csv");
    os << "q,inequality,log_margin\n";
    for (const auto& r : rep.rows)
      os << r.q << "," << r.ineq << "," << fmt(r.log_margin) << "\n";
  }
  {
    std::ofstream os(out / "schedule.csv");
    os << "q,log_lambda,log_delta,log_eps,log_tau,log_ell,c_q,ceil_slack\n";
    for (const auto& r : s.rows)
      os << r.q << "," << fmt(r.log_lambda) << "," << fmt(r.log_delta) << ","
         << fmt(r.log_eps) << "," << fmt(r.log_tau) << "," << fmt(r.log_ell) << ","
         << fmt(r.c_q) << "," << fmt(r.ceil_slack) << "\n";
  }
  double log_a0 = empirical_log_a0(e, qmax, gate);
  auto db = dimension_bound(e);
  auto w = beta1_window(e);
  json summary;
  summary["certified"] = rep.certified;
  summary["monotone"] = rep.monotone;
  summary["min_margin"] = rep.min_margin;
  summary["min_margin_at"] = rep.min_margin_ineq;
  summary["gate"] = gate;
  summary["high_n"] = rep.n_high;
  summary["log_a0_empirical"] = log_a0;
  summary["dimension"] = db.value;
  summary["dimension_target"] = db.target;
  summary["beta1_window"] = {w.lo, w.hi};
  write_manifest(out, "ledger", cfg, summary);
  std::printf("ledger: certified=%d min_margin=%.6g at %s; empirical ln a0=%.6g\n",
              rep.certified ? 1 : 0, rep.min_margin, rep.min_margin_ineq.c_str(),
              log_a0);
  return rep.certified ? 0 : 1;
}

int cmd_dimension(const Config& cfg, const fs::path& out, int qmax) {
  ExponentSet e = exponents_from(cfg);
  Schedule s = compute_schedule(e, qmax + 2);
  auto db = dimension_bound(e);
  IntervalBook b = initial_bad_set(s);
  b.log_mode = true;
  std::vector<IntervalBook> books;
  for (int q = 0; q <= qmax; ++q) {
    b = evolve_bad_set(b, s, q);
    books.push_back(b);
  }
  auto tr = box_dimension_estimate(books, s);
  {
    std::ofstream os(out / "dimension_trajectory.csv");
    os << "q,box_estimate\n";
    for (std::size_t i = 0; i < tr.q.size(); ++i)
      os << tr.q[i] << "," << fmt(tr.estimate[i]) << "\n";
  }
  double final_est = tr.estimate.back();
  bool ok = final_est > db.value && db.value > db.target;
  json summary;
  summary["dimension"] = db.value;
  summary["dimension_target"] = db.target;
  summary["box_estimate_final"] = final_est;
  summary["converging_from_above"] = ok;
  write_manifest(out, "dimension", cfg, summary);
  std::printf("dimension: D=%.6g target=%.6g box@q=%d: %.6g\n", db.value, db.target,
              tr.q.back(), final_est);
  return ok ? 0 : 1;
}

int run_rows(const std::vector<ResidualRow>& rows, const fs::path& out,
             const std::string& mode, const Config& cfg) {
  std::ofstream os(out / (mode + "_residuals.csv"));
  os << "identity,residual,tolerance,pass\n";
  bool all = true;
  for (const auto& r : rows) {
    os << r.id << "," << fmt(r.residual) << "," << fmt(r.tolerance) << ","
       << (r.pass ? 1 : 0) << "\n";
    std::printf("%-36s %12.4g  (tol %g) %s\n", r.id.c_str(), r.residual, r.tolerance,
                r.pass ? "ok" : "FAIL");
    all = all && r.pass;
  }
  json summary;
  summary["all_pass"] = all;
  write_manifest(out, mode, cfg, summary);
  return all ? 0 : 1;
}

int cmd_surrogate(const Config& cfg, const fs::path& out) {
  SurrogateRun run = make_surrogate_run(cfg);
  IterationConfig ic;
  ic.sweep.nu = run.e.nu;
  ic.sweep.gamma = run.e.gamma;
  ic.sweep.strict_resolution = cfg.get_long("strict_resolution", 1) != 0;
  ic.sweep.piece_dt = cfg.get_double("piece_dt", 2e-3);
  ic.sweep.fd_oracle = cfg.get_long("fd_oracle", 1) != 0;
  ic.lambda_next = cfg.get_long("lambda_next", 2);
  ic.delta_next = cfg.get_double("delta_next", 0.0);
  ic.samples_per_window = static_cast<int>(cfg.get_long("samples_per_window", 5));
  ic.ell = run.ell;

  IterationReport rep = iteration_step(*run.init, run.sched, run.book0, 0,
                                       tabulate_fourier(build_direction_set(3),
                                                        static_cast<int>(cfg.get_long("K", 4)),
                                                        static_cast<int>(cfg.get_long("m_r", 8))),
                                       run.grid, ic);
  {
    std::ofstream os(out / "stage_report.csv");
    os << "window,t,rho,w_sup,wc_over_wo,div_w_rel,o3,k0_cancel,"
          "r_osc,r_trans,r_nash,r_dis,r_total,fnsr_residual\n";
    for (const auto& wr : rep.windows)
      for (const auto& ss : wr.samples)
        os << wr.window << "," << fmt(ss.t) << "," << fmt(ss.rho) << ","
           << fmt(ss.w_sup) << "," << fmt(ss.wc_over_wo) << "," << fmt(ss.div_w_rel)
           << "," << fmt(ss.o3_residual) << "," << fmt(ss.k0_cancel) << ","
           << fmt(ss.r_osc) << "," << fmt(ss.r_trans) << "," << fmt(ss.r_nash) << ","
           << fmt(ss.r_dis) << "," << fmt(ss.r_total) << "," << fmt(ss.fnsr_residual)
           << "\n";
  }
  {
    std::ofstream os(out / "flow_report.csv");
    os << "window,inverse_consistency,jacobian_dev,grad_phi_dev,amplitude_decay\n";
    for (const auto& wr : rep.windows)
      os << wr.window << "," << fmt(wr.flow.inverse_consistency) << ","
         << fmt(wr.flow.jacobian_dev) << "," << fmt(wr.flow.grad_phi_dev) << ","
         << fmt(wr.amplitude_decay_c) << "\n";
  }
  // field snapshots at the first window's central sample
  FnsrPair p0 = run.init->pair_at(0.5 * (run.init->ramp.lo + run.init->ramp.hi));
  write_snapshot(out / "v0.field", p0.v);
  write_snapshot(out / "R0.field", p0.R);

  json summary;
  summary["delta_next"] = rep.delta_next;
  summary["r_cur_sup"] = rep.r_cur_sup;
  summary["r_next_sup"] = rep.r_next_sup;
  summary["stress_ratio"] = rep.stress_ratio;
  summary["deviation_sup"] = rep.deviation_sup;
  summary["measured_m"] = rep.measured_m;
  summary["good_set_deviation"] = rep.good_set_deviation;
  summary["books_nested"] = rep.books_nested;
  summary["measure_ratio"] = rep.measure_ratio;
  write_manifest(out, "surrogate", cfg, summary);
  std::printf("surrogate: ||R1||=%.6g ||R0||=%.6g ratio=%.4g good_dev=%.3g\n",
              rep.r_next_sup, rep.r_cur_sup, rep.stress_ratio,
              rep.good_set_deviation);
  bool ok = rep.stress_ratio < 1.0 && rep.good_set_deviation == 0.0 &&
            rep.books_nested && rep.measure_ratio <= 1.0 + 1e-12;
  return ok ? 0 : 1;
}

int cmd_report(const Config& cfg, const fs::path& out) {
  ExponentSet e = exponents_from(cfg);
  // admissibility region data on the (1/p, beta~) plane:
  // beta~ <= 1/(2p) + (1 - 3/(2p)) beta
  {
    std::ofstream os(out / "regularity_plane.csv");
    os << "inv_p,beta,beta_tilde_max\n";
    for (int ip = 1; ip <= 40; ++ip) {
      double inv_p = ip / 40.0;
      for (int ib = 0; ib <= 32; ++ib) {
        double beta = ib / 99.0;  // up to ~1/3
        if (beta >= 1.0 / 3.0) continue;
        if (beta + 2.0 * e.gamma >= 1.0) continue;
        double bt = 0.5 * inv_p + (1.0 - 1.5 * inv_p) * beta;
        os << fmt(inv_p) << "," << fmt(beta) << "," << fmt(bt) << "\n";
      }
    }
  }
  {
    std::ofstream os(out / "dimension_vs_beta.csv");
    os << "beta,dimension_target\n";
    for (int ib = 0; ib <= 100; ++ib) {
      double beta = ib * (1.0 / 3.0 - 1e-9) / 100.0;
      os << fmt(beta) << "," << fmt((1.0 + beta) / (2.0 * (1.0 - beta))) << "\n";
    }
  }
  json summary;
  summary["p_three_halves_beta_cap"] =
      std::min(1.0 - 2.0 * e.gamma, 1.0 / 3.0);
  write_manifest(out, "report", cfg, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wildflow: ledger certification and surrogate field pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  long qmax = 40, grid = 64, seed = 1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--qmax", qmax, "largest level to certify");
    sub->add_option("--grid", grid, "grid points per axis");
    sub->add_option("--seed", seed, "random seed");
  };

  CLI::App* ledger = app.add_subcommand("ledger", "certify the parameter ledger");
  CLI::App* dimension = app.add_subcommand("dimension", "singular-set dimension data");
  CLI::App* operators = app.add_subcommand("operators", "operator identity residuals");
  CLI::App* mikado = app.add_subcommand("mikado-check", "pipe-flow property residuals");
  CLI::App* surrogate = app.add_subcommand("surrogate", "one iteration at field scale");
  CLI::App* report = app.add_subcommand("report", "plot-data bundle");
  for (auto* sub : {ledger, dimension, operators, mikado, surrogate, report})
    add_common(sub, true);

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg;
    if (!config_path.empty()) cfg = Config::parse_file(config_path);
    if (!cfg.has("grid")) cfg.set("grid", std::to_string(grid));
    if (!cfg.has("seed")) cfg.set("seed", std::to_string(seed));
    fs::path out(out_dir);
    fs::create_directories(out);

    if (ledger->parsed()) return cmd_ledger(cfg, out, static_cast<int>(qmax));
    if (dimension->parsed())
      return cmd_dimension(cfg, out, static_cast<int>(cfg.get_long("qmax", qmax)));
    if (operators->parsed())
      return run_rows(operators_suite(static_cast<int>(cfg.get_long("grid", grid)), 3,
                                      static_cast<int>(cfg.get_long("fields", 50)),
                                      static_cast<unsigned long>(cfg.get_long("seed", seed))),
                      out, "operators", cfg);
    if (mikado->parsed())
      return run_rows(mikado_suite(static_cast<int>(cfg.get_long("matrices", 20)),
                                   static_cast<unsigned long>(cfg.get_long("seed", seed))),
                      out, "mikado", cfg);
    if (surrogate->parsed()) return cmd_surrogate(cfg, out);
    if (report->parsed()) return cmd_report(cfg, out);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }
  return 0;
}
