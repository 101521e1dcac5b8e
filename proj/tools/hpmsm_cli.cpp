// Scenario runner: trajectories, phase portraits, observer comparisons and
// epsilon sweeps. Exit codes: 0 success, 1 invalid configuration, 2 divergence.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hpmsm/hpmsm.hpp"
#include "hpmsm/scenario.hpp"

namespace fs = std::filesystem;
using namespace hpmsm;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;

struct Common {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::optional<std::size_t> downsample;
};

Scenario load(const Common& c) {
  std::ifstream in(c.config);
  if (!in) throw ConfigError("cannot open config file '" + c.config + "'");
  Scenario s = load_scenario(in);
  if (c.downsample) {
    if (*c.downsample < 1) throw ConfigError("--downsample: must be >= 1");
    s.run.downsample = *c.downsample;
  }
  return s;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  std::ofstream f(fs::path(c.out) / name);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(c.out) / name).string());
  return f;
}

void echo_config(CsvWriter& w, const Common& c, const Scenario& s) {
  w.comment("config = " + c.config);
  w.comment("seed = " + std::to_string(c.seed));
  for (const auto& [k, v] : s.effective) w.comment(k + " = " + v);
}

std::string fmt_time(double t) {
  if (!std::isfinite(t)) return "not reached";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << t << " s";
  return os.str();
}

// --- run

int run_reduced(const Common& c, const Scenario& s) {
  const SpeedProfile profile = *s.profile;
  const double phi = s.machine.flux;
  const ReducedSystem sys(
      s.gains, [profile, phi](double t) { return std::abs(profile.eval(t).omega) * phi; },
      s.run.variant == RunVariant::reduced_hybrid);
  const Vec4 x0 = ReducedSystem::make_state(UnitCircle::from_angle(s.initial.eta_angle),
                                            s.true_xi() - s.initial.xi_hat, s.initial.rho);
  auto f = open_out(c, "trajectory.csv");
  CsvWriter w(f);
  echo_config(w, c, s);
  std::vector<std::string> names = {"t", "j", "event"};
  for (auto& n : reduced_columns()) names.push_back(n);
  w.header(names);
  if (s.run.sim.horizon == 0.0) return 0;

  SimOptions opt = s.run.sim;
  opt.record_every = s.run.downsample;
  const auto arc = simulate(sys, x0, opt);
  for_each_arc_row(arc, [&](double t, std::size_t j, int kind, const Vec4& x) {
    w.row(reduced_row(sys, t, x), t, j, event_name(kind));
  });
  const auto& last = arc.final_sample();
  auto sf = open_out(c, "summary.txt");
  sf << "variant: " << (sys.hybrid() ? "reduced-hybrid" : "reduced") << '\n'
     << "jumps: " << arc.jump_count() << '\n'
     << "final sigma_s: " << sigma_s(ReducedSystem::eta_of(last.x), last.x[2]) << '\n';
  return 0;
}

int run_cosim(const Common& c, const Scenario& s) {
  const CoSimSystem sys(s.cosim_config(cosim_variant(s.run.variant)));
  auto tf = open_out(c, "trajectory.csv");
  auto jf = open_out(c, "jumps.csv");
  CsvWriter tw(tf);
  CsvWriter jw(jf);
  echo_config(tw, c, s);
  echo_config(jw, c, s);
  std::vector<std::string> names = {"t", "j", "event"};
  for (auto& n : cosim_columns()) names.push_back(n);
  tw.header(names);
  jw.header(cosim_jump_columns());
  const CoSimSystem::State x0 = sys.initial_state(s.initial);
  if (s.run.sim.horizon == 0.0) return 0;

  const FluxSaturation sat = s.saturation;
  const bool with_k = s.run.omega_includes_k_eta;
  std::size_t since = 0;
  double last_written = -1.0;
  CoSimSystem::State pre;
  double last_t = 0.0;
  std::size_t last_j = 0;
  CoSimSystem::State last_x = x0;
  double omega_above = 0.0;
  double xi_above = 0.0;
  const double thr = s.compare.threshold;
  auto on_step = [&](double t, std::size_t j, const CoSimSystem::State& x, int kind) {
    last_t = t;
    last_j = j;
    last_x = x;
    const auto o = sys.observe(t, x, sat, with_k);
    if (std::abs(o.estimates.omega - o.omega) > thr * std::abs(o.omega)) omega_above = t;
    if (std::abs(o.error.xi_err) > thr * std::abs(o.chi.xi)) xi_above = t;
    if (kind == kPreJump) pre = x;
    if (kind == kPostJump) jw.row(cosim_jump_row(sys, t, pre, x, sat), t, j - 1);
    if (kind == kFlowSample && since++ % s.run.downsample != 0) return;
    tw.row(cosim_row(sys, t, x, sat, with_k), t, j, event_name(kind));
    last_written = t;
  };

  SimOptions opt = s.run.sim;
  opt.record_every = std::numeric_limits<std::size_t>::max();
  std::optional<std::string> failure;
  std::size_t jumps = 0;
  try {
    jumps = simulate(sys, x0, opt, on_step).jump_count();
  } catch (const DivergenceError& e) {
    failure = e.what();
  } catch (const ZenoError& e) {
    failure = e.what();
  }
  if (!failure && last_written != last_t) {
    tw.row(cosim_row(sys, last_t, last_x, sat, with_k), last_t, last_j, "flow");
  }

  auto sf = open_out(c, "summary.txt");
  sf << "variant: " << to_string(sys.config().variant) << '\n';
  if (failure) {
    sf << "status: diverged\nerror: " << *failure << '\n';
    std::cerr << "error: " << *failure << '\n';
  } else {
    sf << "status: completed\n";
  }
  const auto o = sys.observe(last_t, last_x, sat, with_k);
  sf << "final t: " << last_t << '\n'
     << "jumps: " << (failure ? last_j : jumps) << '\n'
     << "time to " << thr * 100 << "% omega: " << fmt_time(omega_above >= last_t ? kInf : omega_above)
     << '\n'
     << "time to " << thr * 100 << "% xi: " << fmt_time(xi_above >= last_t ? kInf : xi_above) << '\n'
     << "final omega_hat: " << o.estimates.omega << " (omega " << o.omega << ")\n"
     << "final phi_hat: " << o.estimates.flux << '\n'
     << "final sigma_s: " << o.sigma << '\n';
  return failure ? kExitDivergence : 0;
}

int cmd_run(const Common& c) {
  const Scenario s = load(c);
  return is_reduced(s.run.variant) ? run_reduced(c, s) : run_cosim(c, s);
}

// --- portrait

int cmd_portrait(const Common& c) {
  const Scenario s = load(c);
  const Portrait p = phase_portrait(s.portrait);

  auto mf = open_out(c, "manifold.csv");
  CsvWriter mw(mf);
  echo_config(mw, c, s);
  mw.comment("saddle eigenvalues = " + std::to_string(p.manifold.saddle.lambda_stable) + ", " +
             std::to_string(p.manifold.saddle.lambda_unstable));
  mw.header({"branch", "k", "eta_c", "eta_s", "theta_err", "xi_err"});
  const std::size_t stride = std::max<std::size_t>(1, s.portrait.record_every);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto& br = p.manifold.branches[b];
    for (std::size_t k = 0; k < br.size(); ++k) {
      if (k % stride != 0 && k + 1 != br.size()) continue;
      mw.row({std::cos(br[k].theta), std::sin(br[k].theta), br[k].theta, br[k].xi_err}, b, k);
    }
  }

  auto tf = open_out(c, "portrait.csv");
  CsvWriter tw(tf);
  echo_config(tw, c, s);
  std::vector<std::string> names = {"traj", "theta0", "xi_err0", "on_manifold", "t", "j", "event"};
  for (auto& n : reduced_columns()) names.push_back(n);
  tw.header(names);
  const ReducedSystem sys(s.portrait.gains, s.portrait.chi, s.portrait.hybrid);
  std::size_t converged = 0;
  std::size_t converged_all = 0;
  std::size_t off = 0;
  for (std::size_t k = 0; k < p.trajectories.size(); ++k) {
    const auto& tr = p.trajectories[k];
    if (tr.final_sigma < 1e-2) ++converged_all;
    if (!tr.on_manifold) {
      ++off;
      if (tr.final_sigma < 1e-2) ++converged;
    }
    for_each_arc_row(tr.arc, [&](double t, std::size_t j, int kind, const Vec4& x) {
      tw.row(reduced_row(sys, t, x), k, tr.start.theta, tr.start.xi_err, int(tr.on_manifold), t, j,
             event_name(kind));
    });
  }
  std::cout << "portrait: " << p.trajectories.size() << " trajectories, " << off
            << " off the saddle curve, " << converged << " of those with final sigma_s < 0.01 (" << converged_all << " overall)\n";
  return 0;
}

// --- compare

int cmd_compare(const Common& c) {
  const Scenario s = load(c);
  SimOptions opt = s.run.sim;
  if (opt.horizon <= 0.0) throw ConfigError("run.horizon: compare needs a positive horizon");
  ConvergenceOptions co;
  co.threshold = s.compare.threshold;
  co.saturation = s.saturation;
  co.omega_includes_k_eta = s.run.omega_includes_k_eta;
  const auto rows = compare_observers(s.cosim_config(Variant::hybrid), s.initial, s.compare.variants,
                                      opt, co);
  auto f = open_out(c, "compare.csv");
  CsvWriter w(f);
  echo_config(w, c, s);
  w.header({"variant", "t_omega", "t_xi", "peak_h_err", "jumps", "final_sigma_s"});
  std::ostringstream table;
  table << std::left << std::setw(20) << "variant" << std::setw(16) << "t_5%(omega)"
        << std::setw(16) << "t_5%(xi)" << std::setw(14) << "peak|h_err|" << "jumps\n";
  for (const auto& r : rows) {
    w.row({r.t_omega, r.t_xi, r.peak_h_err, static_cast<double>(r.jumps), r.final_sigma},
          to_string(r.variant));
    table << std::left << std::setw(20) << to_string(r.variant) << std::setw(16)
          << fmt_time(r.t_omega) << std::setw(16) << fmt_time(r.t_xi) << std::setw(14)
          << r.peak_h_err << r.jumps << '\n';
  }
  auto tf = open_out(c, "compare.txt");
  tf << table.str();
  std::cout << table.str();
  return 0;
}

// --- sweep

int cmd_sweep(const Common& c) {
  const Scenario s = load(c);
  const auto& ws = s.sweep;
  SweepSpec spec;
  const double eps0 = s.gains.epsilon(s.machine);
  for (double f : ws.epsilon_fractions) spec.epsilons.push_back(f * eps0);
  const double xi = s.true_xi();
  const Vec2 h_dir = Vec2(1.0, 1.0).normalized();
  for (double a : ws.eta_angles) {
    for (double f : ws.xi_hat_fractions) spec.points.push_back({a, f * xi, ws.h_err * h_dir});
  }
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> frac(0.5, 1.5);
  for (std::size_t k = 0; k < ws.random_points; ++k) {
    const double a = angle(rng);
    const double f = frac(rng);
    const double d = angle(rng);
    spec.points.push_back({a, f * xi, ws.h_err * Vec2(std::cos(d), std::sin(d))});
  }
  const double chi_nom = std::abs(s.omega_nominal) * s.machine.flux;
  spec.delta_fast = ws.delta_fast_fraction * chi_nom / s.machine.inductance;
  spec.delta_slow = ws.delta_slow;
  spec.overshoot = ws.overshoot;
  spec.horizon = ws.horizon;
  spec.max_step = s.run.sim.step;

  const SweepResult res = semiglobal_sweep(s.cosim_config(Variant::hybrid), spec);
  auto f = open_out(c, "sweep.csv");
  CsvWriter w(f);
  echo_config(w, c, s);
  w.header({"epsilon", "runs", "fast_violations", "slow_violations", "worst_fast_excess",
            "worst_final_sigma_s", "pass"});
  for (const auto& r : res.rows) {
    w.row({r.epsilon, static_cast<double>(r.runs), static_cast<double>(r.fast_violations),
           static_cast<double>(r.slow_violations), r.worst_fast_excess, r.worst_final_sigma,
           r.pass() ? 1.0 : 0.0});
    std::cout << "epsilon " << r.epsilon << ": " << r.fast_violations << " fast / "
              << r.slow_violations << " slow violations over " << r.runs << " runs\n";
  }
  if (res.smallest_passing) {
    std::cout << "smallest passing epsilon: " << *res.smallest_passing << '\n';
  } else {
    std::cout << "no epsilon in the list passes\n";
  }
  return 0;
}

int cmd_validate(const Common& c) {
  const Scenario s = load(c);
  for (const auto& [k, v] : s.effective) std::cout << k << " = " << v << '\n';
  std::cout << "ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid sensorless PMSM observer simulations"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "scenario file")->required();
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "seed for sampled initial conditions");
    sub->add_option("--downsample", common.downsample, "keep every k-th flow sample");
  };
  auto* run = app.add_subcommand("run", "simulate one scenario and write trajectory CSVs");
  auto* portrait = app.add_subcommand("portrait", "phase portrait of the reduced dynamics");
  auto* compare = app.add_subcommand("compare", "compare observer variants");
  auto* sweep = app.add_subcommand("sweep", "check two-rate bounds over a grid and epsilons");
  auto* validate = app.add_subcommand("validate", "parse and validate a scenario");
  for (auto* sub : {run, portrait, compare, sweep, validate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(common);
    if (*portrait) return cmd_portrait(common);
    if (*compare) return cmd_compare(common);
    if (*sweep) return cmd_sweep(common);
    if (*validate) return cmd_validate(common);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ZenoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return 0;
}
