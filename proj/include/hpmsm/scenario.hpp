#pragma once

/**
 * \file scenario.hpp
 *
 * Scenario files: INI-style sections of key = value pairs. Every key is
 * optional; the effective value (given or default) of every key is kept in
 * read order so runs can echo their full configuration. Unknown sections
 * or keys are rejected.
 *
 * Speeds in [profile] are fractions of the nominal electrical speed
 * derived from nominal_rpm and the pole pairs. Segments are separated by
 * commas:
 *
 *   segments = constant 0.6, ramp 0.1 0.5, chirp 0.4 0.3 2 10
 *
 * meaning: hold for 0.6 s, ramp to 0.5 nominal over 0.1 s, chirp of
 * amplitude 0.3 nominal from 2 Hz to 10 Hz over 0.4 s. segments = default
 * selects the built-in two-second profile.
 */

#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hpmsm/analysis.hpp"
#include "hpmsm/cosim.hpp"
#include "hpmsm/drive.hpp"
#include "hpmsm/observer.hpp"
#include "hpmsm/plant.hpp"
#include "hpmsm/portrait.hpp"
#include "hpmsm/speed_profile.hpp"

namespace hpmsm {

/// A field-level configuration problem.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class RunVariant { continuous, hybrid, hybrid_identifier, reduced, reduced_hybrid };

inline RunVariant parse_run_variant(const std::string& s) {
  if (s == "reduced") return RunVariant::reduced;
  if (s == "reduced-hybrid" || s == "reduced_hybrid") return RunVariant::reduced_hybrid;
  switch (parse_variant(s)) {
    case Variant::continuous: return RunVariant::continuous;
    case Variant::hybrid: return RunVariant::hybrid;
    case Variant::hybrid_identifier: return RunVariant::hybrid_identifier;
  }
  return RunVariant::hybrid;
}

inline bool is_reduced(RunVariant v) {
  return v == RunVariant::reduced || v == RunVariant::reduced_hybrid;
}

inline Variant cosim_variant(RunVariant v) {
  switch (v) {
    case RunVariant::continuous: return Variant::continuous;
    case RunVariant::hybrid_identifier: return Variant::hybrid_identifier;
    default: return Variant::hybrid;
  }
}

namespace detail {

/// Reads typed values with defaults and remembers what was read.
class ConfigReader {
 public:
  explicit ConfigReader(boost::property_tree::ptree tree) : tree_(std::move(tree)) {}

  double number(const std::string& section, const std::string& key, double def) {
    const std::string path = section + "." + key;
    double v = def;
    if (auto s = raw(section, key)) {
      try {
        std::size_t used = 0;
        v = std::stod(*s, &used);
        if (used != s->size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError(path + ": expected a number, got '" + *s + "'");
      }
      if (!std::isfinite(v)) throw ConfigError(path + ": value must be finite");
    }
    record(path, format(v));
    return v;
  }

  std::size_t count(const std::string& section, const std::string& key, std::size_t def) {
    const double v = number(section, key, static_cast<double>(def));
    if (v < 0.0 || v != std::floor(v)) {
      throw ConfigError(section + "." + key + ": expected a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& section, const std::string& key, bool def) {
    bool v = def;
    if (auto s = raw(section, key)) {
      const std::string l = boost::algorithm::to_lower_copy(*s);
      if (l == "true" || l == "1" || l == "yes") v = true;
      else if (l == "false" || l == "0" || l == "no") v = false;
      else throw ConfigError(section + "." + key + ": expected true or false, got '" + *s + "'");
    }
    record(section + "." + key, v ? "true" : "false");
    return v;
  }

  std::string text(const std::string& section, const std::string& key, const std::string& def) {
    std::string v = raw(section, key).value_or(def);
    record(section + "." + key, v);
    return v;
  }

  std::vector<double> numbers(const std::string& section, const std::string& key,
                              const std::vector<double>& def) {
    std::vector<double> out = def;
    if (auto s = raw(section, key)) {
      out.clear();
      std::vector<std::string> parts;
      boost::algorithm::split(parts, *s, boost::algorithm::is_any_of(", "),
                              boost::algorithm::token_compress_on);
      for (auto& p : parts) {
        if (p.empty()) continue;
        try {
          out.push_back(std::stod(p));
        } catch (const std::exception&) {
          throw ConfigError(section + "." + key + ": '" + p + "' is not a number");
        }
      }
    }
    std::string echo;
    for (std::size_t k = 0; k < out.size(); ++k) echo += (k ? ", " : "") + format(out[k]);
    record(section + "." + key, echo);
    return out;
  }

  /// Keys present in the file but never read.
  void reject_unknown() const {
    for (const auto& [section, sub] : tree_) {
      if (sub.empty() && !sub.data().empty()) {
        throw ConfigError("key '" + section + "' must be inside a section");
      }
      for (const auto& [key, value] : sub) {
        if (!read_.contains(section + "." + key)) {
          throw ConfigError("unknown key '" + section + "." + key + "'");
        }
      }
    }
  }

  const std::vector<std::pair<std::string, std::string>>& effective() const { return effective_; }

 private:
  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    read_.insert(section + "." + key);
    auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    auto v = sec->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return boost::algorithm::trim_copy(*v);
  }

  static std::string format(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
  }

  void record(const std::string& path, const std::string& v) { effective_.emplace_back(path, v); }

  boost::property_tree::ptree tree_;
  std::set<std::string> read_;
  std::vector<std::pair<std::string, std::string>> effective_;
};

inline std::vector<SpeedSegment> parse_segments(const std::string& text, double nominal) {
  std::vector<SpeedSegment> out;
  std::vector<std::string> pieces;
  boost::algorithm::split(pieces, text, boost::algorithm::is_any_of(","));
  for (std::string piece : pieces) {
    boost::algorithm::trim(piece);
    if (piece.empty()) continue;
    std::istringstream is(piece);
    std::string kind;
    is >> kind;
    std::vector<double> a;
    for (double v; is >> v;) a.push_back(v);
    if (!is.eof()) throw ConfigError("profile.segments: bad number in '" + piece + "'");
    auto need = [&](std::size_t n) {
      if (a.size() != n) {
        throw ConfigError("profile.segments: '" + kind + "' takes " + std::to_string(n) +
                          " numbers, got '" + piece + "'");
      }
    };
    if (kind == "constant") {
      need(1);
      out.push_back(SpeedSegment::constant(a[0]));
    } else if (kind == "ramp") {
      need(2);
      out.push_back(SpeedSegment::ramp(a[0], a[1] * nominal));
    } else if (kind == "chirp") {
      need(4);
      out.push_back(SpeedSegment::chirp(a[0], a[1] * std::abs(nominal), a[2], a[3]));
    } else {
      throw ConfigError("profile.segments: unknown piece '" + kind + "'");
    }
  }
  return out;
}

}  // namespace detail

struct RunSettings {
  RunVariant variant = RunVariant::hybrid;
  SimOptions sim;
  std::size_t downsample = 100;
  bool omega_includes_k_eta = false;
};

struct CompareSettings {
  std::vector<Variant> variants{Variant::continuous, Variant::hybrid, Variant::hybrid_identifier};
  double threshold = 0.05;
};

struct SweepSettings {
  std::vector<double> epsilon_fractions{1.0, 0.1};  // of the configured epsilon
  std::vector<double> eta_angles{0.0, 1.5, 3.0};    // rad
  std::vector<double> xi_hat_fractions{1.0, 0.8};   // of the true xi
  double h_err = 1.0;          // |h_err(0)|, V
  std::size_t random_points = 0;
  double delta_fast_fraction = 0.05;  // of chi / L
  double delta_slow = 10.0;
  double overshoot = 3.0;
  double horizon = 0.3;
};

struct Scenario {
  MachineParams machine;
  double nominal_rpm = 6000.0;
  double omega_nominal = 0.0;
  std::optional<SpeedProfile> profile;
  ObserverGains gains;
  std::size_t window = 2;
  double degeneracy_floor = 1e-12;
  FluxSaturation saturation{0.0, 0.0};
  CurrentLoopGains loop{0.0, 0.0, 0.0};
  Vec2 current_ref_dq = Vec2::Zero();
  InitialConditions initial;
  RunSettings run;
  PortraitSpec portrait;
  CompareSettings compare;
  SweepSettings sweep;
  std::vector<std::pair<std::string, std::string>> effective;

  CoSimConfig cosim_config(Variant v) const {
    CoSimConfig c;
    c.machine = machine;
    c.gains = gains;
    c.profile = *profile;
    c.loop = loop;
    c.current_ref_dq = current_ref_dq;
    c.variant = v;
    c.window = window;
    c.degeneracy_floor = degeneracy_floor;
    return c;
  }

  double true_xi() const { return sign_of(omega_nominal) / machine.flux; }
};

/**
 * Parses and validates a scenario. Throws ConfigError (or ProfileError for
 * an inadmissible speed profile) with the offending field in the message.
 */
inline Scenario load_scenario(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  detail::ConfigReader r(tree);
  Scenario s;

  auto positive = [](double v, const std::string& path) {
    if (!(v > 0.0)) throw ConfigError(path + ": must be positive");
    return v;
  };

  s.machine.resistance = positive(r.number("machine", "R", s.machine.resistance), "machine.R");
  s.machine.inductance = positive(r.number("machine", "L", s.machine.inductance), "machine.L");
  s.machine.flux = positive(r.number("machine", "phi", s.machine.flux), "machine.phi");
  s.machine.pole_pairs =
      positive(r.number("machine", "pole_pairs", s.machine.pole_pairs), "machine.pole_pairs");

  s.nominal_rpm = r.number("profile", "nominal_rpm", s.nominal_rpm);
  if (s.nominal_rpm == 0.0) throw ConfigError("profile.nominal_rpm: must be non-zero");
  s.omega_nominal = electrical_speed(s.nominal_rpm, s.machine.pole_pairs);
  const double wn = std::abs(s.omega_nominal);
  const double initial = r.number("profile", "initial", 1.0);
  const std::string segs = r.text("profile", "segments", "constant 1");
  const double w_min = r.number("profile", "omega_min", 0.1);
  const double w_max = r.number("profile", "omega_max", 1.5);
  const double accel = r.number("profile", "accel_max", 2.0e5);
  const SpeedBounds bounds{w_min * wn, w_max * wn, accel};
  if (segs == "default") {
    if (initial != 1.0) throw ConfigError("profile.initial: the default profile starts at 1");
    SpeedProfile p = default_speed_profile(s.omega_nominal);
    s.profile.emplace(p.initial(), p.segments(), bounds);
  } else {
    s.profile.emplace(initial * s.omega_nominal, detail::parse_segments(segs, s.omega_nominal),
                      bounds);
  }

  s.gains.kp = positive(r.number("observer", "kp", s.gains.kp), "observer.kp");
  s.gains.ki = positive(r.number("observer", "ki", s.gains.ki), "observer.ki");
  s.gains.k_eta = positive(r.number("observer", "k_eta", s.gains.k_eta), "observer.k_eta");
  s.gains.gamma = positive(r.number("observer", "gamma", s.gains.gamma), "observer.gamma");
  s.gains.clock_rate =
      positive(r.number("observer", "clock_rate", s.gains.clock_rate), "observer.clock_rate");
  s.window = r.count("observer", "window", s.window);
  if (s.window < 1) throw ConfigError("observer.window: must be >= 1");
  s.degeneracy_floor = r.number("observer", "degeneracy_floor", s.degeneracy_floor);
  const double lo = r.number("observer", "flux_lo", 0.5);
  const double hi = r.number("observer", "flux_hi", 2.0);
  if (!(lo > 0.0) || !(hi > lo)) {
    throw ConfigError("observer.flux_lo/flux_hi: need 0 < flux_lo < flux_hi");
  }
  s.saturation = {lo * s.machine.flux, hi * s.machine.flux};

  const double bw = r.number("drive", "bandwidth_hz", 1000.0);
  const double v_limit = r.number("drive", "v_limit", 24.0 / std::sqrt(3.0));
  positive(v_limit, "drive.v_limit");
  s.loop = CurrentLoopGains::from_bandwidth(2.0 * std::numbers::pi * positive(bw, "drive.bandwidth_hz"),
                                            s.machine, v_limit);
  s.current_ref_dq = Vec2(r.number("drive", "id_ref", 0.0), r.number("drive", "iq_ref", 5.0));

  auto& ic = s.initial;
  ic.rotor_angle = r.number("initial", "rotor_angle", 0.0);
  ic.current = Vec2(r.number("initial", "i_s1", 0.0), r.number("initial", "i_s2", 0.0));
  ic.eta_angle = r.number("initial", "eta_angle", 0.0);
  ic.xi_hat = r.number("initial", "xi_hat_fraction", 0.0) * s.true_xi();
  ic.exact_current_estimate = r.flag("initial", "exact_current_estimate", true);
  ic.exact_back_emf = r.flag("initial", "exact_back_emf", false);
  ic.rho = r.number("initial", "rho", 0.0);
  if (ic.rho < 0.0 || ic.rho > 1.0) throw ConfigError("initial.rho: must lie in [0, 1]");

  s.run.variant = [&] {
    const std::string v = r.text("run", "variant", "hybrid");
    try {
      return parse_run_variant(v);
    } catch (const std::invalid_argument&) {
      throw ConfigError("run.variant: unknown variant '" + v + "'");
    }
  }();
  s.run.sim.horizon = r.number("run", "horizon", 2.0);
  if (s.run.sim.horizon < 0.0) throw ConfigError("run.horizon: must be >= 0");
  s.run.sim.step = positive(r.number("run", "step", 1e-6), "run.step");
  s.run.sim.max_jumps = r.count("run", "max_jumps", 1'000'000);
  s.run.downsample = r.count("run", "downsample", 100);
  if (s.run.downsample < 1) throw ConfigError("run.downsample: must be >= 1");
  s.run.omega_includes_k_eta = r.flag("run", "omega_includes_k_eta", false);

  auto& p = s.portrait;
  p.chi = positive(r.number("portrait", "chi", 1.0), "portrait.chi");
  p.gains.k_eta = positive(r.number("portrait", "k_eta", 1.5), "portrait.k_eta");
  p.gains.gamma = positive(r.number("portrait", "gamma", 1.0), "portrait.gamma");
  p.gains.clock_rate = positive(r.number("portrait", "clock_rate", 1.0), "portrait.clock_rate");
  p.hybrid = r.flag("portrait", "hybrid", false);
  p.n_theta = r.count("portrait", "n_theta", p.n_theta);
  p.n_xi = r.count("portrait", "n_xi", p.n_xi);
  if (p.n_theta < 1 || p.n_xi < 1) throw ConfigError("portrait.n_theta/n_xi: must be >= 1");
  p.xi_max = r.number("portrait", "xi_max", p.xi_max);
  p.horizon = positive(r.number("portrait", "horizon", p.horizon), "portrait.horizon");
  p.step = positive(r.number("portrait", "step", p.step), "portrait.step");
  p.record_every = r.count("portrait", "record_every", p.record_every);
  p.manifold.perturbation =
      positive(r.number("portrait", "perturbation", p.manifold.perturbation), "portrait.perturbation");
  p.manifold.xi_limit = r.number("portrait", "trace_xi_limit", 1.5 * p.xi_max);
  p.manifold.max_time = r.number("portrait", "trace_time", p.manifold.max_time);
  p.manifold.step = p.step;
  p.manifold_tolerance = r.number("portrait", "manifold_tolerance", p.manifold_tolerance);

  {
    const std::string list = r.text("compare", "variants", "continuous, hybrid, hybrid+identifier");
    std::vector<std::string> names;
    boost::algorithm::split(names, list, boost::algorithm::is_any_of(","));
    s.compare.variants.clear();
    for (auto n : names) {
      boost::algorithm::trim(n);
      if (n.empty()) continue;
      try {
        s.compare.variants.push_back(parse_variant(n));
      } catch (const std::invalid_argument&) {
        throw ConfigError("compare.variants: unknown variant '" + n + "'");
      }
    }
    if (s.compare.variants.empty()) throw ConfigError("compare.variants: empty list");
    s.compare.threshold = positive(r.number("compare", "threshold", 0.05), "compare.threshold");
  }

  auto& w = s.sweep;
  w.epsilon_fractions = r.numbers("sweep", "epsilon_fractions", w.epsilon_fractions);
  w.eta_angles = r.numbers("sweep", "eta_angles", w.eta_angles);
  w.xi_hat_fractions = r.numbers("sweep", "xi_hat_fractions", w.xi_hat_fractions);
  w.h_err = r.number("sweep", "h_err", w.h_err);
  w.random_points = r.count("sweep", "random_points", w.random_points);
  w.delta_fast_fraction = r.number("sweep", "delta_fast_fraction", w.delta_fast_fraction);
  w.delta_slow = r.number("sweep", "delta_slow", w.delta_slow);
  w.overshoot = r.number("sweep", "overshoot", w.overshoot);
  w.horizon = positive(r.number("sweep", "horizon", w.horizon), "sweep.horizon");
  for (double f : w.epsilon_fractions) {
    if (!(f > 0.0)) throw ConfigError("sweep.epsilon_fractions: entries must be positive");
  }

  r.reject_unknown();
  try {
    s.machine.validate();
    s.gains.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  s.effective = r.effective();
  return s;
}

inline Scenario load_scenario_string(const std::string& text) {
  std::istringstream is(text);
  return load_scenario(is);
}

}  // namespace hpmsm
