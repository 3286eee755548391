#pragma once

// Flat key = value model configuration files.

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tfdgqme/model.hpp"

namespace tfdgqme {

/// FNV-1a 64-bit digest as 16 lowercase hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ModelConfig {
  SpinBosonParams params;
  Index tt_rank = 20;
  std::string backend = "tt";

  /// Digest of the canonical parameter listing; identifies the model across
  /// pipeline artifacts.
  std::string fingerprint() const {
    std::ostringstream os;
    os << "epsilon=" << format_double(params.epsilon) << ";gamma=" << format_double(params.gamma_c)
       << ";beta=" << format_double(params.beta) << ";xi=" << format_double(params.xi)
       << ";omega_c=" << format_double(params.omega_c) << ";omega_max=" << format_double(params.omega_max)
       << ";n_modes=" << params.n_modes << ";dt=" << format_double(params.dt)
       << ";t_final=" << format_double(params.t_final) << ";n_fock=" << params.n_fock << ";tt_rank=" << tt_rank;
    return fnv1a_hex(os.str());
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {"epsilon", "gamma",  "beta",   "xi",      "omega_c", "omega_max",
                                                "n_modes", "dt",     "t_final", "n_fock", "tt_rank", "backend"};
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

namespace detail {

/// Parses the whole of `s` as a double. Unlike std::stod, underflow to a
/// subnormal value is accepted, so every printed double reads back.
inline bool parse_double(const std::string& s, double& out) {
  if (s.empty() || std::isspace(static_cast<unsigned char>(s[0]))) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  return errno != ERANGE || std::abs(out) < 1.0;
}

inline double parse_number(const std::string& key, const std::string& v) {
  double d = 0.0;
  if (!parse_double(v, d)) throw InputError("config key '" + key + "': not a number: '" + v + "'");
  return d;
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_number(key, v);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw InputError("config key '" + key + "': not an integer: '" + v + "'");
  return static_cast<int>(d);
}

}  // namespace detail

inline ModelConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& k : config_keys()) known = known || (k == key);
    if (!known) throw InputError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (kv.count(key)) throw InputError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  for (const auto& k : config_keys())
    if (!kv.count(k)) throw InputError(origin + ": missing config key '" + k + "'");

  ModelConfig c;
  auto& p = c.params;
  p.epsilon = detail::parse_number("epsilon", kv["epsilon"]);
  p.gamma_c = detail::parse_number("gamma", kv["gamma"]);
  p.beta = detail::parse_number("beta", kv["beta"]);
  p.xi = detail::parse_number("xi", kv["xi"]);
  p.omega_c = detail::parse_number("omega_c", kv["omega_c"]);
  p.omega_max = detail::parse_number("omega_max", kv["omega_max"]);
  p.n_modes = detail::parse_int("n_modes", kv["n_modes"]);
  p.dt = detail::parse_number("dt", kv["dt"]);
  p.t_final = detail::parse_number("t_final", kv["t_final"]);
  p.n_fock = detail::parse_int("n_fock", kv["n_fock"]);
  c.tt_rank = detail::parse_int("tt_rank", kv["tt_rank"]);
  c.backend = kv["backend"];
  if (c.backend != "tt" && c.backend != "dense")
    throw InputError(origin + ": config key 'backend' must be 'tt' or 'dense'");
  if (c.tt_rank < 1) throw InputError(origin + ": config key 'tt_rank' must be at least 1");
  p.validate();
  return c;
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

}  // namespace tfdgqme
