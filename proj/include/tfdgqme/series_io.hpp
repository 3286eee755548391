#pragma once

// Text interchange files between pipeline stages. Each file starts with
// "# key: value" header lines (the first is the format tag) followed by one
// whitespace-separated row of numbers per grid point, first column t.
// Numbers are written with 17 significant digits so a read-write cycle is
// exact. The artifact fingerprint is a digest of everything except the
// fingerprint line itself.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tfdgqme/config.hpp"
#include "tfdgqme/gqme.hpp"
#include "tfdgqme/pfi.hpp"
#include "tfdgqme/volterra.hpp"

namespace tfdgqme {

struct SeriesFile {
  std::string format;
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::vector<double>> rows;

  void set(const std::string& key, const std::string& value) {
    for (auto& kv : header)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    header.emplace_back(key, value);
  }
  bool has(const std::string& key) const {
    for (const auto& kv : header)
      if (kv.first == key) return true;
    return false;
  }
  const std::string& get(const std::string& key) const {
    for (const auto& kv : header)
      if (kv.first == key) return kv.second;
    throw InputError("series file lacks header field '" + key + "'");
  }
  double get_double(const std::string& key) const {
    double d = 0.0;
    if (!detail::parse_double(get(key), d)) throw InputError("series header field '" + key + "' is not a number");
    return d;
  }
  long get_long(const std::string& key) const { return std::stol(get(key)); }

  /// Canonical text without the fingerprint line.
  std::string body() const {
    std::string out = "# format: " + format + "\n";
    for (const auto& kv : header)
      if (kv.first != "fingerprint") out += "# " + kv.first + ": " + kv.second + "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out += ' ';
        out += format_double(r[i]);
      }
      out += '\n';
    }
    return out;
  }

  std::string fingerprint() const { return fnv1a_hex(body()); }
};

/// Write through a temporary file and rename, so readers never see a partial file.
inline void write_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw InputError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

/// Writes the file and returns its fingerprint.
inline std::string write_series_file(const std::string& path, const SeriesFile& f) {
  const std::string body = f.body();
  const std::string fp = fnv1a_hex(body);
  const auto nl = body.find('\n');
  write_atomic(path, body.substr(0, nl + 1) + "# fingerprint: " + fp + "\n" + body.substr(nl + 1));
  return fp;
}

inline SeriesFile read_series_file(const std::string& path, const std::string& expected_format = "") {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  SeriesFile f;
  std::string line;
  std::size_t width = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(line.substr(1, colon - 1));
      const std::string value = trim(line.substr(colon + 1));
      if (key == "format") {
        f.format = value;
      } else {
        f.header.emplace_back(key, value);
      }
      continue;
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      double d = 0.0;
      if (!detail::parse_double(tok, d))
        throw InputError(path + ":" + std::to_string(lineno) + ": malformed number '" + tok + "'");
      row.push_back(d);
    }
    if (width == 0) width = row.size();
    if (row.size() != width) throw InputError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    f.rows.push_back(std::move(row));
  }
  if (f.format.empty()) throw InputError(path + ": missing format header");
  if (!expected_format.empty() && f.format != expected_format)
    throw InputError(path + ": expected format '" + expected_format + "', found '" + f.format + "'");
  if (f.has("fingerprint") && f.get("fingerprint") != f.fingerprint())
    throw InputError(path + ": content does not match its recorded fingerprint");
  return f;
}

namespace io {

inline constexpr const char* kUSeries = "tfdgqme-useries 1";
inline constexpr const char* kPfi = "tfdgqme-pfi 1";
inline constexpr const char* kKernel = "tfdgqme-kernel 1";
inline constexpr const char* kInhom = "tfdgqme-inhom 1";
inline constexpr const char* kResult = "tfdgqme-result 1";

inline void push_matrix(std::vector<double>& row, const Eigen::MatrixXcd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c).real());
      row.push_back(m(r, c).imag());
    }
}

inline Eigen::MatrixXcd take_matrix(const std::vector<double>& row, std::size_t& pos, Index rows, Index cols) {
  if (pos + 2 * rows * cols > row.size()) throw InputError("series row too short");
  Eigen::MatrixXcd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = cplx(row[pos], row[pos + 1]);
      pos += 2;
    }
  return m;
}

inline std::string matrix_text(const Eigen::MatrixXcd& m) {
  std::vector<double> v;
  push_matrix(v, m);
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
  return s;
}

inline Eigen::MatrixXcd matrix_from_text(const std::string& s, Index rows, Index cols) {
  std::istringstream is(s);
  std::vector<double> v;
  double x;
  while (is >> x) v.push_back(x);
  std::size_t pos = 0;
  return take_matrix(v, pos, rows, cols);
}

inline void check_rows(const SeriesFile& f, std::size_t width) {
  if (f.rows.empty()) throw InputError("series file has no data rows");
  if (f.rows.front().size() != width)
    throw InputError("series file has " + std::to_string(f.rows.front().size()) + " columns, expected " +
                     std::to_string(width));
}

}  // namespace io

/// U series plus the projected Liouvillian and model identity it came from.
struct USeriesFile {
  PropagatorSeries series;
  Eigen::Matrix4cd liouvillian = Eigen::Matrix4cd::Zero();
  std::string fingerprint;  // artifact fingerprint
};

inline std::string write_useries(const std::string& path, const PropagatorSeries& u, const Eigen::Matrix4cd& lv) {
  SeriesFile f;
  f.format = io::kUSeries;
  f.set("model", u.fingerprint);
  f.set("backend", u.backend);
  f.set("dt", format_double(u.dt));
  f.set("n_steps", std::to_string(u.size()));
  f.set("rank", std::to_string(u.rank));
  f.set("n_fock", std::to_string(u.n_fock));
  f.set("liouvillian", io::matrix_text(lv));
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::vector<double> row{static_cast<double>(i) * u.dt};
    io::push_matrix(row, u.entries[i]);
    f.rows.push_back(std::move(row));
  }
  return write_series_file(path, f);
}

inline USeriesFile read_useries(const std::string& path) {
  const SeriesFile f = read_series_file(path, io::kUSeries);
  io::check_rows(f, 33);
  USeriesFile out;
  out.fingerprint = f.has("fingerprint") ? f.get("fingerprint") : f.fingerprint();
  auto& u = out.series;
  u.dt = f.get_double("dt");
  u.fingerprint = f.get("model");
  u.backend = f.get("backend");
  u.rank = f.get_long("rank");
  u.n_fock = static_cast<int>(f.get_long("n_fock"));
  out.liouvillian = io::matrix_from_text(f.get("liouvillian"), 4, 4);
  for (const auto& r : f.rows) {
    std::size_t pos = 1;
    u.entries.push_back(io::take_matrix(r, pos, 4, 4));
  }
  if (static_cast<long>(u.size()) != f.get_long("n_steps")) throw InputError(path + ": row count does not match n_steps");
  return out;
}

struct PfiFile {
  PfiSeries pfi;
  Eigen::Matrix4cd liouvillian = Eigen::Matrix4cd::Zero();
  std::string fingerprint;
};

inline std::string write_pfi(const std::string& path, const PfiSeries& p, const Eigen::Matrix4cd& lv,
                             const std::string& input_fp) {
  SeriesFile f;
  f.format = io::kPfi;
  f.set("model", p.fingerprint);
  f.set("input", input_fp);
  f.set("dt", format_double(p.dt));
  f.set("gamma", liouville_label(p.gamma));
  f.set("liouvillian", io::matrix_text(lv));
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> row{static_cast<double>(i) * p.dt};
    io::push_matrix(row, p.F[i]);
    io::push_matrix(row, p.Fdot[i]);
    io::push_matrix(row, p.Z[i]);
    f.rows.push_back(std::move(row));
  }
  return write_series_file(path, f);
}

inline int parse_liouville_label(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == liouville_label(i)) return i;
  throw InputError("unknown Liouville label '" + s + "'");
}

inline PfiFile read_pfi(const std::string& path) {
  const SeriesFile f = read_series_file(path, io::kPfi);
  io::check_rows(f, 1 + 32 + 32 + 8);
  PfiFile out;
  out.fingerprint = f.has("fingerprint") ? f.get("fingerprint") : f.fingerprint();
  auto& p = out.pfi;
  p.dt = f.get_double("dt");
  p.fingerprint = f.get("model");
  p.gamma = parse_liouville_label(f.get("gamma"));
  out.liouvillian = io::matrix_from_text(f.get("liouvillian"), 4, 4);
  for (const auto& r : f.rows) {
    std::size_t pos = 1;
    p.F.push_back(io::take_matrix(r, pos, 4, 4));
    p.Fdot.push_back(io::take_matrix(r, pos, 4, 4));
    p.Z.push_back(io::take_matrix(r, pos, 4, 1));
  }
  return out;
}

struct KernelFile {
  KernelSeries kernel;
  Eigen::Matrix4cd liouvillian = Eigen::Matrix4cd::Zero();
  std::string fingerprint;
};

inline std::string write_kernel(const std::string& path, const KernelSeries& k, const Eigen::Matrix4cd& lv,
                                const std::string& input_fp) {
  SeriesFile f;
  f.format = io::kKernel;
  f.set("model", k.fingerprint);
  f.set("input", input_fp);
  f.set("gqme_type", k.type.name());
  f.set("dt", format_double(k.dt));
  f.set("iterations_used", std::to_string(k.iterations_used));
  f.set("residual", format_double(k.residual));
  f.set("liouvillian", io::matrix_text(lv));
  for (std::size_t i = 0; i < k.size(); ++i) {
    std::vector<double> row{static_cast<double>(i) * k.dt};
    io::push_matrix(row, k.entries[i]);
    f.rows.push_back(std::move(row));
  }
  return write_series_file(path, f);
}

inline KernelFile read_kernel(const std::string& path) {
  const SeriesFile f = read_series_file(path, io::kKernel);
  KernelFile out;
  out.fingerprint = f.has("fingerprint") ? f.get("fingerprint") : f.fingerprint();
  auto& k = out.kernel;
  k.type = GqmeType::parse(f.get("gqme_type"));
  const Index n = k.type.size();
  io::check_rows(f, 1 + 2 * n * n);
  k.dt = f.get_double("dt");
  k.fingerprint = f.get("model");
  k.iterations_used = static_cast<int>(f.get_long("iterations_used"));
  k.residual = f.get_double("residual");
  out.liouvillian = io::matrix_from_text(f.get("liouvillian"), 4, 4);
  for (const auto& r : f.rows) {
    std::size_t pos = 1;
    k.entries.push_back(io::take_matrix(r, pos, n, n));
  }
  return out;
}

inline std::string write_inhom(const std::string& path, const InhomSeries& in, const std::string& input_fp) {
  SeriesFile f;
  f.format = io::kInhom;
  f.set("model", in.fingerprint);
  f.set("input", input_fp);
  f.set("gqme_type", in.type.name());
  f.set("dt", format_double(in.dt));
  f.set("iterations_used", std::to_string(in.iterations_used));
  f.set("residual", format_double(in.residual));
  for (std::size_t i = 0; i < in.size(); ++i) {
    std::vector<double> row{static_cast<double>(i) * in.dt};
    io::push_matrix(row, in.entries[i]);
    f.rows.push_back(std::move(row));
  }
  return write_series_file(path, f);
}

inline InhomSeries read_inhom(const std::string& path) {
  const SeriesFile f = read_series_file(path, io::kInhom);
  InhomSeries in;
  in.type = GqmeType::parse(f.get("gqme_type"));
  const Index n = in.type.size();
  io::check_rows(f, 1 + 2 * n);
  in.dt = f.get_double("dt");
  in.fingerprint = f.get("model");
  in.iterations_used = static_cast<int>(f.get_long("iterations_used"));
  in.residual = f.get_double("residual");
  for (const auto& r : f.rows) {
    std::size_t pos = 1;
    in.entries.push_back(io::take_matrix(r, pos, n, 1));
  }
  return in;
}

/// Generic result series: sigma elements for a labelled set plus sigma_z.
struct ResultFile {
  std::string kind;  // gqme type name, "direct" or "rabi"
  std::string model;
  double dt = 0.0;
  double memory_time = 0.0;
  std::vector<std::string> labels;  // Liouville labels of the sigma columns
  std::vector<Eigen::VectorXcd> sigma;
  std::vector<double> sigma_z;
  std::string fingerprint;
};

inline std::string write_result(const std::string& path, const ResultFile& r, const std::string& input_fp) {
  SeriesFile f;
  f.format = io::kResult;
  f.set("model", r.model);
  f.set("input", input_fp);
  f.set("kind", r.kind);
  f.set("dt", format_double(r.dt));
  f.set("memory_time", format_double(r.memory_time));
  std::string labels;
  for (const auto& l : r.labels) labels += (labels.empty() ? "" : " ") + l;
  f.set("labels", labels.empty() ? "-" : labels);
  f.set("has_sigma_z", r.sigma_z.empty() ? "0" : "1");
  const std::size_t n = std::max(r.sigma.size(), r.sigma_z.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row{static_cast<double>(i) * r.dt};
    if (!r.labels.empty()) io::push_matrix(row, r.sigma[i]);
    if (!r.sigma_z.empty()) row.push_back(r.sigma_z[i]);
    f.rows.push_back(std::move(row));
  }
  return write_series_file(path, f);
}

inline ResultFile read_result(const std::string& path) {
  const SeriesFile f = read_series_file(path, io::kResult);
  ResultFile r;
  r.fingerprint = f.has("fingerprint") ? f.get("fingerprint") : f.fingerprint();
  r.kind = f.get("kind");
  r.model = f.get("model");
  r.dt = f.get_double("dt");
  r.memory_time = f.get_double("memory_time");
  std::istringstream ls(f.get("labels"));
  std::string l;
  while (ls >> l)
    if (l != "-") r.labels.push_back(l);
  const bool has_z = f.get("has_sigma_z") == "1";
  const Index n = static_cast<Index>(r.labels.size());
  io::check_rows(f, 1 + 2 * n + (has_z ? 1 : 0));
  for (const auto& row : f.rows) {
    std::size_t pos = 1;
    if (n) r.sigma.push_back(io::take_matrix(row, pos, n, 1));
    if (has_z) r.sigma_z.push_back(row[pos]);
  }
  return r;
}

inline ResultFile result_from_gqme(const GqmeResult& g, const std::string& model) {
  ResultFile r;
  r.kind = g.type.name();
  r.model = model;
  r.dt = g.dt;
  r.memory_time = g.memory_time;
  for (int s : g.type.subset) r.labels.push_back(liouville_label(s));
  r.sigma = g.sigma;
  r.sigma_z = g.sigma_z;
  return r;
}

/// Direct dynamics from the propagator series for the initial state |D><D|.
inline ResultFile result_from_useries(const PropagatorSeries& u) {
  ResultFile r;
  r.kind = "direct";
  r.model = u.fingerprint;
  r.dt = u.dt;
  r.labels = {"DD", "DA", "AD", "AA"};
  for (const auto& m : u.entries) {
    r.sigma.push_back(m.col(kDD));
    r.sigma_z.push_back((m(kDD, kDD) - m(kAA, kDD)).real());
  }
  return r;
}

}  // namespace tfdgqme
