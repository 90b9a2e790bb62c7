#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "grid.hpp"
#include "rigid_rotor.hpp"
#include "simulation.hpp"

namespace geoflow {

static_assert(std::endian::native == std::endian::little, "snapshot payload is written in native little-endian order");

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct Snapshot {
  std::string name;
  int Nx = 0, Ny = 0;  // Ny intervals, Ny + 1 rows
  double X = 0, Y = 0, t = 0;
  Field data;  // (Nx, Ny + 1)
};

inline std::string encode_snapshot(const Snapshot& s) {
  if (s.data.rows() != s.Nx || s.data.cols() != s.Ny + 1) throw config_error("snapshot shape mismatch");
  if (s.name.empty() || s.name.find_first_of(" \t\n") != std::string::npos)
    throw config_error("snapshot name must be a non-empty token");
  std::string out = "GEOFLOW-FIELD v1 name=" + s.name + " Nx=" + std::to_string(s.Nx) + " Ny=" + std::to_string(s.Ny) +
                    " X=" + format_double(s.X) + " Y=" + format_double(s.Y) + " t=" + format_double(s.t) + "\n";
  const size_t n = static_cast<size_t>(s.Nx) * (s.Ny + 1);
  out.append(reinterpret_cast<const char*>(s.data.data()), n * sizeof(double));
  return out;
}

inline Snapshot decode_snapshot(const std::string& bytes) {
  auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw config_error("snapshot: missing header line");
  std::istringstream hs(bytes.substr(0, nl));
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "GEOFLOW-FIELD" || version != "v1") throw config_error("snapshot: bad magic/version");
  Snapshot s;
  bool seen[6] = {};
  std::string tok;
  while (hs >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw config_error("snapshot: malformed header token " + tok);
    std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    try {
      if (k == "name") s.name = v, seen[0] = true;
      else if (k == "Nx") s.Nx = std::stoi(v), seen[1] = true;
      else if (k == "Ny") s.Ny = std::stoi(v), seen[2] = true;
      else if (k == "X") s.X = std::stod(v), seen[3] = true;
      else if (k == "Y") s.Y = std::stod(v), seen[4] = true;
      else if (k == "t") s.t = std::stod(v), seen[5] = true;
      else throw config_error("snapshot: unknown header key " + k);
    } catch (const std::logic_error&) {
      throw config_error("snapshot: bad value for " + k);
    }
  }
  for (bool b : seen)
    if (!b) throw config_error("snapshot: incomplete header");
  if (s.Nx <= 0 || s.Ny < 0) throw config_error("snapshot: bad dimensions");
  const size_t n = static_cast<size_t>(s.Nx) * (s.Ny + 1);
  const size_t have = bytes.size() - nl - 1;
  if (have != n * sizeof(double))
    throw config_error("snapshot: expected " + std::to_string(n * sizeof(double)) + " payload bytes, found " +
                       std::to_string(have));
  s.data.resize(s.Nx, s.Ny + 1);
  std::memcpy(s.data.data(), bytes.data() + nl + 1, n * sizeof(double));
  return s;
}

inline void write_snapshot(const std::filesystem::path& p, const Snapshot& s) { write_atomic(p, encode_snapshot(s)); }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw config_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Snapshot read_snapshot(const std::filesystem::path& p) { return decode_snapshot(read_file(p)); }

inline constexpr const char* kSeriesHeader = "t,energy,enstrophy,pert_enstrophy,circulation,H2,p_norm";
inline constexpr const char* kRigidHeader = "t,Pi1,Pi2,Pi3,q,energy,casimir,p_k";

inline std::string series_csv(const std::vector<Diagnostics>& rows) {
  std::string out = std::string(kSeriesHeader) + "\n";
  for (const auto& d : rows) {
    for (double v : {d.t, d.energy, d.enstrophy, d.pert_enstrophy, d.circulation, d.H2})
      out += format_double(v) + ",";
    out += format_double(d.p_norm) + "\n";
  }
  return out;
}

inline std::string rigid_csv(const RigidTrajectory& tr) {
  std::string out = std::string(kRigidHeader) + "\n";
  for (const auto& s : tr.samples) {
    for (double v : {s.t, s.pi(0), s.pi(1), s.pi(2), s.q, s.energy, s.casimir}) out += format_double(v) + ",";
    out += format_double(s.p_k) + "\n";
  }
  return out;
}

/// Parses a numeric CSV with the given header; returns rows.
inline std::vector<std::vector<double>> parse_csv(const std::string& text, const std::string& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header) throw config_error("csv: unexpected header");
  const size_t cols = static_cast<size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> r;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        size_t used = 0;
        r.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::logic_error&) {
        throw config_error("csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (r.size() != cols) throw config_error("csv line " + std::to_string(lineno) + ": wrong column count");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<Diagnostics> parse_series_csv(const std::string& text) {
  std::vector<Diagnostics> out;
  for (const auto& r : parse_csv(text, kSeriesHeader)) out.push_back({r[0], r[1], r[2], r[3], r[4], r[5], r[6]});
  return out;
}

}  // namespace geoflow
