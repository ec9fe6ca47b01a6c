#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "adgan/features.hpp"
#include "adgan/model.hpp"
#include "adgan/params.hpp"

namespace adgan {

// A checkpoint is a flat key-value text file: one `param <name> <rows>
// <cols>` line followed by the row-major values, 17 significant digits so
// the round trip is exact. The survey-compression statistics ride along as
// `stats` lines, and the architecture is serialized to a JSON sidecar so a
// checkpoint is self-describing.
struct Checkpoint {
  ParameterSet params;
  ArchConfig arch;
  SurveyStats stats;
};

namespace detail {

inline void write_values(std::ostream& out, const double* v, std::size_t n) {
  char buf[40];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out << buf << (i + 1 == n ? '\n' : ' ');
  }
}

}  // namespace detail

inline std::string arch_sidecar_path(const std::string& path) { return path + ".arch.json"; }

inline void save_checkpoint(const std::string& path, const ParameterSet& params,
                            const ArchConfig& arch, const SurveyStats& stats) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << "adgan checkpoint v1\n";
  for (const auto& name : params.names()) {
    const Matrix& m = params.at(name);
    out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    detail::write_values(out, m.data(), m.size());
  }
  out << "stats mu " << kSurveyQuestions << '\n';
  detail::write_values(out, stats.mu.data(), stats.mu.size());
  out << "stats sigma " << kSurveyQuestions << '\n';
  detail::write_values(out, stats.sigma.data(), stats.sigma.size());

  std::ofstream arch_out(arch_sidecar_path(path));
  if (!arch_out) throw ValidationError("cannot write checkpoint sidecar: " + path);
  arch_out << arch.to_json().dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "adgan checkpoint v1")
    throw ValidationError("checkpoint schema mismatch: bad magic line");

  Checkpoint ck;
  const auto read_values = [&](double* dst, std::size_t n, const std::string& what) {
    if (!std::getline(in, line))
      throw ValidationError("checkpoint schema mismatch: truncated values for " + what);
    std::istringstream vs(line);
    for (std::size_t i = 0; i < n; ++i)
      if (!(vs >> dst[i]))
        throw ValidationError("checkpoint schema mismatch: bad values for " + what);
    std::string extra;
    if (vs >> extra)
      throw ValidationError("checkpoint schema mismatch: trailing values for " + what);
  };

  bool saw_mu = false, saw_sigma = false;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream hs(line);
    std::string kind;
    hs >> kind;
    if (kind == "param") {
      std::string name;
      int rows = -1, cols = -1;
      if (!(hs >> name >> rows >> cols) || rows < 0 || cols < 0)
        throw ValidationError("checkpoint schema mismatch: bad param header");
      Matrix m(rows, cols);
      read_values(m.data(), m.size(), name);
      m.ensure_finite("checkpoint parameter");
      ck.params.add(name, std::move(m));
    } else if (kind == "stats") {
      std::string which;
      int n = 0;
      if (!(hs >> which >> n) || n != kSurveyQuestions)
        throw ValidationError("checkpoint schema mismatch: bad stats header");
      if (which == "mu") {
        read_values(ck.stats.mu.data(), ck.stats.mu.size(), "stats mu");
        saw_mu = true;
      } else if (which == "sigma") {
        read_values(ck.stats.sigma.data(), ck.stats.sigma.size(), "stats sigma");
        saw_sigma = true;
      } else {
        throw ValidationError("checkpoint schema mismatch: unknown stats block");
      }
    } else {
      throw ValidationError("checkpoint schema mismatch: unknown line kind '" + kind + "'");
    }
  }
  if (!saw_mu || !saw_sigma)
    throw ValidationError("checkpoint schema mismatch: missing compression stats");
  if (ck.params.count() == 0)
    throw ValidationError("checkpoint schema mismatch: no parameters");

  std::ifstream arch_in(arch_sidecar_path(path));
  if (!arch_in) throw ValidationError("cannot open checkpoint sidecar: " + arch_sidecar_path(path));
  nlohmann::json j;
  try {
    arch_in >> j;
    ck.arch = ArchConfig::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint sidecar is not valid JSON: ") + e.what());
  }
  return ck;
}

}  // namespace adgan
