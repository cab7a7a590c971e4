#include <cmath>
#include <fstream>
#include <sstream>

#include "qrnet/csv.hpp"
#include "qrnet/datagen.hpp"
#include "qrnet/errors.hpp"

namespace qrnet {

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset: " + path.string());
  out << "# fingerprint=" << ds.fingerprint << "\n";
  out << "# seed=" << ds.seed << "\n";
  out << "# n=" << ds.n << " m=" << ds.m << "\n";
  out << "traj,t";
  for (int i = 0; i < ds.n; ++i) out << ",x_" << i;
  out << ",V";
  for (int i = 0; i < ds.n; ++i) out << ",lam_" << i;
  for (int i = 0; i < ds.m; ++i) out << ",u_" << i;
  out << "\n";
  for (const auto& s : ds.samples) {
    require(s.x.size() == ds.n && s.lambda.size() == ds.n && s.u.size() == ds.m,
            "save_dataset: sample dimension mismatch");
    out << s.traj << ',' << format_double(s.t);
    for (int i = 0; i < ds.n; ++i) out << ',' << format_double(s.x(i));
    out << ',' << format_double(s.V);
    for (int i = 0; i < ds.n; ++i) out << ',' << format_double(s.lambda(i));
    for (int i = 0; i < ds.m; ++i) out << ',' << format_double(s.u(i));
    out << '\n';
  }
  if (!out) throw ConfigError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path.string());
  Dataset ds;
  bool have_dims = false, have_header = false;
  std::string line;
  long lineno = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      std::istringstream ss(body);
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        try {
          if (key == "fingerprint") ds.fingerprint = val;
          else if (key == "seed") ds.seed = std::stoull(val);
          else if (key == "n") { ds.n = std::stoi(val); have_dims = true; }
          else if (key == "m") ds.m = std::stoi(val);
        } catch (const std::exception&) {
          fail("bad header value '" + tok + "'");
        }
      }
      continue;
    }
    if (!have_header) {
      if (!have_dims) fail("missing '# n= m=' line before header");
      const auto f = split_fields(line);
      if (f.size() != static_cast<std::size_t>(3 + 2 * ds.n + ds.m) || f[0] != "traj")
        fail("header does not match n=" + std::to_string(ds.n) + " m=" + std::to_string(ds.m));
      have_header = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != static_cast<std::size_t>(3 + 2 * ds.n + ds.m))
      fail("expected " + std::to_string(3 + 2 * ds.n + ds.m) + " fields, got " +
           std::to_string(f.size()));
    Sample s;
    s.x.resize(ds.n);
    s.lambda.resize(ds.n);
    s.u.resize(ds.m);
    try {
      const double id = parse_double(f[0]);
      if (id != std::floor(id) || id < 0) fail("bad trajectory id");
      s.traj = static_cast<int>(id);
      std::size_t k = 1;
      s.t = parse_double(f[k++]);
      for (int i = 0; i < ds.n; ++i) s.x(i) = parse_double(f[k++]);
      s.V = parse_double(f[k++]);
      for (int i = 0; i < ds.n; ++i) s.lambda(i) = parse_double(f[k++]);
      for (int i = 0; i < ds.m; ++i) s.u(i) = parse_double(f[k++]);
    } catch (const ParseError& e) {
      if (std::string(e.what()).rfind(path.string(), 0) == 0) throw;
      fail(e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  if (!have_header) fail("no header row");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  Dataset ds = load_dataset(path);
  if (ds.fingerprint != expected_fingerprint) {
    throw FingerprintMismatch("dataset " + path.string() + " was generated for problem " +
                              ds.fingerprint + ", expected " + expected_fingerprint);
  }
  return ds;
}

}  // namespace qrnet
