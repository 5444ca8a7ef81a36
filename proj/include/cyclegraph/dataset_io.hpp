#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "core.hpp"

namespace cyclegraph {

struct ParseError : Error {
  std::string field;
  int line;
  ParseError(std::string f, int ln, const std::string& what)
      : Error("line " + std::to_string(ln) + ": " + f + ": " + what), field(std::move(f)), line(ln) {}
};

// 17 significant digits round-trips every double.
inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 16);
  return std::string(buf, r.ptr);
}

namespace detail {

inline void write_list(std::ostream& os, const std::string& key, const std::vector<double>& v) {
  os << key << ' ' << v.size() << '\n';
  for (double x : v) os << format_double(x) << '\n';
}

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  // next non-empty, non-comment line
  std::string next(const std::string& field) {
    std::string s;
    while (std::getline(is_, s)) {
      ++line_;
      if (!s.empty() && s.back() == '\r') s.pop_back();
      auto p = s.find_first_not_of(" \t");
      if (p == std::string::npos || s[p] == '#') continue;
      auto e = s.find_last_not_of(" \t");
      return s.substr(p, e - p + 1);
    }
    throw ParseError(field, line_ + 1, "unexpected end of file");
  }

  void expect(const std::string& want) {
    auto s = next(want);
    if (s != want) throw ParseError(want, line_, "expected '" + want + "', found '" + s + "'");
  }

  double number(const std::string& field) {
    auto s = next(field);
    return to_double(s, field);
  }

  double to_double(std::string_view s, const std::string& field) const {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw ParseError(field, line_, "malformed number '" + std::string(s) + "'");
    if (!std::isfinite(v)) throw ParseError(field, line_, "non-finite number");
    return v;
  }

  long integer(std::string_view s, const std::string& field) const {
    long v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw ParseError(field, line_, "malformed integer '" + std::string(s) + "'");
    return v;
  }

  // "key value..." line; returns the remainder after the key
  std::string keyed(const std::string& key) {
    auto s = next(key);
    auto sp = s.find(' ');
    if (s.substr(0, sp) != key) throw ParseError(key, line_, "expected key '" + key + "', found '" + s + "'");
    if (sp == std::string::npos) throw ParseError(key, line_, "missing value");
    auto rest = s.substr(sp + 1);
    rest.erase(0, rest.find_first_not_of(" \t"));
    return rest;
  }

  std::size_t count(const std::string& key) {
    auto rest = keyed(key);
    long n = integer(rest, key);
    if (n < 0 || n > 100000000) throw ParseError(key, line_, "bad length");
    return static_cast<std::size_t>(n);
  }

  std::vector<double> list(const std::string& key) {
    std::size_t n = count(key);
    std::vector<double> v(n);
    for (auto& x : v) x = number(key);
    return v;
  }

  int line() const { return line_; }

 private:
  std::istream& is_;
  int line_ = 0;
};

}  // namespace detail

inline void write_dataset(std::ostream& os, const SpectralDataset& d) {
  os << "cyclegraph-spectral v1\n";
  os << "GEOMETRY\n";
  os << "m " << d.geom.m << '\n';
  os << "a " << format_double(d.geom.a) << '\n';
  detail::write_list(os, "T", d.geom.T);
  os << "EIGENVALUES\n";
  os << "window " << format_double(d.window_lo) << ' ' << format_double(d.window_hi) << '\n';
  detail::write_list(os, "main", d.lambda_main);
  for (int k = 0; k < d.geom.m; ++k) detail::write_list(os, "k" + std::to_string(k + 1), d.lambda_k[k]);
  os << "SIGMA\n";
  os << "count " << d.sigma.size() << '\n';
  for (int s : d.sigma) os << s << '\n';
  os << "REMAINDERS\n";
  detail::write_list(os, "rho", d.remainder_grid);
  detail::write_list(os, "main", d.kappa_main);
  for (int k = 0; k < d.geom.m; ++k) detail::write_list(os, "k" + std::to_string(k + 1), d.kappa_k[k]);
  os << "END\n";
}

inline SpectralDataset read_dataset(std::istream& is) {
  detail::LineReader r(is);
  SpectralDataset d;
  r.expect("cyclegraph-spectral v1");
  r.expect("GEOMETRY");
  {
    auto s = r.keyed("m");
    long m = r.integer(s, "m");
    if (m < 1 || m > 1000) throw ParseError("m", r.line(), "m out of range");
    d.geom.m = static_cast<int>(m);
  }
  d.geom.a = r.to_double(r.keyed("a"), "a");
  d.geom.T = r.list("T");
  try {
    d.geom.validate();
  } catch (const Error& e) {
    throw ParseError("GEOMETRY", r.line(), e.what());
  }
  r.expect("EIGENVALUES");
  {
    auto s = r.keyed("window");
    auto sp = s.find(' ');
    if (sp == std::string::npos) throw ParseError("window", r.line(), "expected two numbers");
    d.window_lo = r.to_double(s.substr(0, sp), "window");
    auto hi = s.substr(sp + 1);
    hi.erase(0, hi.find_first_not_of(" \t"));
    d.window_hi = r.to_double(hi, "window");
  }
  auto sorted_list = [&](const std::string& key) {
    auto v = r.list(key);
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] < v[i - 1])
        throw ParseError(key, r.line(), "eigenvalues not sorted ascending (entry " + std::to_string(i) + ")");
    return v;
  };
  d.lambda_main = sorted_list("main");
  for (int k = 1; k <= d.geom.m; ++k) d.lambda_k.push_back(sorted_list("k" + std::to_string(k)));
  r.expect("SIGMA");
  {
    std::size_t n = r.count("count");
    d.sigma.resize(n);
    for (auto& s : d.sigma) {
      auto t = r.next("sigma");
      long v = r.integer(t, "sigma");
      if (v < -1 || v > 1) throw ParseError("sigma", r.line(), "sigma out of range");
      s = static_cast<int>(v);
    }
  }
  r.expect("REMAINDERS");
  d.remainder_grid = r.list("rho");
  d.kappa_main = r.list("main");
  if (d.kappa_main.size() != d.remainder_grid.size())
    throw ParseError("main", r.line(), "remainder length does not match rho grid");
  for (int k = 1; k <= d.geom.m; ++k) {
    auto key = "k" + std::to_string(k);
    d.kappa_k.push_back(r.list(key));
    if (d.kappa_k.back().size() != d.remainder_grid.size())
      throw ParseError(key, r.line(), "remainder length does not match rho grid");
  }
  r.expect("END");
  try {
    d.validate();
  } catch (const Error& e) {
    throw ParseError("dataset", r.line(), e.what());
  }
  return d;
}

inline void save_dataset(const SpectralDataset& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_dataset(os, d);
  if (!os) throw Error("write failed: " + path);
}

inline SpectralDataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_dataset(is);
}

// Potentials: same conventions, one values list per edge (edge 0 = loop).
inline void write_potentials(std::ostream& os, const PotentialSet& p) {
  os << "cyclegraph-potentials v1\n";
  os << "GEOMETRY\n";
  os << "m " << p.geom.m << '\n';
  os << "a " << format_double(p.geom.a) << '\n';
  detail::write_list(os, "T", p.geom.T);
  os << "EDGES\n";
  for (int j = 0; j <= p.geom.m; ++j) detail::write_list(os, "q" + std::to_string(j), p.q[j].values);
  os << "END\n";
}

inline PotentialSet read_potentials(std::istream& is) {
  detail::LineReader r(is);
  PotentialSet p;
  r.expect("cyclegraph-potentials v1");
  r.expect("GEOMETRY");
  long m = r.integer(r.keyed("m"), "m");
  if (m < 1 || m > 1000) throw ParseError("m", r.line(), "m out of range");
  p.geom.m = static_cast<int>(m);
  p.geom.a = r.to_double(r.keyed("a"), "a");
  p.geom.T = r.list("T");
  try {
    p.geom.validate();
  } catch (const Error& e) {
    throw ParseError("GEOMETRY", r.line(), e.what());
  }
  r.expect("EDGES");
  for (int j = 0; j <= p.geom.m; ++j) {
    auto key = "q" + std::to_string(j);
    auto v = r.list(key);
    if (v.size() < 5) throw ParseError(key, r.line(), "need at least 5 samples");
    p.q.emplace_back(p.geom.T[j], std::move(v));
  }
  r.expect("END");
  return p;
}

inline void save_potentials(const PotentialSet& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_potentials(os, p);
  if (!os) throw Error("write failed: " + path);
}

inline PotentialSet load_potentials(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_potentials(is);
}

}  // namespace cyclegraph
