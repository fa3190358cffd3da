#pragma once

// Observed regression data plus the optional ground truth of synthetic runs,
// and the on-disk CSV / metadata formats.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "smom/error.hpp"
#include "smom/linalg.hpp"

namespace smom {

struct Dataset {
  RowMatrix X;  // N x d
  Vector y;     // N
  std::optional<Vector> truth;
  std::optional<std::vector<bool>> outlier_mask;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }

  void validate() const {
    if (X.rows() != y.size())
      throw Error(Errc::DimensionMismatch, "X has " + std::to_string(X.rows()) + " rows but y has " +
                                               std::to_string(y.size()) + " entries");
    if (truth && truth->size() != X.cols())
      throw Error(Errc::DimensionMismatch, "truth dimension differs from X columns");
    if (outlier_mask && static_cast<Eigen::Index>(outlier_mask->size()) != X.rows())
      throw Error(Errc::DimensionMismatch, "outlier mask length differs from N");
  }

  std::size_t outlier_count() const {
    if (!outlier_mask) return 0;
    std::size_t c = 0;
    for (bool b : *outlier_mask) c += b ? 1 : 0;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Number formatting: shortest representation that parses back to the same
// double, so CSV files round-trip exactly and reruns are byte-identical.

inline std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(Errc::Parse, "not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_view(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// ---------------------------------------------------------------------------
// CSV: header x0,...,x{d-1},y then one sample per row.

inline void write_dataset_csv(const Dataset& data, std::ostream& os) {
  data.validate();
  for (Eigen::Index j = 0; j < data.d(); ++j) os << 'x' << j << ',';
  os << "y\n";
  std::string line;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      line += format_double(data.X(i, j));
      line += ',';
    }
    line += format_double(data.y[i]);
    line += '\n';
    os << line;
  }
}

inline void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  write_dataset_csv(data, os);
  if (!os) throw Error(Errc::Io, "write failed: " + path.string());
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::Parse, "empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_view(line, ',');
  if (header.size() < 2 || header.back() != "y")
    throw Error(Errc::Parse, "header must be x0,...,x{d-1},y");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != "x" + std::to_string(j))
      throw Error(Errc::Parse, "unexpected header column '" + std::string(header[j]) + "'");

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_view(line, ',');
    if (cells.size() != d + 1)
      throw Error(Errc::Parse, "row " + std::to_string(rows + 1) + " has " + std::to_string(cells.size()) +
                                   " fields, expected " + std::to_string(d + 1));
    for (auto c : cells) values.push_back(parse_double(c));
    ++rows;
  }
  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  data.y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) data.X(i, j) = values[i * (d + 1) + j];
    data.y[i] = values[i * (d + 1) + d];
  }
  return data;
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open: " + path.string());
  return read_dataset_csv(is);
}

// ---------------------------------------------------------------------------
// Flat `key = value` text, '#' starts a comment. Used for the dataset
// metadata sidecar and for experiment configs.

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::Parse, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw Error(Errc::Parse, "line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open: " + path.string());
  return parse_key_values(is);
}

inline void write_key_values(const KeyValues& kv, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  if (!os) throw Error(Errc::Io, "write failed: " + path.string());
}

inline std::string join_vector(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

inline Vector parse_vector(std::string_view s) {
  std::vector<double> vals;
  for (auto c : split_view(s, ',')) vals.push_back(parse_double(c));
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

/// Sidecar metadata of a generated dataset (d, N, sigma, epsilon, seed, beta*).
struct DatasetMeta {
  Eigen::Index d = 0;
  Eigen::Index n = 0;
  double sigma = 0.0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::optional<Vector> beta_star;
  KeyValues extra;  // recipe details such as attack kind and design

  KeyValues to_key_values() const {
    KeyValues kv = extra;
    kv["d"] = std::to_string(d);
    kv["N"] = std::to_string(n);
    kv["sigma"] = format_double(sigma);
    kv["epsilon"] = format_double(epsilon);
    kv["seed"] = std::to_string(seed);
    if (beta_star) kv["beta_star"] = join_vector(*beta_star);
    return kv;
  }

  static DatasetMeta from_key_values(const KeyValues& kv) {
    DatasetMeta m;
    auto need = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw Error(Errc::Parse, std::string("metadata missing key '") + key + "'");
      return it->second;
    };
    m.d = std::stol(need("d"));
    m.n = std::stol(need("N"));
    m.sigma = parse_double(need("sigma"));
    m.epsilon = parse_double(need("epsilon"));
    m.seed = std::stoull(need("seed"));
    if (auto it = kv.find("beta_star"); it != kv.end()) m.beta_star = parse_vector(it->second);
    for (const auto& [k, v] : kv)
      if (k != "d" && k != "N" && k != "sigma" && k != "epsilon" && k != "seed" && k != "beta_star")
        m.extra[k] = v;
    return m;
  }
};

}  // namespace smom
