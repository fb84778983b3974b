// Copyright 2026 The gasso Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Data ingestion and persistence: CSV blocks, the key=value manifest,
// Gaussian preprocessing and the model archive. Needs nlohmann/json
// (json.hpp) on the include path.
//
// Binary archive layout (all integers and doubles little-endian):
//   8 bytes   magic "GASSOARC"
//   u32       format version (1)
//   u64       metadata length L, then L bytes of UTF-8 JSON
//   u32       matrix count M, then M records of
//               u32 name length, name bytes,
//               u64 rows, u64 cols, rows*cols doubles in column-major order
// Text archive: a directory holding meta.json and one CSV per matrix
// (<name>.csv) whose first line is "# rows cols".

#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gasso/common.hpp"
#include "gasso/expfam.hpp"
#include "gasso/model.hpp"
#include "gasso/numkit.hpp"

namespace gasso::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::string id_name;
  std::vector<std::string> ids;
  std::vector<std::string> columns;
  Matrix values;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  std::string out(s.substr(a, b - a));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  if (*b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, ptr);
}

}  // namespace detail

/// Header row, first column sample IDs, remaining columns numeric.
inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_line(line);
    if (header) {
      if (fields.size() < 2) throw std::runtime_error(path.string() + ": header needs an ID column and data columns");
      t.id_name = fields[0];
      t.columns.assign(fields.begin() + 1, fields.end());
      header = false;
      continue;
    }
    if (fields.size() != t.columns.size() + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(t.columns.size() + 1) + " fields, found " +
                               std::to_string(fields.size()));
    }
    std::vector<double> r(t.columns.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!detail::parse_double(fields[j + 1], r[j])) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": row '" +
                                 fields[0] + "', column '" + t.columns[j] +
                                 "': not a finite number: '" + fields[j + 1] + "'");
      }
    }
    t.ids.push_back(fields[0]);
    rows.push_back(std::move(r));
  }
  if (header) throw std::runtime_error(path.string() + ": empty file");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return t;
}

inline void write_csv(const fs::path& path, const CsvTable& t) {
  if (static_cast<Index>(t.ids.size()) != t.values.rows() ||
      static_cast<Index>(t.columns.size()) != t.values.cols()) {
    throw std::invalid_argument("write_csv: labels do not match the matrix shape");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (t.id_name.empty() ? "id" : t.id_name);
  for (const auto& c : t.columns) out << ',' << c;
  out << '\n';
  for (Index i = 0; i < t.values.rows(); ++i) {
    out << t.ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < t.values.cols(); ++j) out << ',' << detail::format_double(t.values(i, j));
    out << '\n';
  }
}

/// A single family name for every column, or a comma-separated list with
/// one name per column.
inline std::vector<Family> parse_family_decl(const std::string& decl, Index p) {
  std::vector<Family> fam;
  for (const auto& s : detail::split_line(decl)) fam.push_back(gasso::family_from_string(s));
  if (fam.size() == 1) return std::vector<Family>(static_cast<std::size_t>(p), fam[0]);
  if (static_cast<Index>(fam.size()) != p) {
    throw std::invalid_argument("family declaration lists " + std::to_string(fam.size()) +
                                " families for " + std::to_string(p) + " columns");
  }
  return fam;
}

struct LabeledBlock {
  DataBlock block;
  std::vector<std::string> ids;
  std::vector<std::string> columns;
  std::string id_name;
};

inline void check_support(const LabeledBlock& b) {
  const auto& d = b.block;
  for (Index j = 0; j < d.cols(); ++j) {
    const Family f = d.family[static_cast<std::size_t>(j)];
    for (Index i = 0; i < d.rows(); ++i) {
      if (!expfam::in_support(f, d.X(i, j))) {
        std::ostringstream os;
        os << "row '" << b.ids[static_cast<std::size_t>(i)] << "', column '"
           << b.columns[static_cast<std::size_t>(j)] << "': value " << d.X(i, j)
           << " outside the support of " << gasso::to_string(f);
        throw std::domain_error(os.str());
      }
    }
  }
}

inline LabeledBlock read_block(const fs::path& path, const std::string& family_decl) {
  CsvTable t = read_csv(path);
  LabeledBlock b;
  b.block = DataBlock(std::move(t.values), parse_family_decl(family_decl, static_cast<Index>(t.columns.size())));
  b.ids = std::move(t.ids);
  b.columns = std::move(t.columns);
  b.id_name = std::move(t.id_name);
  check_support(b);
  return b;
}

inline void write_block(const fs::path& path, const LabeledBlock& b) {
  write_csv(path, CsvTable{b.id_name, b.ids, b.columns, b.block.X});
}

// ---------------------------------------------------------------------------
// Gaussian preprocessing

struct Preprocessed {
  Matrix Xs;
  double sigma_hat = 1.0;
  Index khat = 0;
  Vector mean, sd;
};

/// Standardizes columns, estimates the noise level from the trailing
/// singular values past the spectrum's elbow, then rescales by 1/sigma.
inline Preprocessed preprocess_gaussian(const Matrix& X, const std::vector<std::string>& names = {}) {
  const Index n = X.rows(), p = X.cols();
  if (n < 2) throw std::invalid_argument("preprocess_gaussian: need at least 2 rows");
  Preprocessed out;
  out.mean = X.colwise().mean().transpose();
  Matrix Z = X.rowwise() - out.mean.transpose();
  out.sd = (Z.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
  for (Index j = 0; j < p; ++j) {
    if (!(out.sd(j) > 0.0)) {
      throw std::domain_error("preprocess_gaussian: column " +
                              (names.empty() ? std::to_string(j) : "'" + names[static_cast<std::size_t>(j)] + "'") +
                              " has zero variance");
    }
    Z.col(j) /= out.sd(j);
  }
  const Vector d = numkit::singular_values(Z);
  const Index m = std::min(n - 1, p);
  // Elbow: largest k <= m/2 with d_k / d_{k+1} > 2; no such gap -> k = 0.
  out.khat = 0;
  for (Index k = 1; k <= m / 2 && k < d.size(); ++k) {
    if (d(k) > 0.0 && d(k - 1) / d(k) > 2.0) out.khat = k;
  }
  const Index k = out.khat;
  const double tail = d.tail(d.size() - k).squaredNorm();
  const double dof = static_cast<double>(n - 1 - k) * static_cast<double>(p - k);
  out.sigma_hat = std::sqrt(tail / dof);
  out.Xs = Z / out.sigma_hat;
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  fs::path path[2];
  std::string family[2];
  std::string id_column;
  bool preprocess[2] = {false, false};
};

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("manifest: " + key + " expects a boolean, got '" + v + "'");
}

/// key = value lines; '#' starts a comment. Relative paths resolve against
/// the manifest's directory.
inline Manifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open manifest " + file.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key == "block1.path" || key == "block2.path") {
      fs::path p(val);
      m.path[key[5] - '1'] = p.is_absolute() ? p : file.parent_path() / p;
    } else if (key == "block1.family" || key == "block2.family") {
      m.family[key[5] - '1'] = val;
    } else if (key == "block1.preprocess" || key == "block2.preprocess") {
      m.preprocess[key[5] - '1'] = parse_bool(key, val);
    } else if (key == "id_column") {
      m.id_column = val;
    } else {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  for (int k = 0; k < 2; ++k) {
    if (m.path[k].empty() || m.family[k].empty()) {
      throw std::runtime_error("manifest: block" + std::to_string(k + 1) + ".path and .family are required");
    }
  }
  return m;
}

struct LoadedData {
  LabeledBlock b1, b2;
  double sigma_hat[2] = {1.0, 1.0};
};

/// Reads both blocks and reorders block 2 to block 1's sample order.
inline LoadedData load_manifest_data(const Manifest& m) {
  LoadedData out;
  out.b1 = read_block(m.path[0], m.family[0]);
  out.b2 = read_block(m.path[1], m.family[1]);
  for (const auto* b : {&out.b1, &out.b2}) {
    if (!m.id_column.empty() && b->id_name != m.id_column) {
      throw std::runtime_error("ID column is '" + b->id_name + "', manifest says '" + m.id_column + "'");
    }
  }
  std::unordered_map<std::string, Index> pos;
  for (std::size_t i = 0; i < out.b2.ids.size(); ++i) {
    if (!pos.emplace(out.b2.ids[i], static_cast<Index>(i)).second) {
      throw std::runtime_error("duplicate sample ID '" + out.b2.ids[i] + "' in block 2");
    }
  }
  if (out.b1.ids.size() != out.b2.ids.size()) {
    throw std::runtime_error("blocks hold different numbers of samples");
  }
  std::set<std::string> seen;
  Matrix X2(out.b2.block.rows(), out.b2.block.cols());
  for (std::size_t i = 0; i < out.b1.ids.size(); ++i) {
    const auto& id = out.b1.ids[i];
    if (!seen.insert(id).second) throw std::runtime_error("duplicate sample ID '" + id + "' in block 1");
    const auto it = pos.find(id);
    if (it == pos.end()) throw std::runtime_error("sample '" + id + "' missing from block 2");
    X2.row(static_cast<Index>(i)) = out.b2.block.X.row(it->second);
  }
  out.b2.block.X = std::move(X2);
  out.b2.ids = out.b1.ids;
  LabeledBlock* blocks[2] = {&out.b1, &out.b2};
  for (int k = 0; k < 2; ++k) {
    if (!m.preprocess[k]) continue;
    auto& b = *blocks[k];
    for (Family f : b.block.family) {
      if (f != Family::GaussianUnitVar) {
        throw std::runtime_error("preprocessing applies to Gaussian blocks only (block " + std::to_string(k + 1) + ")");
      }
    }
    auto pre = preprocess_gaussian(b.block.X, b.columns);
    b.block.X = std::move(pre.Xs);
    out.sigma_hat[k] = pre.sigma_hat;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model archive

struct Archive {
  GasParams params;
  json meta = json::object();  // families1/2, ranks, seed, version, names, ...
  std::map<std::string, Matrix> extra;  // further named matrices
};

enum class ArchiveFormat { Binary, Text };

namespace detail {

inline std::vector<std::pair<std::string, Matrix>> archive_matrices(const Archive& a) {
  const auto& g = a.params;
  std::vector<std::pair<std::string, Matrix>> m = {
      {"mu1", g.mu1}, {"mu2", g.mu2}, {"U0", g.U0}, {"U1", g.U1}, {"U2", g.U2},
      {"V1", g.V1},   {"V2", g.V2},   {"A1", g.A1}, {"A2", g.A2}};
  for (const auto& [k, v] : a.extra) m.emplace_back(k, v);
  return m;
}

inline void assign_matrix(Archive& a, const std::string& name, Matrix M) {
  auto& g = a.params;
  if (name == "mu1") g.mu1 = M.col(0);
  else if (name == "mu2") g.mu2 = M.col(0);
  else if (name == "U0") g.U0 = std::move(M);
  else if (name == "U1") g.U1 = std::move(M);
  else if (name == "U2") g.U2 = std::move(M);
  else if (name == "V1") g.V1 = std::move(M);
  else if (name == "V2") g.V2 = std::move(M);
  else if (name == "A1") g.A1 = std::move(M);
  else if (name == "A2") g.A2 = std::move(M);
  else a.extra[name] = std::move(M);
}

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("archive truncated");
  return byteswap_if_big(v);
}

inline constexpr char kMagic[8] = {'G', 'A', 'S', 'S', 'O', 'A', 'R', 'C'};
inline constexpr std::uint32_t kVersion = 1;

}  // namespace detail

inline void write_archive(const fs::path& path, const Archive& a,
                          ArchiveFormat format = ArchiveFormat::Binary) {
  json meta = a.meta;
  meta["format_version"] = detail::kVersion;
  if (format == ArchiveFormat::Text) {
    fs::create_directories(path);
    std::ofstream(path / "meta.json") << meta.dump(2) << '\n';
    for (const auto& [name, M] : detail::archive_matrices(a)) {
      std::ofstream out(path / (name + ".csv"));
      if (!out) throw std::runtime_error("cannot write " + (path / (name + ".csv")).string());
      out << "# " << M.rows() << ' ' << M.cols() << '\n';
      for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) out << (j ? "," : "") << detail::format_double(M(i, j));
        out << '\n';
      }
    }
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(detail::kMagic, 8);
  detail::put<std::uint32_t>(os, detail::kVersion);
  const std::string js = meta.dump();
  detail::put<std::uint64_t>(os, js.size());
  os.write(js.data(), static_cast<std::streamsize>(js.size()));
  const auto mats = detail::archive_matrices(a);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(mats.size()));
  for (const auto& [name, M] : mats) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(M.rows()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(M.cols()));
    for (Index k = 0; k < M.size(); ++k) detail::put<double>(os, M.data()[k]);
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

/// Reads either variant; a directory is taken to be the text form.
inline Archive read_archive(const fs::path& path) {
  Archive a;
  if (fs::is_directory(path)) {
    std::ifstream mj(path / "meta.json");
    if (!mj) throw std::runtime_error("archive directory lacks meta.json: " + path.string());
    a.meta = json::parse(mj);
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() != ".csv") continue;
      std::ifstream in(e.path());
      std::string line;
      Index rows = 0, cols = 0;
      if (!std::getline(in, line) || std::sscanf(line.c_str(), "# %ld %ld", &rows, &cols) != 2) {
        throw std::runtime_error(e.path().string() + ": missing '# rows cols' line");
      }
      Matrix M(rows, cols);
      for (Index i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error(e.path().string() + ": too few rows");
        const auto f = detail::split_line(line);
        if (static_cast<Index>(f.size()) != cols && cols > 0) {
          throw std::runtime_error(e.path().string() + ": ragged row " + std::to_string(i));
        }
        for (Index j = 0; j < cols; ++j) {
          if (!detail::parse_double(f[static_cast<std::size_t>(j)], M(i, j))) {
            throw std::runtime_error(e.path().string() + ": bad number in row " + std::to_string(i));
          }
        }
      }
      detail::assign_matrix(a, e.path().stem().string(), std::move(M));
    }
  } else {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, detail::kMagic, 8) != 0) {
      throw std::runtime_error(path.string() + " is not a model archive");
    }
    const auto version = detail::get<std::uint32_t>(is);
    if (version != detail::kVersion) {
      throw std::runtime_error("unsupported archive version " + std::to_string(version));
    }
    const auto len = detail::get<std::uint64_t>(is);
    std::string js(len, '\0');
    if (!is.read(js.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("archive truncated");
    a.meta = json::parse(js);
    const auto count = detail::get<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto nl = detail::get<std::uint32_t>(is);
      std::string name(nl, '\0');
      if (!is.read(name.data(), nl)) throw std::runtime_error("archive truncated");
      const auto rows = static_cast<Index>(detail::get<std::uint64_t>(is));
      const auto cols = static_cast<Index>(detail::get<std::uint64_t>(is));
      Matrix M(rows, cols);
      for (Index t = 0; t < M.size(); ++t) M.data()[t] = detail::get<double>(is);
      detail::assign_matrix(a, name, std::move(M));
    }
  }
  a.params.check_dimensions();
  return a;
}

inline std::vector<Family> families_from_meta(const json& meta, const char* key, Index p) {
  std::vector<Family> fam;
  if (meta.contains(key)) {
    for (const auto& s : meta.at(key)) fam.push_back(gasso::family_from_string(s.get<std::string>()));
  }
  if (static_cast<Index>(fam.size()) != p) {
    throw std::runtime_error(std::string("archive metadata: '") + key + "' does not list " +
                             std::to_string(p) + " families");
  }
  return fam;
}

inline json families_to_json(const std::vector<Family>& fam) {
  json a = json::array();
  for (Family f : fam) a.push_back(std::string(gasso::to_string(f)));
  return a;
}

}  // namespace gasso::io
