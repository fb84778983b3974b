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

// gasso command-line tool.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gasso/gasso.hpp"
#include "gasso/io.hpp"

namespace fs = std::filesystem;
using gasso::Index;
using gasso::Matrix;
using gasso::Vector;
using gasso::io::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct DataArgs {
  std::string manifest;
  std::string x1, x2, family1, family2;
  bool preprocess1 = false, preprocess2 = false;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "key=value manifest describing both blocks");
    app->add_option("--x1", x1, "block-1 CSV (header row, first column sample IDs)");
    app->add_option("--x2", x2, "block-2 CSV");
    app->add_option("--family1", family1, "block-1 family, or one per column (comma-separated)");
    app->add_option("--family2", family2, "block-2 family, or one per column");
    app->add_flag("--preprocess1", preprocess1, "standardize and noise-scale Gaussian block 1");
    app->add_flag("--preprocess2", preprocess2, "standardize and noise-scale Gaussian block 2");
  }

  gasso::io::LoadedData load() const {
    gasso::io::Manifest m;
    if (!manifest.empty()) {
      m = gasso::io::read_manifest(manifest);
    } else {
      if (x1.empty() || x2.empty() || family1.empty() || family2.empty()) {
        throw std::runtime_error("give --manifest, or all of --x1 --x2 --family1 --family2");
      }
      m.path[0] = x1;
      m.path[1] = x2;
      m.family[0] = family1;
      m.family[1] = family2;
    }
    m.preprocess[0] = m.preprocess[0] || preprocess1;
    m.preprocess[1] = m.preprocess[1] || preprocess2;
    return gasso::io::load_manifest_data(m);
  }
};

int resolve_threads_flag(int flag) {
  if (flag > 0) return flag;
  return gasso::resolve_threads(0);  // GASSO_THREADS or 1
}

gasso::Ranks parse_ranks(const std::string& s) {
  std::vector<Index> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    const long x = std::stol(tok, &pos);
    if (pos != tok.size() || x < 0) throw std::invalid_argument("bad --ranks value '" + s + "'");
    v.push_back(x);
  }
  if (v.size() != 3) throw std::invalid_argument("--ranks expects r0,r1,r2");
  return {v[0], v[1], v[2]};
}

void write_text(const fs::path& path, const std::string& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << s;
}

std::vector<std::string> string_list(const json& meta, const char* key, Index n, const char* prefix) {
  std::vector<std::string> v;
  if (meta.contains(key)) v = meta.at(key).get<std::vector<std::string>>();
  if (static_cast<Index>(v.size()) != n) {
    v.clear();
    for (Index i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i + 1));
  }
  return v;
}

std::pair<Matrix, Matrix> centered_thetas(const gasso::GasParams& g) {
  return {g.U0 * g.V1.transpose() + g.U1 * g.A1.transpose(),
          g.U0 * g.V2.transpose() + g.U2 * g.A2.transpose()};
}

// ---------------------------------------------------------------------------

struct FitArgs {
  DataArgs data;
  std::string ranks, mode = "full", out = "model.gas", trace;
  std::optional<double> ridge, sparse_fraction;
  double tol = 1e-6;
  int max_iter = 0, threads = 0;
  std::uint64_t seed = 0;
  bool text = false;
};

int run_fit(const FitArgs& a) {
  const auto data = a.data.load();
  gasso::FitConfig cfg;
  cfg.mode = gasso::fit_mode_from_string(a.mode);
  cfg.ridge_bernoulli = a.ridge;
  cfg.tol = a.tol;
  cfg.max_iter = a.max_iter;
  cfg.seed = a.seed;
  cfg.threads = resolve_threads_flag(a.threads);
  if (a.sparse_fraction) {
    cfg.sparsity = gasso::SparsityRule{gasso::ThresholdRule::QuantileFraction, *a.sparse_fraction};
  }
  const auto ranks = parse_ranks(a.ranks);
  const auto res = gasso::fit(data.b1.block, data.b2.block, ranks, cfg);

  gasso::io::Archive ar;
  ar.params = res.params;
  ar.meta = {{"version", kVersion},
             {"ranks", {ranks.r0, ranks.r1, ranks.r2}},
             {"seed", a.seed},
             {"mode", std::string(gasso::to_string(cfg.mode))},
             {"ridge_bernoulli", cfg.bernoulli_ridge()},
             {"tol", cfg.tol},
             {"iterations", res.iterations},
             {"converged", res.converged},
             {"loglik", res.loglik_trace.back()},
             {"rank_collapsed", res.rank_collapsed},
             {"families1", gasso::io::families_to_json(data.b1.block.family)},
             {"families2", gasso::io::families_to_json(data.b2.block.family)},
             {"columns1", data.b1.columns},
             {"columns2", data.b2.columns},
             {"row_ids", data.b1.ids},
             {"id_name", data.b1.id_name},
             {"sigma_hat", {data.sigma_hat[0], data.sigma_hat[1]}},
             {"notes", res.notes}};
  gasso::io::write_archive(a.out, ar,
                           a.text ? gasso::io::ArchiveFormat::Text : gasso::io::ArchiveFormat::Binary);
  if (!a.trace.empty()) {
    std::ostringstream os;
    os << "iteration,loglik\n";
    for (std::size_t t = 0; t < res.loglik_trace.size(); ++t) {
      os << t << ',' << gasso::io::detail::format_double(res.loglik_trace[t]) << '\n';
    }
    write_text(a.trace, os.str());
  }
  std::cout << "ranks " << gasso::to_string(ranks) << ", mode " << gasso::to_string(cfg.mode)
            << ", iterations " << res.iterations << (res.converged ? " (converged)" : " (not converged)")
            << ", loglik " << std::setprecision(10) << res.loglik_trace.back() << '\n';
  for (const auto& n : res.notes) std::cout << "note: " << n << '\n';
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct AssocArgs {
  std::string model, out;
  Index permutations = 1000;
  std::uint64_t seed = 0;
  int threads = 0;
};

int run_assoc(const AssocArgs& a) {
  const auto ar = gasso::io::read_archive(a.model);
  const auto [T1, T2] = centered_thetas(ar.params);
  const auto res = gasso::permutation_test(T1, T2, a.permutations, a.seed, resolve_threads_flag(a.threads));
  json rep = {{"rho0", res.rho0},
              {"permutations", res.permutations},
              {"seed", res.seed},
              {"p_value", res.p_value},
              {"p_value_plain", res.p_value_plain},
              {"null_samples", res.null_samples}};
  if (!a.out.empty()) write_text(a.out, rep.dump(2) + "\n");
  std::cout << std::setprecision(6) << "rho0 " << res.rho0 << ", B " << res.permutations
            << ", p-value " << res.p_value << " (plain " << res.p_value_plain << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RanksArgs {
  DataArgs data;
  Index folds = 10, max_rank = 10;
  std::uint64_t seed = 0;
  int threads = 0;
  bool mean = false;
  std::string out_dir;
};

void write_cv_table(const fs::path& path, const gasso::CvRankResult& cv) {
  std::ostringstream os;
  os << "rank";
  for (Index l = 0; l < cv.scores.cols(); ++l) os << ",fold" << l + 1;
  os << ",overall\n";
  for (Index c = 0; c < cv.scores.rows(); ++c) {
    os << cv.candidates[static_cast<std::size_t>(c)];
    for (Index l = 0; l < cv.scores.cols(); ++l) os << ',' << gasso::io::detail::format_double(cv.scores(c, l));
    os << ',' << gasso::io::detail::format_double(cv.overall(c)) << '\n';
  }
  write_text(path, os.str());
}

int run_ranks(const RanksArgs& a) {
  const auto data = a.data.load();
  gasso::CvOptions opt;
  opt.threads = resolve_threads_flag(a.threads);
  if (a.mean) opt.aggregate = gasso::CvAggregate::Mean;
  const auto est = gasso::estimate_ranks(data.b1.block, data.b2.block, a.folds, a.max_rank, a.seed, opt);
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    write_cv_table(fs::path(a.out_dir) / "cv_block1.csv", est.cv1);
    write_cv_table(fs::path(a.out_dir) / "cv_block2.csv", est.cv2);
    write_cv_table(fs::path(a.out_dir) / "cv_joint.csv", est.cv0);
  }
  for (const auto& w : est.warnings) std::cout << "warning: " << w << '\n';
  std::cout << "centered ranks: block1 " << est.r1_star << ", block2 " << est.r2_star
            << ", concatenated " << est.r0_star << '\n'
            << "ranks " << gasso::to_string(est.ranks) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct AnnotateArgs {
  std::string model, input, out, probs;
  Index top_k = 10;
  std::optional<double> ridge;
};

int run_annotate(const AnnotateArgs& a) {
  const auto ar = gasso::io::read_archive(a.model);
  const auto& g = ar.params;
  const auto fam1 = gasso::io::families_from_meta(ar.meta, "families1", g.p1());
  const auto fam2 = gasso::io::families_from_meta(ar.meta, "families2", g.p2());
  for (auto f : fam2) {
    if (f != gasso::Family::Bernoulli) throw std::runtime_error("annotate needs a binary block 2");
  }
  const auto tags = string_list(ar.meta, "columns2", g.p2(), "tag");
  const auto in = gasso::io::read_csv(a.input);
  std::ostringstream os, ps;
  os << "id,tags\n";
  ps << in.id_name;
  for (const auto& t : tags) ps << ',' << t;
  ps << '\n';
  for (Index i = 0; i < in.values.rows(); ++i) {
    const auto res = gasso::annotate(g, in.values.row(i).transpose(), fam1, a.ridge.value_or(1e-3));
    const auto top = gasso::top_k_tags(res.probs, a.top_k, tags);
    os << in.ids[static_cast<std::size_t>(i)] << ',';
    for (std::size_t k = 0; k < top.size(); ++k) os << (k ? ";" : "") << top[k];
    os << '\n';
    ps << in.ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < res.probs.size(); ++j) ps << ',' << gasso::io::detail::format_double(res.probs(j));
    ps << '\n';
  }
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    write_text(a.out, os.str());
  }
  if (!a.probs.empty()) write_text(a.probs, ps.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct RetrieveArgs {
  std::string model, query, out;
  Index top_k = 10;
  std::optional<double> ridge, index_ridge;
};

int run_retrieve(const RetrieveArgs& a) {
  const auto ar = gasso::io::read_archive(a.model);
  const auto& g = ar.params;
  const auto ids = string_list(ar.meta, "row_ids", g.n(), "sample");
  const auto idx = gasso::build_score_index(g, a.index_ridge.value_or(-1.0));
  const auto q = gasso::io::read_csv(a.query);
  std::ostringstream os;
  os << "query,rank,sample,distance\n";
  for (Index i = 0; i < q.values.rows(); ++i) {
    const auto res = gasso::retrieve(g, idx, q.values.row(i).transpose(), a.ridge.value_or(1e-3));
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(a.top_k), res.order.size());
    for (std::size_t t = 0; t < k; ++t) {
      os << q.ids[static_cast<std::size_t>(i)] << ',' << t + 1 << ','
         << ids[static_cast<std::size_t>(res.order[t])] << ','
         << gasso::io::detail::format_double(res.distance[t]) << '\n';
    }
  }
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    write_text(a.out, os.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  int setting = 1;
  Index replicates = 50, p = 120;
  std::string modes = "full,onestep", ranks, out, summary, export_dir;
  std::optional<double> sparse;
  std::uint64_t seed = 1;
  int threads = 0;
  bool timing = false;
};

void export_dataset(const fs::path& dir, const gasso::sim::SettingSpec& spec) {
  fs::create_directories(dir);
  const auto g = gasso::sim::generate(spec);
  auto labels = [](const char* prefix, Index k) {
    std::vector<std::string> v;
    for (Index i = 0; i < k; ++i) v.push_back(prefix + std::to_string(i + 1));
    return v;
  };
  const auto ids = labels("s", spec.n);
  gasso::io::write_block(dir / "x1.csv", {g.d1, ids, labels("f", spec.p1), "id"});
  gasso::io::write_block(dir / "x2.csv", {g.d2, ids, labels("t", spec.p2), "id"});
  std::ostringstream m;
  m << "block1.path = x1.csv\nblock1.family = " << gasso::to_string(spec.family1) << '\n'
    << "block2.path = x2.csv\nblock2.family = " << gasso::to_string(spec.family2) << '\n'
    << "id_column = id\n";
  write_text(dir / "manifest.cfg", m.str());
  std::ostringstream r;
  r << "ranks " << gasso::to_string(spec.ranks()) << '\n';
  write_text(dir / "truth.txt", r.str());
}

int run_simulate(const SimulateArgs& a) {
  auto spec = gasso::sim::preset(gasso::sim::setting_from_int(a.setting), a.seed, a.p);
  if (a.sparse) spec = gasso::sim::sparsify(spec, *a.sparse);
  if (!a.export_dir.empty()) {
    export_dataset(a.export_dir, spec);
    std::cout << "wrote replicate-0 data to " << a.export_dir << '\n';
    if (a.replicates == 0) return 0;
  }
  std::vector<gasso::FitConfig> modes;
  std::stringstream ss(a.modes);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    gasso::FitConfig cfg;
    cfg.mode = gasso::fit_mode_from_string(tok);
    modes.push_back(cfg);
  }
  if (modes.empty()) throw std::invalid_argument("--mode lists no fitting modes");
  gasso::sim::BenchmarkOptions opt;
  opt.threads = resolve_threads_flag(a.threads);
  if (!a.ranks.empty()) opt.rank_override = parse_ranks(a.ranks);
  const auto res = gasso::sim::run_benchmark(spec, a.replicates, modes, opt);

  const auto& cols = gasso::sim::metric_columns();
  auto shown = [&](const std::string& name) { return a.timing || name != "time"; };
  std::ostringstream rows;
  rows << "mode,replicate";
  for (const auto& [name, get] : cols) {
    if (shown(name)) rows << ',' << name;
  }
  rows << '\n';
  for (const auto& m : res) {
    for (std::size_t t = 0; t < m.rows.size(); ++t) {
      rows << gasso::to_string(m.config.mode) << ',' << t;
      for (const auto& [name, get] : cols) {
        if (shown(name)) rows << ',' << gasso::io::detail::format_double(get(m.rows[t]));
      }
      rows << '\n';
    }
  }
  if (!a.out.empty()) write_text(a.out, rows.str());

  // Metric rows, one "median (MAD)" column per mode.
  std::ostringstream table, csv;
  table << std::left << std::setw(14) << "metric";
  csv << "metric";
  for (const auto& m : res) {
    table << std::setw(22) << gasso::to_string(m.config.mode);
    csv << ',' << gasso::to_string(m.config.mode) << "_median," << gasso::to_string(m.config.mode) << "_mad";
  }
  table << '\n';
  csv << '\n';
  for (const auto& [name, get] : cols) {
    if (!shown(name)) continue;
    table << std::setw(14) << name;
    csv << name;
    for (const auto& m : res) {
      const auto& s = m.get(name);
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(name == "rho_hat" || name.rfind("rel_", 0) == 0 ? 4 : 2)
           << s.median << " (" << s.mad << ")";
      table << std::setw(22) << cell.str();
      csv << ',' << gasso::io::detail::format_double(s.median) << ','
          << gasso::io::detail::format_double(s.mad);
    }
    table << '\n';
    csv << '\n';
  }
  if (!a.summary.empty()) write_text(a.summary, csv.str());
  std::cout << "setting " << a.setting << ", n " << spec.n << ", p " << spec.p1 << "/" << spec.p2
            << ", replicates " << a.replicates << '\n'
            << table.str();
  for (const auto& m : res) {
    for (const auto& f : m.failures) std::cout << "failed (" << gasso::to_string(m.config.mode) << "): " << f << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  std::string model;
  double tol = 1e-6;
};

int run_check(const CheckArgs& a) {
  const auto ar = gasso::io::read_archive(a.model);
  const auto rep = gasso::identifiability_report(ar.params, a.tol);
  for (const auto& c : rep.checks) {
    std::cout << (c.pass ? "ok    " : "FAIL  ") << std::left << std::setw(32) << c.name
              << std::scientific << std::setprecision(3) << c.violation << '\n';
  }
  std::cout << std::defaultfloat << (rep.all_pass() ? "all conditions hold" : "some conditions violated")
            << " (tol " << a.tol << ")\n";
  return rep.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gasso: association analysis of two data blocks with exponential-family margins"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit the model and write an archive");
  fit.data.add(fit_cmd);
  fit_cmd->add_option("--ranks", fit.ranks, "joint and individual ranks r0,r1,r2")->required();
  fit_cmd->add_option("--mode", fit.mode, "full | onestep | sparse")->capture_default_str();
  fit_cmd->add_option("--ridge", fit.ridge, "ridge for Bernoulli sub-problems (default 1e-3 full, 0 one-step)");
  fit_cmd->add_option("--sparse-fraction", fit.sparse_fraction, "sparse mode: zero this fraction of loadings per block");
  fit_cmd->add_option("--tol", fit.tol)->capture_default_str();
  fit_cmd->add_option("--max-iter", fit.max_iter, "0 picks the mode default")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed)->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads, "0: GASSO_THREADS or 1");
  fit_cmd->add_option("--out", fit.out, "archive path")->capture_default_str();
  fit_cmd->add_flag("--text", fit.text, "write the text archive (a directory of CSVs)");
  fit_cmd->add_option("--trace", fit.trace, "log-likelihood trace CSV");

  AssocArgs assoc;
  auto* assoc_cmd = app.add_subcommand("assoc-test", "permutation test of the association coefficient");
  assoc_cmd->add_option("--model", assoc.model)->required();
  assoc_cmd->add_option("--permutations", assoc.permutations)->capture_default_str();
  assoc_cmd->add_option("--seed", assoc.seed)->capture_default_str();
  assoc_cmd->add_option("--threads", assoc.threads);
  assoc_cmd->add_option("--out", assoc.out, "JSON report");

  RanksArgs ranks;
  auto* ranks_cmd = app.add_subcommand("ranks", "choose ranks by cross-validation");
  ranks.data.add(ranks_cmd);
  ranks_cmd->add_option("--folds", ranks.folds)->capture_default_str();
  ranks_cmd->add_option("--max-rank", ranks.max_rank)->capture_default_str();
  ranks_cmd->add_option("--seed", ranks.seed)->capture_default_str();
  ranks_cmd->add_option("--threads", ranks.threads);
  ranks_cmd->add_flag("--mean", ranks.mean, "aggregate folds by mean instead of median");
  ranks_cmd->add_option("--out-dir", ranks.out_dir, "directory for CV score tables");

  AnnotateArgs ann;
  auto* ann_cmd = app.add_subcommand("annotate", "predict block-2 tags for new block-1 samples");
  ann_cmd->add_option("--model", ann.model)->required();
  ann_cmd->add_option("--input", ann.input, "CSV of new block-1 samples")->required();
  ann_cmd->add_option("--top-k", ann.top_k)->capture_default_str();
  ann_cmd->add_option("--ridge", ann.ridge, "ridge for Bernoulli features (default 1e-3)");
  ann_cmd->add_option("--out", ann.out, "CSV of top tags (stdout if omitted)");
  ann_cmd->add_option("--probs", ann.probs, "CSV of all tag probabilities");

  RetrieveArgs ret;
  auto* ret_cmd = app.add_subcommand("retrieve", "rank training samples for binary tag queries");
  ret_cmd->add_option("--model", ret.model)->required();
  ret_cmd->add_option("--query", ret.query, "CSV of 0/1 tag queries")->required();
  ret_cmd->add_option("--top-k", ret.top_k)->capture_default_str();
  ret_cmd->add_option("--ridge", ret.ridge, "ridge for the query fit (default 1e-3)");
  ret_cmd->add_option("--index-ridge", ret.index_ridge, "covariance ridge (default 1e-6 trace/dim)");
  ret_cmd->add_option("--out", ret.out, "ranked list CSV (stdout if omitted)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run a simulation benchmark");
  sim_cmd->add_option("--setting", sim.setting, "1..4")->check(CLI::Range(1, 4))->capture_default_str();
  sim_cmd->add_option("--replicates", sim.replicates)->capture_default_str();
  sim_cmd->add_option("--mode", sim.modes, "comma-separated fitting modes")->capture_default_str();
  sim_cmd->add_option("--ranks", sim.ranks, "fit with these ranks instead of the true ones");
  sim_cmd->add_option("--p", sim.p, "features per block")->capture_default_str();
  sim_cmd->add_option("--sparse", sim.sparse, "zero this fraction of true joint loadings");
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads);
  sim_cmd->add_flag("--timing", sim.timing, "include wall-clock time (not reproducible)");
  sim_cmd->add_option("--out", sim.out, "per-replicate metrics CSV");
  sim_cmd->add_option("--summary", sim.summary, "median/MAD summary CSV");
  sim_cmd->add_option("--export", sim.export_dir,
                      "write replicate-0 blocks and a manifest to this directory (with --replicates 0, only that)");

  CheckArgs chk;
  auto* chk_cmd = app.add_subcommand("check", "report identifiability conditions of an archive");
  chk_cmd->add_option("--model", chk.model)->required();
  chk_cmd->add_option("--tol", chk.tol)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fit_cmd) return run_fit(fit);
    if (*assoc_cmd) return run_assoc(assoc);
    if (*ranks_cmd) return run_ranks(ranks);
    if (*ann_cmd) return run_annotate(ann);
    if (*ret_cmd) return run_retrieve(ret);
    if (*sim_cmd) return run_simulate(sim);
    if (*chk_cmd) return run_check(chk);
  } catch (const std::exception& e) {
    std::cerr << "gasso: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
