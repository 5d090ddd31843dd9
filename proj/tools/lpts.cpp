// Command-line front end: stream generation and ingestion, sketching,
// snapshot merging, extraction, sampling, coreset construction, reduced
// solves, and the experiment harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lpts/coreset.hpp"
#include "lpts/experiment.hpp"
#include "lpts/sample_io.hpp"
#include "lpts/stream.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const json& j, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

void save_matrix_csv(const lpts::Matrixd& M, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%s%.17g", j ? "," : "", M(i, j));
      f << buf;
    }
    f << "\n";
  }
}

int cmd_gen(const std::string& kind, std::uint32_t n, std::uint32_t d, double value,
            double heavy_fraction, double p, std::uint32_t r, std::uint64_t seed,
            const std::string& out_dir) {
  fs::create_directories(out_dir);
  lpts::SyntheticResult res;
  json manifest;
  if (kind == "identical-rows") {
    res = lpts::gen_identical_rows(n, d, value, seed);
  } else if (kind == "gaussian") {
    res = lpts::gen_gaussian(n, d, seed);
  } else if (kind == "harmonic-demo") {
    res = lpts::gen_harmonic_demo(n, seed);
  } else if (kind == "planted-heavy") {
    res = lpts::gen_planted_heavy(n, d, p, heavy_fraction, r, seed);
    manifest["heavy_index"] = res.heavy_index;
  } else {
    std::cerr << "unknown kind '" << kind << "'\n";
    return 1;
  }
  lpts::stream_io::save_text(res.stream, (fs::path(out_dir) / "stream.txt").string());
  save_matrix_csv(res.sidecar, (fs::path(out_dir) / "sidecar.csv").string());
  manifest["kind"] = kind;
  manifest["n"] = res.stream.header.n;
  manifest["d"] = res.stream.header.d;
  manifest["seed"] = seed;
  manifest["format_version"] = 1;
  write_json(manifest, (fs::path(out_dir) / "manifest.json").string());
  std::cout << "wrote " << res.stream.updates.size() << " updates to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"turnstile lp sampling toolkit"};
  app.require_subcommand(1);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate a synthetic stream plus exact sidecar");
  std::string gen_kind = "gaussian", gen_out = "run";
  std::uint32_t gen_n = 1000, gen_d = 4, gen_r = 4096;
  double gen_value = 1.0, gen_heavy = 1.0, gen_p = 2.0;
  std::uint64_t gen_seed = 1;
  gen->add_option("--kind", gen_kind, "planted-heavy|identical-rows|gaussian|harmonic-demo");
  gen->add_option("--n", gen_n);
  gen->add_option("--d", gen_d);
  gen->add_option("--value", gen_value, "row value for identical-rows");
  gen->add_option("--heavy-fraction", gen_heavy, "planted mass as a fraction of the tail mass");
  gen->add_option("--p", gen_p);
  gen->add_option("--r", gen_r, "bucket count assumed by the planted instance");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out, "output directory");

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "fold a numeric csv into a turnstile stream");
  std::string ing_csv, ing_out = "stream.txt", ing_fold = "logistic";
  long long ing_label = 0;
  double ing_p = 1.0;
  ingest->add_option("--csv", ing_csv)->required();
  ingest->add_option("--label-col", ing_label, "0-based label column");
  ingest->add_option("--fold", ing_fold, "lp|relu|logistic|probit");
  ingest->add_option("--p", ing_p);
  ingest->add_option("--out", ing_out);

  // ---- sketch ----
  auto* sketch = app.add_subcommand("sketch", "sketch a stream into a snapshot file");
  std::string sk_stream, sk_out = "sketch.bin";
  std::uint32_t sk_r = 0, sk_s = 0, sk_tag = 0, sk_k = 100;
  double sk_p = 2.0, sk_eps = 0.25, sk_delta = 0.05, sk_gamma = 0.1;
  std::uint64_t sk_seed = 1;
  std::string sk_mode = "practical";
  sketch->add_option("--stream", sk_stream)->required();
  sketch->add_option("--r", sk_r, "buckets (0 = derive from mode)");
  sketch->add_option("--s", sk_s, "repetitions (0 = derive from mode)");
  sketch->add_option("--k", sk_k, "target size used by parameter presets");
  sketch->add_option("--gamma", sk_gamma, "heaviness fraction for theory presets");
  sketch->add_option("--p", sk_p);
  sketch->add_option("--eps", sk_eps);
  sketch->add_option("--delta", sk_delta);
  sketch->add_option("--mode", sk_mode, "theory|practical");
  sketch->add_option("--seed", sk_seed);
  sketch->add_option("--tag", sk_tag, "instance tag");
  sketch->add_option("--out", sk_out);

  // ---- merge ----
  auto* merge = app.add_subcommand("merge", "sum snapshot files (same config and seeds)");
  std::string mg_out = "merged.bin";
  std::vector<std::string> mg_inputs;
  merge->add_option("--out", mg_out);
  merge->add_option("inputs", mg_inputs, "snapshot files")->required()->expected(-2);

  // ---- extract ----
  auto* extract = app.add_subcommand("extract", "extract heavy rows from a snapshot");
  std::string ex_snapshot, ex_out = "heavy.csv", ex_mode = "theory";
  bool ex_scan_all = false;
  extract->add_option("--snapshot", ex_snapshot)->required();
  extract->add_option("--mode", ex_mode, "theory|practical");
  extract->add_flag("--scan-all", ex_scan_all, "loop over the full declared universe");
  extract->add_option("--out", ex_out);

  // ---- sample ----
  auto* sample = app.add_subcommand("sample", "lp norm sampling over a stream");
  std::string sm_stream, sm_out = "sample.csv", sm_mode = "practical", sm_conditioner;
  bool sm_plain = false, sm_auto_cond = false;
  std::uint32_t sm_k = 100, sm_r = 0, sm_s = 0;
  double sm_p = 2.0, sm_eps = 0.25, sm_delta = 0.05;
  std::uint64_t sm_seed = 1;
  sample->add_option("--stream", sm_stream)->required();
  sample->add_option("--k", sm_k);
  sample->add_option("--p", sm_p);
  sample->add_option("--eps", sm_eps);
  sample->add_option("--delta", sm_delta);
  sample->add_option("--r", sm_r);
  sample->add_option("--s", sm_s);
  sample->add_option("--mode", sm_mode, "theory|practical");
  sample->add_flag("--plain", sm_plain, "single-copy variant returning exactly top-k");
  sample->add_option("--conditioner", sm_conditioner, "conditioner csv from a previous run");
  sample->add_flag("--auto-condition", sm_auto_cond, "build the conditioner in the same pass");
  sample->add_option("--seed", sm_seed);
  sample->add_option("--out", sm_out);

  // ---- coreset ----
  auto* coreset = app.add_subcommand("coreset", "build a regression coreset from a stream");
  std::string cs_stream, cs_out = "coreset_run", cs_loss = "lp", cs_mode = "practical";
  std::uint32_t cs_k = 100, cs_r = 0, cs_s = 0;
  double cs_p = 1.0, cs_eps = 0.25, cs_mu = 1.0, cs_delta = 0.05;
  std::uint64_t cs_seed = 1;
  bool cs_no_conditioner = false, cs_no_uniform = false;
  coreset->add_option("--stream", cs_stream)->required();
  coreset->add_option("--loss", cs_loss, "lp|relu|logistic|probit");
  coreset->add_option("--p", cs_p);
  coreset->add_option("--k", cs_k);
  coreset->add_option("--eps", cs_eps);
  coreset->add_option("--mu", cs_mu, "complexity parameter (theory sizing only)");
  coreset->add_option("--delta", cs_delta);
  coreset->add_option("--r", cs_r);
  coreset->add_option("--s", cs_s);
  coreset->add_option("--mode", cs_mode, "theory|practical");
  coreset->add_flag("--no-conditioner", cs_no_conditioner);
  coreset->add_flag("--no-uniform", cs_no_uniform);
  coreset->add_option("--seed", cs_seed);
  coreset->add_option("--out", cs_out, "output directory");

  // ---- solve ----
  auto* solve = app.add_subcommand("solve", "solve the reduced problem of a coreset csv");
  std::string sv_coreset, sv_out = "solution.json", sv_loss = "lp";
  double sv_p = 1.0;
  solve->add_option("--coreset", sv_coreset)->required();
  solve->add_option("--loss", sv_loss);
  solve->add_option("--p", sv_p);
  solve->add_option("--out", sv_out);

  // ---- experiment ----
  auto* exp = app.add_subcommand("experiment", "approximation-ratio harness");
  std::string xp_loss = "logistic", xp_out = "experiment_run", xp_mode = "practical", xp_manifest;
  std::uint32_t xp_n = 5000, xp_d = 4, xp_reps = 21;
  double xp_p = 1.0, xp_eps = 0.25;
  std::uint64_t xp_seed = 1;
  std::vector<std::uint32_t> xp_kgrid = {100, 200, 400, 800};
  std::vector<std::string> xp_baselines = {"turnstile", "offline-leverage"};
  exp->add_option("--loss", xp_loss);
  exp->add_option("--p", xp_p);
  exp->add_option("--n", xp_n);
  exp->add_option("--d", xp_d);
  exp->add_option("--k-grid", xp_kgrid)->delimiter(',');
  exp->add_option("--reps", xp_reps);
  exp->add_option("--eps", xp_eps);
  exp->add_option("--mode", xp_mode);
  exp->add_option("--baselines", xp_baselines)->delimiter(',');
  exp->add_option("--seed", xp_seed);
  exp->add_option("--from-manifest", xp_manifest, "re-run a previous experiment exactly");
  exp->add_option("--out", xp_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      return cmd_gen(gen_kind, gen_n, gen_d, gen_value, gen_heavy, gen_p, gen_r, gen_seed, gen_out);
    }

    if (*ingest) {
      std::ifstream f(ing_csv);
      if (!f) throw std::runtime_error("cannot open " + ing_csv);
      const lpts::LossKind loss = lpts::LossKind::parse(ing_fold, ing_p);
      lpts::Stream s = lpts::ingest_csv(f, ing_label, loss, ing_csv);
      lpts::stream_io::save_text(s, ing_out);
      std::cout << "wrote " << s.updates.size() << " updates (n=" << s.header.n
                << ", d=" << s.header.d << ") to " << ing_out << "\n";
      return 0;
    }

    if (*sketch) {
      lpts::Stream s = lpts::stream_io::load(sk_stream);
      lpts::SketchConfig cfg;
      cfg.n = s.header.n;
      cfg.d = s.header.d;
      cfg.p = sk_p;
      cfg.eps = sk_eps;
      const auto mode = lpts::param_mode_from_string(sk_mode);
      cfg.r = sk_r ? sk_r
                   : (mode == lpts::ParamMode::kTheory
                          ? lpts::presets::theory_r_heavy(sk_gamma, sk_eps, sk_p)
                          : lpts::presets::practical_r(sk_k, cfg.n));
      cfg.s = sk_s ? sk_s
                   : (mode == lpts::ParamMode::kTheory ? lpts::presets::theory_s_heavy(cfg.n, sk_delta)
                                                       : lpts::presets::practical_s(cfg.n));
      if (std::uint64_t(cfg.r) * cfg.s * cfg.d > (1ull << 27)) {
        std::cerr << "warning: sketch holds " << std::uint64_t(cfg.r) * cfg.s * cfg.d
                  << " doubles; consider --r/--s overrides\n";
      }
      lpts::SketchStated st(cfg, lpts::SeedSet{sk_seed, sk_tag});
      for (const auto& u : s.updates) st.apply(u);
      lpts::snapshot::save(st, sk_out);
      std::cout << "sketched " << st.update_count() << " updates into r=" << cfg.r
                << " s=" << cfg.s << " -> " << sk_out << "\n";
      return 0;
    }

    if (*merge) {
      lpts::SketchStated acc = lpts::snapshot::load(mg_inputs.front());
      for (std::size_t i = 1; i < mg_inputs.size(); ++i) {
        acc.merge_from(lpts::snapshot::load(mg_inputs[i]));
      }
      lpts::snapshot::save(acc, mg_out);
      std::cout << "merged " << mg_inputs.size() << " snapshots -> " << mg_out << "\n";
      return 0;
    }

    if (*extract) {
      lpts::SketchStated st = lpts::snapshot::load(ex_snapshot);
      lpts::ExtractOptions opts;
      opts.mode = lpts::param_mode_from_string(ex_mode);
      opts.scan_all = ex_scan_all;
      auto list = lpts::extract_heavy(st, opts);
      std::ofstream f(ex_out);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "# m0=%.17g\n", list.threshold_m0);
      f << buf << "index,norm_p,median_v,row...\n";
      for (const auto& e : list.entries) {
        std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g", e.index, e.norm_p, e.median_v);
        f << buf;
        for (Eigen::Index c = 0; c < e.row.size(); ++c) {
          std::snprintf(buf, sizeof(buf), ",%.17g", e.row(c));
          f << buf;
        }
        f << "\n";
      }
      std::cout << "extracted " << list.entries.size() << " rows (m0=" << list.threshold_m0
                << ") -> " << ex_out << "\n";
      return 0;
    }

    if (*sample) {
      lpts::Stream s = lpts::stream_io::load(sm_stream);
      lpts::SamplerConfig cfg;
      cfg.n = s.header.n;
      cfg.d = s.header.d;
      cfg.k = sm_k;
      cfg.p = sm_p;
      cfg.eps = sm_eps;
      cfg.delta = sm_delta;
      cfg.r = sm_r;
      cfg.s = sm_s;
      cfg.mode = sm_plain ? lpts::SamplerMode::kPlain : lpts::SamplerMode::kModified;
      cfg.params = lpts::param_mode_from_string(sm_mode);
      lpts::LpSamplerd sampler(cfg, lpts::SeedSet{sm_seed, 0});
      std::optional<lpts::EmbeddingSketchd> embed;
      if (sm_auto_cond) {
        embed.emplace(lpts::EmbeddingConfig::make(cfg.n, cfg.d, sm_p),
                      lpts::SeedSet{sm_seed, lpts::tags::kEmbedding});
      }
      for (const auto& u : s.updates) {
        sampler.apply(u);
        if (embed) embed->apply(u);
      }
      lpts::WeightedSampled ws;
      if (!sm_conditioner.empty()) {
        auto cond = lpts::load_conditioner<double>(sm_conditioner);
        ws = sampler.finalize(&cond.R_inv, &cond.R);
      } else if (embed) {
        auto cond = lpts::finalize_conditioner(*embed);
        lpts::save_conditioner(cond, sm_out + ".conditioner.csv");
        ws = sampler.finalize(&cond.R_inv, &cond.R);
      } else {
        ws = sampler.finalize();
      }
      lpts::save_sample_csv(ws, sm_out, sm_p, sm_k, sm_seed, sm_plain ? "plain" : "modified");
      std::cout << "sampled " << ws.entries.size() << " rows (alpha=" << ws.alpha << ") -> "
                << sm_out << "\n";
      return 0;
    }

    if (*coreset) {
      lpts::Stream s = lpts::stream_io::load(cs_stream);
      lpts::CoresetOptions opts;
      opts.loss = lpts::LossKind::parse(cs_loss, cs_p);
      opts.k = cs_k;
      opts.eps = cs_eps;
      opts.mu = cs_mu;
      opts.delta = cs_delta;
      opts.params = lpts::param_mode_from_string(cs_mode);
      opts.use_conditioner = !cs_no_conditioner;
      opts.uniform_mix = !cs_no_uniform;
      opts.r = cs_r;
      opts.s = cs_s;
      opts.seed = cs_seed;
      fs::create_directories(cs_out);
      const auto t0 = std::chrono::steady_clock::now();
      lpts::Coresetd cs = lpts::build_coreset(s.header, s.replayer(), opts);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      lpts::WeightedSampled ws;
      ws.alpha = cs.metrics.count("alpha_p") ? cs.metrics["alpha_p"] : 0.0;
      for (Eigen::Index i = 0; i < cs.rows.rows(); ++i) {
        lpts::SampleEntry<double> e;
        e.index = std::uint32_t(i);
        e.row = cs.rows.row(i);
        e.weight = cs.weights(i);
        e.prob_estimate = 1.0 / cs.weights(i);
        ws.entries.push_back(std::move(e));
      }
      lpts::save_sample_csv(ws, (fs::path(cs_out) / "coreset.csv").string(), cs_p, cs_k, cs_seed,
                            cs_mode);
      json manifest;
      manifest["format_version"] = 1;
      manifest["loss"] = cs_loss;
      manifest["p"] = cs_p;
      manifest["k"] = cs_k;
      manifest["eps"] = cs_eps;
      manifest["mu"] = cs_mu;
      manifest["mode"] = cs_mode;
      manifest["seed"] = cs_seed;
      manifest["n"] = s.header.n;
      manifest["d"] = s.header.d;
      manifest["build_seconds"] = seconds;
      for (const auto& [key, val] : cs.metrics) manifest[key] = val;
      write_json(manifest, (fs::path(cs_out) / "manifest.json").string());
      std::cout << "coreset of " << cs.rows.rows() << " rows -> " << cs_out << "\n";
      return 0;
    }

    if (*solve) {
      lpts::WeightedSampled ws = lpts::load_sample_csv(sv_coreset);
      if (ws.entries.empty()) throw std::runtime_error("empty coreset");
      const lpts::LossKind loss = lpts::LossKind::parse(sv_loss, sv_p);
      const auto d = ws.entries.front().row.size();
      lpts::Matrixd rows(ws.entries.size(), d);
      lpts::Vectord weights(ws.entries.size());
      for (std::size_t i = 0; i < ws.entries.size(); ++i) {
        rows.row(Eigen::Index(i)) = ws.entries[i].row;
        weights(Eigen::Index(i)) = ws.entries[i].weight;
      }
      lpts::SolveOptions sopts;
      sopts.fix_last_coordinate = loss.kind == lpts::LossKind::kLp;
      auto res = lpts::solve_reduced(rows, weights, loss, sopts);
      json out;
      out["objective"] = res.objective;
      out["converged"] = res.converged;
      out["iterations"] = res.iterations;
      out["z"] = std::vector<double>(res.z.data(), res.z.data() + res.z.size());
      write_json(out, sv_out);
      std::cout << "objective " << res.objective << (res.converged ? "" : " (not converged)")
                << " -> " << sv_out << "\n";
      return 0;
    }

    if (*exp) {
      lpts::ExperimentConfig cfg;
      if (!xp_manifest.empty()) {
        std::ifstream f(xp_manifest);
        if (!f) throw std::runtime_error("cannot open " + xp_manifest);
        json j;
        f >> j;
        cfg = lpts::experiment_from_manifest(j);
      } else {
        cfg.loss = lpts::LossKind::parse(xp_loss, xp_p);
        cfg.n = xp_n;
        cfg.d = xp_d;
        cfg.k_grid = xp_kgrid;
        cfg.repetitions = xp_reps;
        cfg.seed = xp_seed;
        cfg.eps = xp_eps;
        cfg.params = lpts::param_mode_from_string(xp_mode);
        cfg.baselines = xp_baselines;
      }
      cfg.out_dir = xp_out;
      auto result = lpts::run_experiment(cfg);
      std::cout << "k,method,median_ratio\n";
      for (const auto& row : result.rows) {
        std::cout << row.k << "," << row.method << "," << row.median_ratio << "\n";
      }
      std::cout << "results -> " << result.csv_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
