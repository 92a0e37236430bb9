// Command line driver: dataset synthesis, training, evaluation, attacks,
// sweeps, bound audits and report aggregation. Every run writes a manifest
// carrying the producing config hash.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "smug/config.hpp"
#include "smug/csvio.hpp"
#include "smug/eval.hpp"
#include "smug/manifest.hpp"
#include "smug/rng.hpp"

namespace fs = std::filesystem;
using namespace smug;

namespace {

struct RunGuard {
  RunManifest manifest;
  std::string dir, name;
  bool finalized = false;

  RunGuard(std::string out_dir, std::string command, const ExperimentConfig& cfg)
      : dir(std::move(out_dir)), name(std::move(command)) {
    fs::create_directories(dir);
    manifest.command = name;
    manifest.config_hash = cfg.raw.hash();
    manifest.master_seed = cfg.master_seed;
    manifest.started_at = iso_timestamp_now();
    write_manifest(dir, name, manifest);
  }
  void output(const std::string& f) { manifest.outputs.push_back(f); }
  void done() {
    manifest.status = "complete";
    manifest.finished_at = iso_timestamp_now();
    write_manifest(dir, name, manifest);
    finalized = true;
  }
  ~RunGuard() {
    if (!finalized) {
      manifest.status = "failed";
      manifest.finished_at = iso_timestamp_now();
      write_manifest(dir, name, manifest);
    }
  }
};

std::vector<TrainItem> make_items(const std::vector<ComplexImage>& targets,
                                  const ForwardOperator& A, const ExperimentConfig& cfg) {
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, {rng_stream::meas, i});
    items.push_back({simulate_measurements(targets[i], A, cfg.meas_noise_sigma, seed),
                     targets[i]});
  }
  return items;
}

void write_train_csv(const std::string& path, const std::vector<EpochRow>& log,
                     const ExperimentConfig& cfg) {
  CsvWriter w(path, {"epoch", "total", "recon", "ustab", "wall_seconds"}, cfg.raw.hash(),
              kCodeVersion);
  for (const auto& r : log)
    w.write_row({CsvWriter::fmt(static_cast<long>(r.epoch)), CsvWriter::fmt(r.total),
                 CsvWriter::fmt(r.recon), CsvWriter::fmt(r.ustab),
                 CsvWriter::fmt(r.wall_seconds)});
}

nlohmann::json config_snapshot(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["config_hash"] = cfg.raw.hash();
  j["master_seed"] = cfg.master_seed;
  j["canonical_config"] = cfg.raw.canonical();
  return j;
}

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& out) {
  RunGuard run(out, "gen-data", cfg);
  PhantomSpec spec = cfg.phantom;
  auto write_split = [&](const char* name, int n, std::uint64_t salt) {
    PhantomSpec s = spec;
    s.seed = derive_seed(cfg.master_seed, {rng_stream::phantom, salt});
    auto imgs = generate_phantoms(s, n);
    nlohmann::json meta = config_snapshot(cfg);
    meta["split"] = name;
    const std::string file = out + "/" + name + ".bin";
    save_dataset(file, imgs, meta);
    run.output(file);
  };
  write_split("train", cfg.n_train, 1);
  write_split("val", cfg.n_val, 2);
  write_split("test", cfg.n_test, 3);
  run.done();
  return 0;
}

int cmd_pretrain(const ExperimentConfig& cfg, const std::string& data, const std::string& out) {
  RunGuard run(out, "pretrain", cfg);
  auto targets = load_dataset(data + "/train.bin");
  TrainConfig tc = cfg.pretrain_cfg;
  std::vector<EpochRow> log;
  fs::create_directories(out + "/epochs");
  DenoiserNet net = pretrain(targets, cfg.denoiser_spec, tc, &log,
                             [&](int epoch, const TrainedModels& m) {
                               save_models(out + "/epochs/pretrain_epoch" +
                                               std::to_string(epoch) + ".ckpt",
                                           "modl", m.denoiser, nullptr, nullptr,
                                           config_snapshot(cfg));
                             });
  nlohmann::json meta = config_snapshot(cfg);
  meta["stage"] = "pretrain";
  save_models(out + "/pretrain.ckpt", "modl", net, nullptr, nullptr, meta);
  write_train_csv(out + "/train_pretrain.csv", log, cfg);
  run.output(out + "/pretrain.ckpt");
  run.output(out + "/train_pretrain.csv");
  run.done();
  return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& data, const std::string& pre,
                 const std::string& mode_name, const std::string& out) {
  RunGuard run(out, "finetune-" + mode_name, cfg);
  auto targets = load_dataset(data + "/train.bin");
  const ForwardOperator A{cfg.make_mask(targets[0].height, targets[0].width)};
  auto items = make_items(targets, A, cfg);

  FinetuneOptions opt;
  opt.mode = train_mode_from_name(mode_name);
  opt.unroll = cfg.unroll;
  opt.encoder_spec = cfg.encoder_spec;
  opt.ista_spec = cfg.ista_spec;

  DenoiserNet theta_pre = pre.empty() ? init_denoiser(cfg.denoiser_spec, cfg.train.seed)
                                      : load_models(pre).denoiser;
  TrainConfig tc = cfg.train;
  // training-time smoothing uses the train section's sigma/T
  fs::create_directories(out + "/epochs");
  TrainedModels models =
      finetune(items, A, theta_pre, tc, opt, [&](int epoch, const TrainedModels& m) {
        save_models(out + "/epochs/" + mode_name + "_epoch" + std::to_string(epoch) + ".ckpt",
                    mode_name, m.denoiser, m.encoder ? &*m.encoder : nullptr,
                    m.ista ? &*m.ista : nullptr, config_snapshot(cfg));
      });

  nlohmann::json meta = config_snapshot(cfg);
  meta["mode"] = mode_name;
  meta["smoothing"] = {{"sigma", cfg.smoothing.sigma}, {"samples", cfg.smoothing.samples}};
  save_models(out + "/" + mode_name + ".ckpt", mode_name, models.denoiser,
              models.encoder ? &*models.encoder : nullptr, models.ista ? &*models.ista : nullptr,
              meta);
  write_train_csv(out + "/train_" + mode_name + ".csv", models.log, cfg);
  run.output(out + "/" + mode_name + ".ckpt");
  run.output(out + "/train_" + mode_name + ".csv");
  run.done();
  return 0;
}

EvalContext make_eval_context(const ExperimentConfig& cfg,
                              const std::vector<ComplexImage>& targets) {
  EvalContext ctx;
  ctx.A = ForwardOperator{cfg.make_mask(targets[0].height, targets[0].width)};
  ctx.targets = targets;
  ctx.meas_noise_sigma = cfg.meas_noise_sigma;
  ctx.eval_noise_sigma = cfg.eval_noise_sigma;
  ctx.attack = cfg.attack;
  ctx.seed = cfg.master_seed;
  return ctx;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& data, const std::string& models_dir,
             const std::string& out) {
  RunGuard run(out, "eval", cfg);
  auto targets = load_dataset(data + "/test.bin");
  EvalContext ctx = make_eval_context(cfg, targets);
  for (const std::string& method : cfg.methods) {
    MethodModels m = load_models(models_dir + "/" + method + ".ckpt");
    auto rows = evaluate_method(m, ctx, cfg.unroll, cfg.smoothing);
    const std::string file = out + "/eval_" + method + ".csv";
    CsvWriter w(file, eval_csv_header(), cfg.raw.hash(), kCodeVersion);
    for (const auto& r : rows) w.write_row(eval_csv_row(r));
    run.output(file);
  }
  run.done();
  return 0;
}

int cmd_attack(const ExperimentConfig& cfg, const std::string& data, const std::string& ckpt,
               const std::string& out) {
  RunGuard run(out, "attack", cfg);
  auto targets = load_dataset(data + "/test.bin");
  MethodModels m = load_models(ckpt);
  const ForwardOperator A{cfg.make_mask(targets[0].height, targets[0].width)};
  const std::string file = out + "/attack_" + m.name + ".csv";
  const std::string trace_file = out + "/trace_" + m.name + ".csv";
  CsvWriter w(file, {"method", "item", "epsilon", "clean_objective", "best_objective", "steps"},
              cfg.raw.hash(), kCodeVersion);
  CsvWriter tw(trace_file, trace_csv_header(), cfg.raw.hash(), kCodeVersion);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::uint64_t item_seed = derive_seed(cfg.master_seed, {rng_stream::eval, i});
    KSpaceData y = simulate_measurements(targets[i], A, cfg.meas_noise_sigma, item_seed);
    ReconSpec spec = make_spec(m, cfg.unroll, cfg.smoothing);
    spec.smoothing.seed = derive_seed(item_seed, {rng_stream::smooth});
    AttackConfig ac = cfg.attack;
    ac.seed = derive_seed(item_seed, {rng_stream::attack});
    PerturbationResult res = pgd_attack(spec, A, y, targets[i], ac);
    w.write_row({m.name, CsvWriter::fmt(static_cast<long>(i)), CsvWriter::fmt(res.epsilon),
                 CsvWriter::fmt(res.history.front()), CsvWriter::fmt(res.objective),
                 CsvWriter::fmt(static_cast<long>(ac.steps))});
    // per-iterate trace of the perturbed reconstruction (norms, CG residuals)
    KSpaceData y_adv = y;
    axpy(1.0, res.delta.re, y_adv.re);
    axpy(1.0, res.delta.im, y_adv.im);
    for (const auto& row : trace_csv_rows(m.name, static_cast<int>(i),
                                          reconstruct(spec, A, y_adv)))
      tw.write_row(row);
  }
  run.output(file);
  run.output(trace_file);
  run.done();
  return 0;
}

std::vector<double> default_grid(SweepKind kind) {
  switch (kind) {
    case SweepKind::epsilon: return {0.0, 0.01, 0.02, 0.04, 0.08};
    case SweepKind::sigma: return {0.005, 0.01, 0.02, 0.05};
    case SweepKind::accel: return {2.0, 4.0, 8.0};
    case SweepKind::unroll_steps: return {4, 8, 12, 16};
    case SweepKind::mc_samples: return {1, 2, 4, 8, 16};
  }
  return {};
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& data, const std::string& models_dir,
              const std::string& kind_name, std::vector<double> grid, int max_items,
              const std::string& out) {
  RunGuard run(out, "sweep-" + kind_name, cfg);
  const SweepKind kind = sweep_kind_from_name(kind_name);
  if (grid.empty()) grid = default_grid(kind);

  SweepContext ctx;
  ctx.cfg = cfg;
  ctx.targets = load_dataset(data + "/test.bin");
  if (max_items > 0 && static_cast<std::size_t>(max_items) < ctx.targets.size())
    ctx.targets.resize(static_cast<std::size_t>(max_items));
  for (const std::string& method : cfg.methods)
    ctx.methods.push_back(load_models(models_dir + "/" + method + ".ckpt"));

  auto rows = sweep(kind, grid, ctx);
  const std::string file = out + "/sweep_" + kind_name + ".csv";
  CsvWriter w(file, metrics_csv_header(), cfg.raw.hash(), kCodeVersion);
  for (const auto& r : rows) w.write_row(metrics_csv_row(r));
  run.output(file);
  run.done();
  return 0;
}

int cmd_bound_check(const ExperimentConfig& cfg, const std::string& data, const std::string& ckpt,
                    int n_random, int n_items, const std::string& out) {
  RunGuard run(out, "bound-check", cfg);
  auto targets = load_dataset(data + "/test.bin");
  if (n_items > 0 && static_cast<std::size_t>(n_items) < targets.size())
    targets.resize(static_cast<std::size_t>(n_items));
  MethodModels m = load_models(ckpt);
  const std::size_t size = targets[0].height;
  const ForwardOperator A{cfg.make_mask(size, size)};

  const double alpha = alpha_constant(A, 1.0).value;
  const double opnorm = spectral_norm_forward(A).value;
  const double M = bound_M(m.denoiser, size, size);
  const double sigma = cfg.smoothing.sigma;

  UnrollConfig ucfg = cfg.unroll;
  ucfg.lambda = 1.0;  // the bound is stated for lambda = 1
  const int N = ucfg.n_steps;

  // per-n worst ratios over items and perturbations
  std::vector<BoundReport> reports(static_cast<std::size_t>(N));
  for (int n = 1; n <= N; ++n) {
    auto& rep = reports[static_cast<std::size_t>(n - 1)];
    rep.n = n;
    rep.sigma = sigma;
    rep.M = M;
    rep.alpha = alpha;
    rep.opnorm = opnorm;
    rep.r = M * alpha / (std::sqrt(2.0 * 3.14159265358979323846) * sigma);
    rep.C_n = theorem1_bound(n, sigma, M, alpha, opnorm);
    rep.holds = true;
  }

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::uint64_t item_seed = derive_seed(cfg.master_seed, {rng_stream::eval, i});
    KSpaceData y = simulate_measurements(targets[i], A, cfg.meas_noise_sigma, item_seed);
    ReconSpec spec = make_spec(m, ucfg, cfg.smoothing);
    spec.smoothing.seed = derive_seed(item_seed, {rng_stream::smooth});
    const double eps = epsilon_from_data(y, cfg.attack.epsilon_scale);

    std::vector<KSpaceData> deltas;
    // PGD perturbation plus uniform box samples
    AttackConfig ac = cfg.attack;
    ac.seed = derive_seed(item_seed, {rng_stream::attack});
    deltas.push_back(pgd_attack(spec, A, y, targets[i], ac).delta);
    Rng rng = Rng::stream(item_seed, {rng_stream::attack, 1234});
    for (int r = 0; r < n_random; ++r) {
      KSpaceData d(size, size);
      for (std::size_t j = 0; j < d.re.size(); ++j) {
        if (A.mask.keep[j]) {
          d.re[j] = rng.uniform(-eps, eps);
          d.im[j] = rng.uniform(-eps, eps);
        }
      }
      deltas.push_back(std::move(d));
    }

    for (const KSpaceData& d : deltas) {
      const double dnorm = std::sqrt(dot(d.re, d.re) + dot(d.im, d.im));
      auto errs = robustness_error_per_step(spec, A, y, d);
      for (int n = 1; n <= N; ++n) {
        auto& rep = reports[static_cast<std::size_t>(n - 1)];
        rep.errors.push_back(errs[static_cast<std::size_t>(n)]);
        rep.delta_norms.push_back(dnorm);
        if (errs[static_cast<std::size_t>(n)] > rep.C_n * dnorm) rep.holds = false;
      }
    }
  }

  bool all_hold = true;
  nlohmann::json j;
  j["alpha"] = alpha;
  j["opnorm"] = opnorm;
  j["M"] = M;
  j["sigma"] = sigma;
  j["items"] = targets.size();
  j["random_deltas"] = n_random;
  j["config_hash"] = cfg.raw.hash();
  nlohmann::json per_n = nlohmann::json::array();
  for (const auto& rep : reports) {
    double worst_ratio = 0.0;
    for (std::size_t k = 0; k < rep.errors.size(); ++k)
      if (rep.delta_norms[k] > 0.0)
        worst_ratio = std::max(worst_ratio, rep.errors[k] / (rep.C_n * rep.delta_norms[k]));
    per_n.push_back({{"n", rep.n},
                     {"C_n", rep.C_n},
                     {"r", rep.r},
                     {"worst_ratio", worst_ratio},
                     {"holds", rep.holds}});
    all_hold &= rep.holds;
  }
  j["per_n"] = per_n;
  j["holds"] = all_hold;
  const std::string file = out + "/bound_check.json";
  std::ofstream os(file);
  os << j.dump(2) << "\n";
  os.close();
  run.output(file);
  run.done();
  std::cout << "bound-check: holds=" << (all_hold ? "true" : "false") << "\n";
  return all_hold ? 0 : 2;
}

int cmd_report(const std::string& in, const std::string& out, bool allow_mixed) {
  std::vector<std::string> files;
  if (fs::exists(in))
    for (const auto& e : fs::directory_iterator(in)) {
      const std::string name = e.path().filename().string();
      if (e.path().extension() == ".csv" &&
          (name.rfind("eval_", 0) == 0 || name.rfind("sweep_", 0) == 0))
        files.push_back(e.path().string());
    }
  if (files.empty()) {
    std::cerr << "report: no inputs in " << in << "\n";
    return 1;
  }
  std::sort(files.begin(), files.end());

  std::string hash;
  std::vector<std::pair<std::string, CsvFile>> loaded;
  for (const auto& f : files) {
    CsvFile c = read_csv(f);
    const std::string h = c.meta.count("config_hash") ? c.meta.at("config_hash") : "";
    if (hash.empty()) hash = h;
    if (h != hash && !allow_mixed) {
      std::cerr << "report: mixed config hashes (" << hash << " vs " << h << " in " << f
                << "); pass --allow-mixed to aggregate anyway\n";
      return 1;
    }
    loaded.emplace_back(fs::path(f).filename().string(), std::move(c));
  }

  fs::create_directories(out);
  // summary: per (file, method) means of every numeric column
  CsvWriter summary(out + "/summary.csv", {"source", "method", "column", "mean", "rows"}, hash,
                    kCodeVersion);
  // plot-ready tidy rows
  CsvWriter plot(out + "/plotdata.csv", {"source", "method", "x_name", "x", "metric", "value"},
                 hash, kCodeVersion);
  for (const auto& [name, csv] : loaded) {
    std::map<std::string, std::map<std::string, std::pair<double, long>>> agg;
    const bool is_sweep = name.rfind("sweep_", 0) == 0;
    std::size_t method_col = csv.column("method");
    for (const auto& row : csv.rows) {
      for (std::size_t c = 0; c < csv.header.size(); ++c) {
        if (c == method_col) continue;
        try {
          std::size_t pos = 0;
          const double v = std::stod(row[c], &pos);
          if (pos != row[c].size()) continue;
          auto& slot = agg[row[method_col]][csv.header[c]];
          slot.first += v;
          slot.second += 1;
        } catch (...) {
          continue;
        }
      }
      if (is_sweep) {
        const std::size_t xcol = csv.column("grid_value");
        const std::size_t kindcol = csv.column("kind");
        for (const std::string metric :
             {"clean_psnr", "noise_psnr", "robust_psnr", "rob_error_mean", "wall_seconds"}) {
          plot.write_row({name, row[method_col], row[kindcol], row[xcol],
                          metric, row[csv.column(metric)]});
        }
      }
    }
    for (const auto& [method, cols] : agg)
      for (const auto& [col, acc] : cols)
        summary.write_row({name, method, col, CsvWriter::fmt(acc.first / acc.second),
                           CsvWriter::fmt(acc.second)});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smoothed-unrolling MRI reconstruction workbench"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, models_dir, ckpt, pre, mode = "smug";
  std::string kind = "epsilon", report_in;
  std::vector<double> grid;
  int max_items = 0, n_random = 100, n_items = 3;
  bool allow_mixed = false;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    if (needs_data) cmd->add_option("--data", data_dir, "dataset directory")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "synthesize phantom datasets");
  add_common(gen, false);

  CLI::App* pret = app.add_subcommand("pretrain", "denoiser pre-training");
  add_common(pret, true);

  CLI::App* fine = app.add_subcommand("finetune", "train a reconstruction pipeline");
  add_common(fine, true);
  fine->add_option("--pre", pre, "pre-trained denoiser checkpoint");
  fine->add_option("--mode", mode, "modl|rs_e2e|smug|wsmug|istanet|istanet_smug|istanet_wsmug");

  CLI::App* ev = app.add_subcommand("eval", "clean/noise/robust evaluation");
  add_common(ev, true);
  ev->add_option("--models", models_dir, "directory with <method>.ckpt files")->required();

  CLI::App* atk = app.add_subcommand("attack", "worst-case perturbation generation");
  add_common(atk, true);
  atk->add_option("--ckpt", ckpt, "model checkpoint")->required();

  CLI::App* sw = app.add_subcommand("sweep", "instability sweeps");
  add_common(sw, true);
  sw->add_option("--models", models_dir, "directory with <method>.ckpt files")->required();
  sw->add_option("--kind", kind, "epsilon|sigma|accel|unroll_steps|mc_samples")->required();
  sw->add_option("--grid", grid, "explicit grid values");
  sw->add_option("--max-items", max_items, "evaluate at most this many test items");

  CLI::App* bc = app.add_subcommand("bound-check", "robustness bound audit");
  add_common(bc, true);
  bc->add_option("--ckpt", ckpt, "smoothed model checkpoint")->required();
  bc->add_option("--random-deltas", n_random, "random perturbations per item");
  bc->add_option("--items", n_items, "test items to audit");

  CLI::App* rep = app.add_subcommand("report", "aggregate CSV outputs");
  rep->add_option("--in", report_in, "directory of eval/sweep CSVs")->required();
  rep->add_option("--out", out_dir, "output directory")->required();
  rep->add_flag("--allow-mixed", allow_mixed, "aggregate across config hashes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) return cmd_report(report_in, out_dir, allow_mixed);
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (gen->parsed()) return cmd_gen_data(cfg, out_dir);
    if (pret->parsed()) return cmd_pretrain(cfg, data_dir, out_dir);
    if (fine->parsed()) return cmd_finetune(cfg, data_dir, pre, mode, out_dir);
    if (ev->parsed()) return cmd_eval(cfg, data_dir, models_dir, out_dir);
    if (atk->parsed()) return cmd_attack(cfg, data_dir, ckpt, out_dir);
    if (sw->parsed()) return cmd_sweep(cfg, data_dir, models_dir, kind, grid, max_items, out_dir);
    if (bc->parsed()) return cmd_bound_check(cfg, data_dir, ckpt, n_random, n_items, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
