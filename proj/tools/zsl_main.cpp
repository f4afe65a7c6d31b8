// Command-line front end for the zero-shot pipeline.
//
// Subcommands: synth, train-embedding, fit-gp, calibrate, evaluate, ausuc,
// ablate, run-all. Exit codes: 0 success, 1 numerical failure, 2 I/O or
// config error.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "zsl/classify.hpp"
#include "zsl/csv.hpp"
#include "zsl/dataset.hpp"
#include "zsl/error.hpp"
#include "zsl/pipeline.hpp"

namespace {

struct CliOptions {
  std::string data;
  std::string synth;
  double clip = 7.0;
  bool no_clip = false;
  int latent_dim = 1024;
  double delta = 4.0;
  int per_class = 8;
  int episodes = 500;
  double lr = 0.002;
  double weight_decay = 0.1;
  double gp_lr = 0.01;
  int gp_epochs = 1000;
  std::string gamma_grid = "auto:201";
  std::string mode = "balanced-triplet,gp";
  long seed = 1;
  std::string out;
  std::string manifest_in;
  bool gp_freeze = false;
  double krr_lambda = 0.1;
  double krr_lengthscale = -1.0;  // <=0: median heuristic
  double krr_signal = 1.0;
  double gamma_override = 0.0;
  bool has_gamma_override = false;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--data", opt.data, "Dataset directory");
  cmd->add_option("--synth", opt.synth,
                  "Synthetic dataset spec, e.g. n_seen=20,seed=1 or 'default'");
  cmd->add_option("--clip", opt.clip, "Feature clip value")
      ->capture_default_str();
  cmd->add_flag("--no-clip", opt.no_clip, "Disable feature preprocessing");
  cmd->add_option("--latent-dim", opt.latent_dim, "Latent dimension")
      ->capture_default_str();
  cmd->add_option("--delta", opt.delta, "Triplet margin")
      ->capture_default_str();
  cmd->add_option("--per-class", opt.per_class, "Samples per class per batch")
      ->capture_default_str();
  cmd->add_option("--episodes", opt.episodes, "Training episodes")
      ->capture_default_str();
  cmd->add_option("--lr", opt.lr, "Embedding learning rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", opt.weight_decay, "Embedding weight decay")
      ->capture_default_str();
  cmd->add_option("--gp-lr", opt.gp_lr, "GP learning rate")
      ->capture_default_str();
  cmd->add_option("--gp-epochs", opt.gp_epochs, "GP training epochs")
      ->capture_default_str();
  cmd->add_option("--gamma-grid", opt.gamma_grid,
                  "Gamma grid: auto:<count> or <lo>:<hi>:<count>")
      ->capture_default_str();
  cmd->add_option("--mode", opt.mode,
                  "Loss and regressor modes, e.g. balanced-triplet,gp")
      ->capture_default_str();
  cmd->add_option("--seed", opt.seed, "Global seed")->capture_default_str();
  cmd->add_option("--out", opt.out, "Output directory");
  cmd->add_option("--manifest", opt.manifest_in,
                  "Rerun from a previously written manifest");
  cmd->add_flag("--gp-freeze", opt.gp_freeze,
                "Reuse validation-stage GP hyperparameters at test time");
  cmd->add_option("--krr-lambda", opt.krr_lambda, "KRR ridge strength")
      ->capture_default_str();
  cmd->add_option("--krr-lengthscale", opt.krr_lengthscale,
                  "KRR lengthscale (<=0: median heuristic)");
  cmd->add_option("--krr-signal", opt.krr_signal, "KRR signal sd")
      ->capture_default_str();
  cmd->add_option("--gamma", opt.gamma_override,
                  "Skip calibration and use this gamma")
      ->each([&opt](const std::string&) { opt.has_gamma_override = true; });
  cmd->set_config("--config");
}

zsl::RunConfig build_config(const CliOptions& opt) {
  if (!opt.manifest_in.empty())
    return zsl::config_from_manifest(zsl::read_manifest(opt.manifest_in));

  zsl::RunConfig cfg;
  if (!opt.synth.empty() && !opt.data.empty())
    zsl::throw_config("--data and --synth are mutually exclusive");
  if (!opt.synth.empty()) {
    auto spec = zsl::parse_synth_spec(opt.synth);
    if (opt.synth.find("seed=") == std::string::npos)
      spec.seed = static_cast<std::uint64_t>(opt.seed);
    cfg.synth = spec;
  } else if (!opt.data.empty()) {
    cfg.data_dir = opt.data;
  }
  cfg.preprocess.clip_value = opt.clip;
  cfg.preprocess.enabled = !opt.no_clip;
  cfg.triplet.n_latent = opt.latent_dim;
  cfg.triplet.delta = opt.delta;
  cfg.triplet.n_per_class = opt.per_class;
  cfg.triplet.episodes = opt.episodes;
  cfg.triplet.lr = opt.lr;
  cfg.triplet.weight_decay = opt.weight_decay;
  cfg.gp.lr = opt.gp_lr;
  cfg.gp.epochs = opt.gp_epochs;
  cfg.freeze_gp_at_test = opt.gp_freeze;
  cfg.krr.lambda = opt.krr_lambda;
  cfg.krr.lengthscale = opt.krr_lengthscale;
  cfg.krr.signal_sd = opt.krr_signal;
  if (opt.has_gamma_override) cfg.gamma_override = opt.gamma_override;
  cfg.seed = static_cast<std::uint64_t>(opt.seed);
  cfg.out_dir = opt.out;

  // --gamma-grid: auto:<count> or <lo>:<hi>:<count>
  {
    const std::string& g = opt.gamma_grid;
    if (g.rfind("auto:", 0) == 0) {
      cfg.gamma_grid.count = static_cast<int>(
          zsl::parse_long(g.substr(5), "--gamma-grid"));
    } else if (g.find(':') == std::string::npos) {
      cfg.gamma_grid.count =
          static_cast<int>(zsl::parse_long(g, "--gamma-grid"));
    } else {
      size_t p1 = g.find(':');
      size_t p2 = g.find(':', p1 + 1);
      if (p2 == std::string::npos)
        zsl::throw_config("bad --gamma-grid '" + g + "'");
      cfg.gamma_grid.range = {
          zsl::parse_double(g.substr(0, p1), "--gamma-grid"),
          zsl::parse_double(g.substr(p1 + 1, p2 - p1 - 1), "--gamma-grid")};
      cfg.gamma_grid.count =
          static_cast<int>(zsl::parse_long(g.substr(p2 + 1), "--gamma-grid"));
    }
  }

  // --mode: comma/plus separated loss and regressor tokens.
  {
    std::string mode = opt.mode;
    for (char& c : mode)
      if (c == '+') c = ',';
    bool loss_set = false, reg_set = false;
    for (const auto& tok : zsl::split_csv_line(mode)) {
      if (tok.empty()) continue;
      auto set_loss = [&](zsl::EmbedMode m) {
        if (loss_set) zsl::throw_config("--mode sets the loss mode twice");
        cfg.embed_mode = m;
        loss_set = true;
      };
      auto set_reg = [&](zsl::RegressorMode m) {
        if (reg_set)
          zsl::throw_config("--mode sets the regressor mode twice");
        cfg.regressor_mode = m;
        reg_set = true;
      };
      if (tok == "balanced-triplet") set_loss(zsl::EmbedMode::BalancedTriplet);
      else if (tok == "standard-triplet")
        set_loss(zsl::EmbedMode::StandardTriplet);
      else if (tok == "no-embedding") set_loss(zsl::EmbedMode::NoEmbedding);
      else if (tok == "gp") set_reg(zsl::RegressorMode::Gp);
      else if (tok == "krr") set_reg(zsl::RegressorMode::Krr);
      else zsl::throw_config("unknown --mode token '" + tok + "'");
    }
  }
  return cfg;
}

void print_report(const zsl::EvalReport& r) {
  std::printf("a_t    %.6f\n", r.a_t);
  std::printf("a_u    %.6f\n", r.a_u);
  std::printf("a_s    %.6f\n", r.a_s);
  std::printf("h      %.6f\n", r.h);
  std::printf("ausuc  %.6f\n", r.ausuc);
  std::printf("gamma  %s\n", zsl::format_double(r.gamma).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot learning with a class-balanced triplet embedding "
               "and GP prototype regression"};
  app.require_subcommand(1);

  CliOptions opt;
  std::string ablate_param;
  std::vector<std::string> ablate_values;
  bool synth_binary = false;

  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* c_train =
      app.add_subcommand("train-embedding", "Train the latent embedding");
  auto* c_fitgp = app.add_subcommand(
      "fit-gp", "Fit the prototype regressor on seen classes");
  auto* c_cal = app.add_subcommand("calibrate", "Fit the calibration penalty");
  auto* c_eval = app.add_subcommand("evaluate", "Run the full evaluation");
  auto* c_ausuc =
      app.add_subcommand("ausuc", "Sweep gamma and report the AUSUC");
  auto* c_ablate = app.add_subcommand("ablate", "Sweep clip or delta");
  auto* c_all = app.add_subcommand("run-all", "Run the whole pipeline");

  for (auto* cmd :
       {c_synth, c_train, c_fitgp, c_cal, c_eval, c_ausuc, c_ablate, c_all})
    add_common_flags(cmd, opt);
  c_synth->add_flag("--bin", synth_binary,
                    "Write features.bin instead of features.csv");
  c_ablate->add_option("--param", ablate_param, "clip or delta")->required();
  c_ablate->add_option("--values", ablate_values,
                       "Sweep values (clip accepts 'none')")
      ->required()
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) {
      if (opt.out.empty()) zsl::throw_config("synth: --out is required");
      auto spec =
          zsl::parse_synth_spec(opt.synth.empty() ? "default" : opt.synth);
      if (opt.synth.find("seed=") == std::string::npos)
        spec.seed = static_cast<std::uint64_t>(opt.seed);
      zsl::save_dataset(zsl::synth_dataset(spec), opt.out, synth_binary);
      std::printf("wrote dataset: %s\n", opt.out.c_str());
      return 0;
    }

    zsl::RunConfig cfg = build_config(opt);

    if (c_train->parsed()) {
      auto res = zsl::run_pipeline(cfg, zsl::PipelineStop::Embedding);
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        zsl::save_embedding(res.embedding, cfg.out_dir / "embedding.csv");
        zsl::save_loss_trace(res.loss_trace, cfg.out_dir / "loss_trace.csv");
        zsl::write_manifest(cfg.out_dir / "manifest.txt", res.manifest);
      }
      std::printf("final episode loss: %s\n",
                  res.loss_trace.empty()
                      ? "n/a"
                      : zsl::format_double(res.loss_trace.back()).c_str());
      return 0;
    }
    if (c_fitgp->parsed()) {
      auto res = zsl::run_pipeline(cfg, zsl::PipelineStop::ValRegressor);
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        if (res.val_gp)
          zsl::save_gp_checkpoint(*res.val_gp, cfg.out_dir / "gp_val.csv");
        zsl::write_manifest(cfg.out_dir / "manifest.txt", res.manifest);
      }
      if (res.val_gp) {
        double lml = 0.0;
        for (const auto& d : res.val_gp->dims) lml += d.final_lml;
        std::printf("total final lml over %zu dims: %s\n",
                    res.val_gp->dims.size(), zsl::format_double(lml).c_str());
      } else {
        std::printf("krr regressor prepared (no hyperparameter learning)\n");
      }
      return 0;
    }
    if (c_cal->parsed()) {
      auto res = zsl::run_pipeline(cfg, zsl::PipelineStop::Calibrate);
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        zsl::write_manifest(cfg.out_dir / "manifest.txt", res.manifest);
      }
      std::printf("gamma %s\n", zsl::format_double(res.gamma).c_str());
      return 0;
    }
    if (c_eval->parsed() || c_all->parsed()) {
      auto res = zsl::run_all(cfg);
      print_report(res.report);
      return 0;
    }
    if (c_ausuc->parsed()) {
      auto res = zsl::run_all(cfg);
      std::printf("ausuc %.6f (%zu curve points)\n", res.report.ausuc,
                  res.report.curve.size());
      return 0;
    }
    if (c_ablate->parsed()) {
      auto rows = zsl::ablate(cfg, ablate_param, ablate_values);
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        zsl::save_ablate_csv(rows, cfg.out_dir / "ablate.csv");
      }
      std::printf("value,a_t,a_u,a_s,h,status\n");
      for (const auto& r : rows) {
        if (r.ok)
          std::printf("%s,%.4f,%.4f,%.4f,%.4f,ok\n", r.value.c_str(),
                      r.report.a_t, r.report.a_u, r.report.a_s, r.report.h);
        else
          std::printf("%s,,,,,failed: %s\n", r.value.c_str(), r.error.c_str());
      }
      return 0;
    }
  } catch (const zsl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
