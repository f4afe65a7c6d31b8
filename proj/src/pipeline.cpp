#include "zsl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "zsl/error.hpp"

namespace zsl {

std::string to_string(EmbedMode m) {
  switch (m) {
    case EmbedMode::BalancedTriplet: return "balanced-triplet";
    case EmbedMode::StandardTriplet: return "standard-triplet";
    case EmbedMode::NoEmbedding: return "no-embedding";
  }
  return "?";
}

std::string to_string(RegressorMode m) {
  return m == RegressorMode::Gp ? "gp" : "krr";
}

namespace {

constexpr std::uint64_t kPartitionSalt = 0x5a1ad0c0ffee1234ULL;

using Clock = std::chrono::steady_clock;

long ms_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                               t0)
      .count();
}

// Stage wrapper: times the stage and tags errors with its name.
template <typename F>
auto stage(const char* name, Manifest& manifest, F&& f) {
  const auto t0 = Clock::now();
  try {
    auto result = f();
    manifest["timing." + std::string(name) + "_ms"] =
        std::to_string(ms_since(t0));
    return result;
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("[") + name + "] " + e.what());
  }
}

std::vector<int> sorted_union(const std::vector<int>& a,
                              const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Stratified holdout: per class, shuffle rows and reserve a clamped
// fraction. Every class keeps at least one row on each side.
struct Holdout {
  std::vector<int> held;
  std::vector<int> rest;
};

Holdout split_class_rows(std::vector<int> rows, double fraction,
                         std::mt19937_64& rng) {
  std::shuffle(rows.begin(), rows.end(), rng);
  const int n = static_cast<int>(rows.size());
  int k = static_cast<int>(std::lround(fraction * n));
  k = std::clamp(k, 1, n - 1);
  Holdout h;
  h.held.assign(rows.begin(), rows.begin() + k);
  h.rest.assign(rows.begin() + k, rows.end());
  std::sort(h.held.begin(), h.held.end());
  std::sort(h.rest.begin(), h.rest.end());
  return h;
}

SamplePartition make_partition(const Dataset& data, const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ kPartitionSalt);
  SamplePartition p;

  for (int c : data.split.train_seen) {
    auto rows = data.rows_of_class(c);
    if (rows.size() < 3)
      throw_config("class " + std::to_string(c) +
                   " needs at least 3 samples for the train/val/test "
                   "holdouts, has " +
                   std::to_string(rows.size()));
    auto test = split_class_rows(rows, cfg.seen_test_fraction, rng);
    p.seen_test_rows.insert(p.seen_test_rows.end(), test.held.begin(),
                            test.held.end());
    auto val = split_class_rows(test.rest, cfg.val_holdout_fraction, rng);
    p.val_probe_rows.insert(p.val_probe_rows.end(), val.held.begin(),
                            val.held.end());
    p.embed_train_rows.insert(p.embed_train_rows.end(), val.rest.begin(),
                              val.rest.end());
    p.final_proto_rows.insert(p.final_proto_rows.end(), test.rest.begin(),
                              test.rest.end());
  }
  for (int c : data.split.val_unseen) {
    auto rows = data.rows_of_class(c);
    if (rows.size() < 2)
      throw_config("validation class " + std::to_string(c) +
                   " needs at least 2 samples, has " +
                   std::to_string(rows.size()));
    auto test = split_class_rows(rows, cfg.seen_test_fraction, rng);
    p.seen_test_rows.insert(p.seen_test_rows.end(), test.held.begin(),
                            test.held.end());
    p.val_probe_rows.insert(p.val_probe_rows.end(), test.rest.begin(),
                            test.rest.end());
    p.final_proto_rows.insert(p.final_proto_rows.end(), test.rest.begin(),
                              test.rest.end());
  }
  for (int c : data.split.test_unseen) {
    auto rows = data.rows_of_class(c);
    if (rows.empty())
      throw_config("test class " + std::to_string(c) + " has zero samples");
    p.unseen_test_rows.insert(p.unseen_test_rows.end(), rows.begin(),
                              rows.end());
  }
  return p;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<int>& rows) {
  std::vector<int> out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i)
    out[i] = labels[static_cast<size_t>(rows[i])];
  return out;
}

Eigen::MatrixXd semantic_rows(const Dataset& data,
                              const std::vector<int>& classes) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(classes.size()),
                      data.n_semantic());
  for (size_t i = 0; i < classes.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = data.semantics.row(classes[i]);
  return out;
}

Eigen::MatrixXd prototype_rows(const PrototypeSet& protos,
                               const std::vector<int>& classes) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(classes.size()),
                      protos.prototypes.cols());
  for (size_t i = 0; i < classes.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = protos.prototypes.row(classes[i]);
  return out;
}

void record_jitter(Manifest& manifest, const std::string& prefix,
                   const GpModel& model) {
  int dims_with_jitter = 0;
  double max_jitter = 0.0;
  for (const auto& d : model.dims) {
    if (d.jitter > 0.0) ++dims_with_jitter;
    max_jitter = std::max(max_jitter, d.jitter);
  }
  manifest[prefix + ".jitter_dims"] = std::to_string(dims_with_jitter);
  manifest[prefix + ".jitter_max"] = format_double(max_jitter);
}

std::string gamma_grid_to_string(const GammaGridSpec& g) {
  if (g.range)
    return format_double(g.range->first) + ":" +
           format_double(g.range->second) + ":" + std::to_string(g.count);
  return "auto:" + std::to_string(g.count);
}

GammaGridSpec gamma_grid_from_string(const std::string& s) {
  GammaGridSpec g;
  if (s.rfind("auto:", 0) == 0) {
    g.count = static_cast<int>(parse_long(s.substr(5), "gamma grid"));
    return g;
  }
  size_t p1 = s.find(':');
  size_t p2 = s.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw_config("bad gamma grid spec '" + s + "'");
  g.range = {parse_double(s.substr(0, p1), "gamma grid"),
             parse_double(s.substr(p1 + 1, p2 - p1 - 1), "gamma grid")};
  g.count = static_cast<int>(parse_long(s.substr(p2 + 1), "gamma grid"));
  return g;
}

}  // namespace

Manifest config_to_manifest(const RunConfig& cfg) {
  Manifest m;
  if (cfg.synth)
    m["data.source"] = "synth:" + synth_spec_to_string(*cfg.synth);
  else
    m["data.source"] = "dir:" + cfg.data_dir;
  m["preprocess.enabled"] = cfg.preprocess.enabled ? "1" : "0";
  m["preprocess.clip_value"] = format_double(cfg.preprocess.clip_value);
  m["embed.mode"] = to_string(cfg.embed_mode);
  m["triplet.delta"] = format_double(cfg.triplet.delta);
  m["triplet.n_per_class"] = std::to_string(cfg.triplet.n_per_class);
  m["triplet.episodes"] = std::to_string(cfg.triplet.episodes);
  m["triplet.lr"] = format_double(cfg.triplet.lr);
  m["triplet.weight_decay"] = format_double(cfg.triplet.weight_decay);
  m["triplet.n_latent"] = std::to_string(cfg.triplet.n_latent);
  m["triplet.decoupled_decay"] = cfg.triplet.decoupled_decay ? "1" : "0";
  m["gp.lr"] = format_double(cfg.gp.lr);
  m["gp.epochs"] = std::to_string(cfg.gp.epochs);
  m["gp.noise_floor"] = format_double(cfg.gp.noise_floor);
  m["gp.freeze_at_test"] = cfg.freeze_gp_at_test ? "1" : "0";
  m["krr.lengthscale"] = format_double(cfg.krr.lengthscale);
  m["krr.signal_sd"] = format_double(cfg.krr.signal_sd);
  m["krr.lambda"] = format_double(cfg.krr.lambda);
  m["regressor.mode"] = to_string(cfg.regressor_mode);
  m["gamma.grid"] = gamma_grid_to_string(cfg.gamma_grid);
  if (cfg.gamma_override)
    m["gamma.override"] = format_double(*cfg.gamma_override);
  m["partition.seen_test_fraction"] = format_double(cfg.seen_test_fraction);
  m["partition.val_holdout_fraction"] =
      format_double(cfg.val_holdout_fraction);
  m["seed"] = std::to_string(cfg.seed);
  return m;
}

RunConfig config_from_manifest(const Manifest& m) {
  auto get = [&m](const std::string& key) -> const std::string& {
    auto it = m.find(key);
    if (it == m.end()) throw_config("manifest missing key '" + key + "'");
    return it->second;
  };
  RunConfig cfg;
  {
    const std::string& src = get("data.source");
    if (src.rfind("synth:", 0) == 0)
      cfg.synth = parse_synth_spec(src.substr(6));
    else if (src.rfind("dir:", 0) == 0)
      cfg.data_dir = src.substr(4);
    else
      throw_config("bad data.source '" + src + "'");
  }
  cfg.preprocess.enabled = get("preprocess.enabled") == "1";
  cfg.preprocess.clip_value =
      parse_double(get("preprocess.clip_value"), "manifest");
  {
    const std::string& mode = get("embed.mode");
    if (mode == "balanced-triplet") cfg.embed_mode = EmbedMode::BalancedTriplet;
    else if (mode == "standard-triplet")
      cfg.embed_mode = EmbedMode::StandardTriplet;
    else if (mode == "no-embedding") cfg.embed_mode = EmbedMode::NoEmbedding;
    else throw_config("bad embed.mode '" + mode + "'");
  }
  cfg.triplet.delta = parse_double(get("triplet.delta"), "manifest");
  cfg.triplet.n_per_class =
      static_cast<int>(parse_long(get("triplet.n_per_class"), "manifest"));
  cfg.triplet.episodes =
      static_cast<int>(parse_long(get("triplet.episodes"), "manifest"));
  cfg.triplet.lr = parse_double(get("triplet.lr"), "manifest");
  cfg.triplet.weight_decay =
      parse_double(get("triplet.weight_decay"), "manifest");
  cfg.triplet.n_latent =
      static_cast<int>(parse_long(get("triplet.n_latent"), "manifest"));
  cfg.triplet.decoupled_decay = get("triplet.decoupled_decay") == "1";
  cfg.gp.lr = parse_double(get("gp.lr"), "manifest");
  cfg.gp.epochs = static_cast<int>(parse_long(get("gp.epochs"), "manifest"));
  cfg.gp.noise_floor = parse_double(get("gp.noise_floor"), "manifest");
  cfg.freeze_gp_at_test = get("gp.freeze_at_test") == "1";
  cfg.krr.lengthscale = parse_double(get("krr.lengthscale"), "manifest");
  cfg.krr.signal_sd = parse_double(get("krr.signal_sd"), "manifest");
  cfg.krr.lambda = parse_double(get("krr.lambda"), "manifest");
  cfg.regressor_mode =
      get("regressor.mode") == "krr" ? RegressorMode::Krr : RegressorMode::Gp;
  cfg.gamma_grid = gamma_grid_from_string(get("gamma.grid"));
  if (auto it = m.find("gamma.override"); it != m.end())
    cfg.gamma_override = parse_double(it->second, "manifest");
  cfg.seen_test_fraction =
      parse_double(get("partition.seen_test_fraction"), "manifest");
  cfg.val_holdout_fraction =
      parse_double(get("partition.val_holdout_fraction"), "manifest");
  cfg.seed = static_cast<std::uint64_t>(parse_long(get("seed"), "manifest"));
  return cfg;
}

PipelineResult run_pipeline(const RunConfig& cfg, PipelineStop stop) {
  if (cfg.synth && !cfg.data_dir.empty())
    throw_config("choose either a dataset directory or a synth spec");
  if (!cfg.synth && cfg.data_dir.empty())
    throw_config("no dataset: set a directory or a synth spec");

  PipelineResult res;
  res.manifest = config_to_manifest(cfg);
  Manifest& manifest = res.manifest;

  // ---- load ----
  res.data = stage("load", manifest, [&] {
    Dataset d;
    if (cfg.synth) {
      d = synth_dataset(*cfg.synth);
    } else {
      PreprocessConfig no_prep;
      no_prep.enabled = false;
      d = load_dataset(cfg.data_dir, no_prep);
    }
    res.raw_feature_stats = feature_stats(d.features);
    if (cfg.preprocess.enabled)
      d.features = clip_and_scale(d.features, cfg.preprocess.clip_value);
    return d;
  });
  manifest["stats.feature_mean"] = format_double(res.raw_feature_stats.mean);
  manifest["stats.feature_max"] = format_double(res.raw_feature_stats.max);
  manifest["stats.feature_q999"] = format_double(res.raw_feature_stats.q999);

  const Dataset& data = res.data;

  // ---- partition ----
  res.partition = stage("partition", manifest,
                        [&] { return make_partition(data, cfg); });
  const SamplePartition& part = res.partition;

  // ---- embedding ----
  res.embedding = stage("train-embedding", manifest, [&] {
    if (cfg.embed_mode == EmbedMode::NoEmbedding)
      return LinearEmbedding::identity(data.n_feature());
    Dataset train_view;
    train_view.features = gather_rows(data.features, part.embed_train_rows);
    train_view.labels = gather_labels(data.labels, part.embed_train_rows);
    train_view.semantics = data.semantics;
    train_view.split = data.split;
    TripletConfig tcfg = cfg.triplet;
    tcfg.seed = cfg.seed;
    tcfg.loss = cfg.embed_mode == EmbedMode::BalancedTriplet
                    ? TripletKind::Balanced
                    : TripletKind::Standard;
    auto tr = train_embedding(train_view, tcfg);
    res.loss_trace = std::move(tr.loss_trace);
    return std::move(tr.embedding);
  });
  manifest["embed.n_latent_resolved"] =
      std::to_string(res.embedding.n_latent());
  if (stop == PipelineStop::Embedding) return res;

  const Eigen::Index n_classes = data.n_classes();
  KrrConfig krr = cfg.krr;
  if (cfg.regressor_mode == RegressorMode::Krr && !(krr.lengthscale > 0.0)) {
    krr.lengthscale =
        median_pairwise_distance(semantic_rows(data, data.split.train_seen));
    manifest["krr.lengthscale_resolved"] = format_double(krr.lengthscale);
  }

  // ---- validation-stage regressor ----
  PrototypeSet val_protos = stage("val-regressor", manifest, [&] {
    Eigen::MatrixXd latent_rows = embed(
        res.embedding, gather_rows(data.features, part.embed_train_rows));
    PrototypeSet protos = class_prototypes(
        latent_rows, gather_labels(data.labels, part.embed_train_rows),
        data.split.train_seen, n_classes);
    const Eigen::MatrixXd sem_seen =
        semantic_rows(data, data.split.train_seen);
    const Eigen::MatrixXd sem_val = semantic_rows(data, data.split.val_unseen);
    const Eigen::MatrixXd targets =
        prototype_rows(protos, data.split.train_seen);
    Eigen::MatrixXd predicted;
    if (cfg.regressor_mode == RegressorMode::Gp) {
      GpFitConfig gcfg = cfg.gp;
      gcfg.seed = cfg.seed;
      res.val_gp = fit_gp(sem_seen, targets, gcfg);
      record_jitter(manifest, "gp.val", *res.val_gp);
      predicted = predict_prototypes(*res.val_gp, sem_val).mean;
    } else {
      predicted = predict_prototypes_krr(sem_seen, targets, sem_val, krr);
    }
    for (size_t i = 0; i < data.split.val_unseen.size(); ++i) {
      const int c = data.split.val_unseen[i];
      protos.prototypes.row(c) = predicted.row(static_cast<Eigen::Index>(i));
      protos.defined[static_cast<size_t>(c)] = 1;
      protos.seen_mask[static_cast<size_t>(c)] = 0;
    }
    return protos;
  });
  if (stop == PipelineStop::ValRegressor) return res;

  // ---- calibrate ----
  res.gamma = stage("calibrate", manifest, [&] {
    if (cfg.gamma_override) return *cfg.gamma_override;
    ClassificationStage vstage;
    vstage.prototypes = val_protos;
    vstage.probe_latent =
        embed(res.embedding, gather_rows(data.features, part.val_probe_rows));
    vstage.probe_labels = gather_labels(data.labels, part.val_probe_rows);
    vstage.seen_classes = data.split.train_seen;
    vstage.unseen_classes = data.split.val_unseen;
    manifest["gamma.d_max_val"] =
        format_double(max_probe_prototype_sq_dist(vstage));
    const double g = fit_gamma(vstage, cfg.gamma_grid);
    const auto val_acc = evaluate_stage(vstage, g);
    manifest["gamma.val_h"] =
        format_double(harmonic_mean(val_acc.a_u, val_acc.a_s));
    return g;
  });
  manifest["gamma.value"] = format_double(res.gamma);
  if (stop == PipelineStop::Calibrate) return res;

  // ---- final regressor ----
  const std::vector<int> seen_final =
      sorted_union(data.split.train_seen, data.split.val_unseen);
  res.final_prototypes = stage("final-regressor", manifest, [&] {
    Eigen::MatrixXd latent_rows = embed(
        res.embedding, gather_rows(data.features, part.final_proto_rows));
    PrototypeSet protos = class_prototypes(
        latent_rows, gather_labels(data.labels, part.final_proto_rows),
        seen_final, n_classes);
    const Eigen::MatrixXd sem_seen = semantic_rows(data, seen_final);
    const Eigen::MatrixXd sem_test =
        semantic_rows(data, data.split.test_unseen);
    const Eigen::MatrixXd targets = prototype_rows(protos, seen_final);
    Eigen::MatrixXd predicted;
    if (cfg.regressor_mode == RegressorMode::Gp) {
      if (cfg.freeze_gp_at_test) {
        std::vector<GpEffectiveHyper> hyper;
        for (const auto& d : res.val_gp->dims)
          hyper.push_back({d.lengthscale, d.signal_sd, d.noise_var});
        res.final_gp = gp_with_hyperparams(sem_seen, targets, hyper);
      } else {
        GpFitConfig gcfg = cfg.gp;
        gcfg.seed = cfg.seed;
        res.final_gp = fit_gp(sem_seen, targets, gcfg);
      }
      record_jitter(manifest, "gp.final", *res.final_gp);
      predicted = predict_prototypes(*res.final_gp, sem_test).mean;
    } else {
      predicted = predict_prototypes_krr(sem_seen, targets, sem_test, krr);
    }
    for (size_t i = 0; i < data.split.test_unseen.size(); ++i) {
      const int c = data.split.test_unseen[i];
      protos.prototypes.row(c) = predicted.row(static_cast<Eigen::Index>(i));
      protos.defined[static_cast<size_t>(c)] = 1;
      protos.seen_mask[static_cast<size_t>(c)] = 0;
    }
    return protos;
  });

  // ---- evaluate ----
  res.report = stage("evaluate", manifest, [&] {
    EvalSetup setup;
    setup.prototypes = res.final_prototypes;
    setup.unseen_latent = embed(
        res.embedding, gather_rows(data.features, part.unseen_test_rows));
    setup.unseen_labels = gather_labels(data.labels, part.unseen_test_rows);
    setup.seen_latent =
        embed(res.embedding, gather_rows(data.features, part.seen_test_rows));
    setup.seen_labels = gather_labels(data.labels, part.seen_test_rows);
    setup.seen_classes = seen_final;
    setup.unseen_classes = data.split.test_unseen;
    return evaluate_full(setup, res.gamma, cfg.gamma_grid);
  });
  manifest["result.a_t"] = format_double(res.report.a_t);
  manifest["result.a_u"] = format_double(res.report.a_u);
  manifest["result.a_s"] = format_double(res.report.a_s);
  manifest["result.h"] = format_double(res.report.h);
  manifest["result.ausuc"] = format_double(res.report.ausuc);

  // ---- write ----
  if (!cfg.out_dir.empty()) {
    stage("write", manifest, [&] {
      std::filesystem::create_directories(cfg.out_dir);
      save_report(res.report, cfg.out_dir);
      if (cfg.embed_mode != EmbedMode::NoEmbedding) {
        save_embedding(res.embedding, cfg.out_dir / "embedding.csv");
        save_loss_trace(res.loss_trace, cfg.out_dir / "loss_trace.csv");
      }
      if (res.val_gp)
        save_gp_checkpoint(*res.val_gp, cfg.out_dir / "gp_val.csv");
      if (res.final_gp)
        save_gp_checkpoint(*res.final_gp, cfg.out_dir / "gp_final.csv");
      return 0;
    });
    // Manifest written last so it carries every timing entry.
    write_manifest(cfg.out_dir / "manifest.txt", manifest);
  }
  return res;
}

std::vector<AblateRow> ablate(const RunConfig& base, const std::string& param,
                              const std::vector<std::string>& values) {
  if (param != "clip" && param != "delta")
    throw_config("ablate: unknown parameter '" + param +
                 "' (expected clip or delta)");
  if (values.empty()) throw_config("ablate: empty sweep");
  std::vector<AblateRow> rows;
  for (const auto& v : values) {
    RunConfig cfg = base;
    cfg.out_dir.clear();
    AblateRow row;
    row.value = v;
    try {
      if (param == "clip") {
        if (v == "none") {
          cfg.preprocess.enabled = false;
        } else {
          cfg.preprocess.enabled = true;
          cfg.preprocess.clip_value = parse_double(v, "ablate clip value");
        }
      } else {
        cfg.triplet.delta = parse_double(v, "ablate delta value");
      }
      row.report = run_pipeline(cfg, PipelineStop::Full).report;
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_ablate_csv(const std::vector<AblateRow>& rows,
                     const std::filesystem::path& file) {
  std::ostringstream os;
  os << "value,a_t,a_u,a_s,h,status\n";
  for (const auto& r : rows) {
    if (r.ok)
      os << r.value << ',' << format_double(r.report.a_t) << ','
         << format_double(r.report.a_u) << ',' << format_double(r.report.a_s)
         << ',' << format_double(r.report.h) << ",ok\n";
    else
      os << r.value << ",,,,," << "failed: " << r.error << '\n';
  }
  write_text_file(file, os.str());
}

}  // namespace zsl
