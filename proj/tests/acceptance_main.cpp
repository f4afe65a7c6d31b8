// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Criteria are property-based and run on synthetic data only.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "oracles.hpp"
#include "zsl/classify.hpp"
#include "zsl/dataset.hpp"
#include "zsl/embedding.hpp"
#include "zsl/gp.hpp"
#include "zsl/pipeline.hpp"

using namespace zsl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL",
              criterion, what.c_str(), detail.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// ---- criterion 1: bitwise oracle equality of both triplet losses ----
void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(424242);
  int mismatches = 0;
  for (int it = 0; it < 200; ++it) {
    const int n_classes = 2 + static_cast<int>(rng() % 3);  // <= 4
    const int n_per = 2 + static_cast<int>(rng() % 3);      // <= 4
    const int dims = 1 + static_cast<int>(rng() % 3);       // <= 3
    std::uniform_real_distribution<double> delta_d(0.25, 8.0);
    const double delta = delta_d(rng);
    Eigen::MatrixXd latent =
        oracle::random_matrix(rng, n_classes * n_per, dims, 2.0);
    const auto labels = oracle::balanced_labels(n_classes, n_per);
    if (loss_balanced_triplet(latent, labels, delta).loss !=
        oracle::loss_balanced(latent, labels, delta))
      ++mismatches;
    if (loss_standard_triplet(latent, labels, delta).loss !=
        oracle::loss_standard(latent, labels, delta))
      ++mismatches;
  }
  const double secs = seconds_since(t0);
  report(1, mismatches == 0 && secs < 5.0,
         "triplet losses equal naive loop oracles bitwise on 200 batches",
         "mismatches=" + std::to_string(mismatches) + ", " +
             std::to_string(secs) + "s");
}

// ---- criterion 2: finite-difference gradient checks ----
bool balanced_smooth(const Eigen::MatrixXd& latent,
                     const std::vector<int>& labels, double delta,
                     double tol) {
  auto groups = oracle::groups_of(labels);
  std::map<int, std::vector<double>> means;
  for (const auto& [c, members] : groups) {
    std::vector<double> acc(static_cast<size_t>(latent.cols()), 0.0);
    for (int idx : members)
      for (Eigen::Index d = 0; d < latent.cols(); ++d)
        acc[static_cast<size_t>(d)] += latent(idx, d);
    for (auto& v : acc) v /= static_cast<double>(members.size());
    means[c] = acc;
  }
  for (const auto& [ci, mi] : groups)
    for (const auto& [cj, mj] : groups) {
      if (ci == cj) continue;
      std::vector<double> ds;
      for (int n : mj) ds.push_back(oracle::sq_dist(latent, n, means[ci]));
      std::vector<double> sorted = ds;
      std::sort(sorted.begin(), sorted.end());
      if (sorted.size() > 1 && sorted[1] - sorted[0] < tol) return false;
      for (int l : mi) {
        const double arg = delta + oracle::sq_dist(latent, l, means[ci]) -
                           sorted[0];
        if (std::abs(arg) < tol) return false;
      }
    }
  return true;
}

bool standard_smooth(const Eigen::MatrixXd& latent,
                     const std::vector<int>& labels, double delta,
                     double tol) {
  auto groups = oracle::groups_of(labels);
  for (const auto& [ci, mi] : groups)
    for (const auto& [cj, mj] : groups) {
      if (ci == cj) continue;
      for (int l : mi)
        for (int m : mi) {
          if (m == l) continue;
          for (int n : mj) {
            const double arg = delta + oracle::sq_dist_rows(latent, l, m) -
                               oracle::sq_dist_rows(latent, l, n);
            if (std::abs(arg) < tol) return false;
          }
        }
    }
  return true;
}

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  const double h = 1e-5;
  double worst = 0.0;

  {  // balanced triplet loss
    std::mt19937_64 rng(515151);
    int done = 0;
    while (done < 20) {
      const int n_classes = 2 + static_cast<int>(rng() % 2);
      const int n_per = 2 + static_cast<int>(rng() % 2);
      Eigen::MatrixXd latent =
          oracle::random_matrix(rng, n_classes * n_per, 2, 1.2);
      const auto labels = oracle::balanced_labels(n_classes, n_per);
      const double delta = 2.0;
      if (!balanced_smooth(latent, labels, delta, 1e-3)) continue;
      auto res = loss_balanced_triplet(latent, labels, delta);
      for (Eigen::Index r = 0; r < latent.rows(); ++r)
        for (Eigen::Index c = 0; c < latent.cols(); ++c) {
          Eigen::MatrixXd lp = latent, lm = latent;
          lp(r, c) += h;
          lm(r, c) -= h;
          const double fd = (oracle::loss_balanced(lp, labels, delta) -
                             oracle::loss_balanced(lm, labels, delta)) /
                            (2.0 * h);
          worst = std::max(worst, rel_err(fd, res.grad(r, c)));
        }
      ++done;
    }
  }
  {  // standard triplet loss
    std::mt19937_64 rng(525252);
    int done = 0;
    while (done < 20) {
      const int n_classes = 2 + static_cast<int>(rng() % 2);
      const int n_per = 2 + static_cast<int>(rng() % 2);
      Eigen::MatrixXd latent =
          oracle::random_matrix(rng, n_classes * n_per, 2, 1.2);
      const auto labels = oracle::balanced_labels(n_classes, n_per);
      const double delta = 2.0;
      if (!standard_smooth(latent, labels, delta, 1e-3)) continue;
      auto res = loss_standard_triplet(latent, labels, delta);
      for (Eigen::Index r = 0; r < latent.rows(); ++r)
        for (Eigen::Index c = 0; c < latent.cols(); ++c) {
          Eigen::MatrixXd lp = latent, lm = latent;
          lp(r, c) += h;
          lm(r, c) -= h;
          const double fd = (oracle::loss_standard(lp, labels, delta) -
                             oracle::loss_standard(lm, labels, delta)) /
                            (2.0 * h);
          worst = std::max(worst, rel_err(fd, res.grad(r, c)));
        }
      ++done;
    }
  }
  {  // GP log marginal likelihood
    std::mt19937_64 rng(535353);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    for (int it = 0; it < 20; ++it) {
      const int n = 2 + static_cast<int>(rng() % 4);
      const int dim = 1 + static_cast<int>(rng() % 3);
      Eigen::MatrixXd inputs = oracle::random_matrix(rng, n, dim);
      Eigen::VectorXd y = oracle::random_matrix(rng, n, 1).col(0);
      GpDimHyper hy;
      hy.log_lengthscale = unif(rng);
      hy.log_signal_sd = unif(rng);
      hy.log_noise_sd = -1.0 + unif(rng);
      auto r = log_marginal_likelihood(inputs, y, hy);
      auto check = [&](double GpDimHyper::*field, double analytic) {
        GpDimHyper hp = hy, hm = hy;
        hp.*field += h;
        hm.*field -= h;
        const double fd = (log_marginal_likelihood(inputs, y, hp).lml -
                           log_marginal_likelihood(inputs, y, hm).lml) /
                          (2.0 * h);
        worst = std::max(worst, rel_err(fd, analytic));
      };
      check(&GpDimHyper::log_lengthscale, r.grad_log_lengthscale);
      check(&GpDimHyper::log_signal_sd, r.grad_log_signal_sd);
      check(&GpDimHyper::log_noise_sd, r.grad_log_noise_sd);
    }
  }
  const double secs = seconds_since(t0);
  report(2, worst < 1e-4 && secs < 10.0,
         "analytic gradients match central differences (h=1e-5)",
         "worst rel err=" + std::to_string(worst) + ", " +
             std::to_string(secs) + "s");
}

// ---- criterion 3: GP posterior oracle + noise-free interpolation ----
void criterion_3() {
  std::mt19937_64 rng(616161);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  double worst_mean = 0.0;
  for (int it = 0; it < 100; ++it) {
    const int n = 2 + static_cast<int>(rng() % 5);
    const int dim = 1 + static_cast<int>(rng() % 3);
    Eigen::MatrixXd inputs = oracle::random_matrix(rng, n, dim);
    Eigen::MatrixXd targets = oracle::random_matrix(rng, n, 2);
    Eigen::MatrixXd query = oracle::random_matrix(rng, 3, dim);
    GpEffectiveHyper hy;
    hy.lengthscale = unif(rng);
    hy.signal_sd = unif(rng);
    hy.noise_var = 0.1 * unif(rng);
    GpModel m = gp_with_hyperparams(inputs, targets, {hy});
    auto pred = predict_prototypes(m, query);
    for (Eigen::Index d = 0; d < 2; ++d) {
      Eigen::VectorXd ref =
          oracle::gp_mean_dense(inputs, targets.col(d), query, hy.lengthscale,
                                hy.signal_sd, hy.noise_var);
      for (Eigen::Index q = 0; q < query.rows(); ++q)
        worst_mean = std::max(worst_mean,
                              std::abs(pred.mean(q, d) - ref(q)));
    }
  }

  double worst_interp = 0.0;
  for (int it = 0; it < 20; ++it) {
    const int n = 3 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd inputs = oracle::random_matrix(rng, n, 2);
    Eigen::MatrixXd targets = oracle::random_matrix(rng, n, 3);
    GpEffectiveHyper hy;
    hy.lengthscale = 1.0 + unif(rng);
    hy.signal_sd = 1.0;
    hy.noise_var = 0.0;
    GpModel m = gp_with_hyperparams(inputs, targets, {hy});
    auto pred = predict_prototypes(m, inputs);
    worst_interp = std::max(worst_interp,
                            (pred.mean - targets).cwiseAbs().maxCoeff());
  }
  report(3, worst_mean < 1e-8 && worst_interp < 1e-6,
         "posterior mean matches dense solves; noise-free GP interpolates",
         "worst mean err=" + std::to_string(worst_mean) +
             ", worst interp err=" + std::to_string(worst_interp));
}

// ---- criterion 4: harmonic mean identities ----
void criterion_4() {
  const bool paper_row = std::abs(harmonic_mean(62.2, 76.7) - 68.7) <= 0.05;
  bool identities = true;
  std::mt19937_64 rng(717171);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    const double a = unif(rng);
    if (std::abs(harmonic_mean(a, a) - a) > 1e-12) identities = false;
    if (harmonic_mean(0.0, a) != 0.0) identities = false;
  }
  report(4, paper_row && identities,
         "H(62.2,76.7)=68.7 within 0.05; H(a,a)=a; H(0,x)=0",
         "H(62.2,76.7)=" + std::to_string(harmonic_mean(62.2, 76.7)));
}

// Shared golden-run artifacts for criteria 5, 6 and 8.
struct GoldenRun {
  RunConfig cfg;
  PipelineResult result;
  double wall_seconds = 0.0;
};

RunConfig golden_config() {
  RunConfig cfg;
  cfg.synth = SynthSpec{};  // the documented default synthetic spec, seed 1
  cfg.triplet.n_latent = 64;
  cfg.seed = 1;
  return cfg;
}

GoldenRun run_golden(const fs::path& out) {
  GoldenRun g;
  g.cfg = golden_config();
  g.cfg.out_dir = out;
  const auto t0 = std::chrono::steady_clock::now();
  g.result = run_all(g.cfg);
  g.wall_seconds = seconds_since(t0);
  return g;
}

// ---- criterion 5: calibration properties ----
void criterion_5(const GoldenRun& golden) {
  // gamma = 0 reduction on 1000 random points.
  std::mt19937_64 rng(818181);
  Eigen::MatrixXd centers = oracle::random_matrix(rng, 8, 3);
  PrototypeSet protos = PrototypeSet::empty(8, 3);
  protos.prototypes = centers;
  for (int c = 0; c < 8; ++c) {
    protos.defined[static_cast<size_t>(c)] = 1;
    protos.seen_mask[static_cast<size_t>(c)] = c < 4 ? 1 : 0;
  }
  const std::vector<int> cands = {0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<int> seen = {0, 1, 2, 3};
  int reduction_fails = 0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd x = oracle::random_matrix(rng, 3, 1).col(0);
    if (predict_calibrated(protos, 0.0, x, cands, seen) !=
        predict_nearest(protos, x, cands))
      ++reduction_fails;
  }

  // Monotone trade-off along the golden run's full sweep.
  bool monotone = true;
  const auto& curve = golden.result.report.curve;
  for (size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].a_s > curve[i - 1].a_s + 1e-12) monotone = false;
    if (curve[i].a_u < curve[i - 1].a_u - 1e-12) monotone = false;
  }

  // AUSUC of a perfect classifier is exactly 1.
  ClassificationStage perfect;
  perfect.prototypes = protos;
  perfect.seen_classes = seen;
  perfect.unseen_classes = {4, 5, 6, 7};
  perfect.probe_latent.resize(8, 3);
  for (int c = 0; c < 8; ++c) {
    perfect.probe_latent.row(c) = centers.row(c);
    perfect.probe_labels.push_back(c);
  }
  const double perfect_ausuc = ausuc(perfect, GammaGridSpec{101, {}}).ausuc;

  report(5,
         reduction_fails == 0 && monotone && perfect_ausuc == 1.0,
         "gamma=0 reduces to nearest-prototype; sweep is monotone; perfect "
         "AUSUC=1",
         "reduction fails=" + std::to_string(reduction_fails) +
             ", perfect ausuc=" + std::to_string(perfect_ausuc));
}

// ---- criterion 6: end-to-end synthetic recovery ----
void criterion_6(const GoldenRun& golden) {
  const auto& r = golden.result.report;
  report(6,
         r.a_t >= 0.90 && r.h >= 0.85 && golden.wall_seconds < 60.0,
         "default synthetic run reaches a_t >= 0.90 and h >= 0.85 in < 60s",
         "a_t=" + std::to_string(r.a_t) + ", h=" + std::to_string(r.h) +
             ", wall=" + std::to_string(golden.wall_seconds) + "s");
}

// ---- criterion 7: class-imbalance robustness ----
void criterion_7() {
  bool all_nonneg = true;
  std::string detail;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    RunConfig cfg;
    SynthSpec spec;
    spec.n_seen = 30;
    spec.n_val = 6;
    spec.n_unseen = 8;
    spec.imbalance_ratio = 20.0;
    spec.min_class_count = 30;
    spec.seed = seed;
    cfg.synth = spec;
    cfg.triplet.n_latent = 64;
    cfg.seed = seed;

    cfg.embed_mode = EmbedMode::BalancedTriplet;
    const double h_balanced = run_all(cfg).report.h;
    cfg.embed_mode = EmbedMode::StandardTriplet;
    const double h_standard = run_all(cfg).report.h;
    const double gap = h_balanced - h_standard;
    if (gap < 0.0) all_nonneg = false;
    detail += "seed" + std::to_string(seed) + " gap=" + std::to_string(gap) +
              " ";
  }
  report(7, all_nonneg,
         "balanced-triplet H >= standard-triplet H at imbalance 20, 3 seeds",
         detail);
}

// ---- criterion 8: manifest-driven bit-identical reruns ----
void criterion_8(const GoldenRun& golden) {
  Manifest m = read_manifest(golden.cfg.out_dir / "manifest.txt");
  RunConfig rebuilt = config_from_manifest(m);
  rebuilt.out_dir = fs::temp_directory_path() / "zsl_acceptance_rerun";
  fs::remove_all(rebuilt.out_dir);
  run_all(rebuilt);
  const bool same =
      slurp(golden.cfg.out_dir / "report.csv") ==
          slurp(rebuilt.out_dir / "report.csv") &&
      slurp(golden.cfg.out_dir / "curve.csv") ==
          slurp(rebuilt.out_dir / "curve.csv") &&
      slurp(golden.cfg.out_dir / "per_class.csv") ==
          slurp(rebuilt.out_dir / "per_class.csv");
  report(8, same, "rerun from the written manifest is bit-identical",
         same ? "report/curve/per_class byte-equal" : "byte mismatch");
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();

  fs::path golden_dir = fs::temp_directory_path() / "zsl_acceptance_golden";
  fs::remove_all(golden_dir);
  GoldenRun golden = run_golden(golden_dir);

  criterion_5(golden);
  criterion_6(golden);
  criterion_7();
  criterion_8(golden);

  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria failed\n", g_failures);
  return 1;
}
