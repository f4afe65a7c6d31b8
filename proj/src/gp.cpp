#include "zsl/gp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "zsl/csv.hpp"
#include "zsl/error.hpp"
#include "zsl/optimizer.hpp"

namespace zsl {

Eigen::MatrixXd pairwise_sq_dists(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols())
    throw_config("pairwise_sq_dists: dimension mismatch (" +
                 std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) +
                 ")");
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index p = 0; p < a.rows(); ++p)
    for (Eigen::Index q = 0; q < b.rows(); ++q)
      out(p, q) = (a.row(p) - b.row(q)).squaredNorm();
  return out;
}

namespace {

Eigen::MatrixXd rbf_from_sq(const Eigen::MatrixXd& sq, double lengthscale,
                            double signal_sd) {
  if (!(lengthscale > 0.0) || !(signal_sd > 0.0))
    throw_config("rbf_kernel: hyperparameters must be positive");
  const double s2 = signal_sd * signal_sd;
  const double inv = -0.5 / (lengthscale * lengthscale);
  return s2 * (sq.array() * inv).exp().matrix();
}

// Cholesky of A + jitter I, escalating jitter by 10x from 1e-8*signal^2 up
// to 1e-2*signal^2 before giving up.
struct CholResult {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

CholResult chol_with_jitter(const Eigen::MatrixXd& a, double signal_sd,
                            const std::string& what) {
  const double s2 = signal_sd * signal_sd;
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd m = a;
    if (jitter > 0.0) m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success)
      return {Eigen::MatrixXd(llt.matrixL()), jitter};
    jitter = jitter == 0.0 ? 1e-8 * s2 : jitter * 10.0;
    if (jitter > 1e-2 * s2) break;
  }
  throw_numerical(what + ": Cholesky failed after max jitter escalation");
}

double log_det_from_chol(const Eigen::MatrixXd& lower) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i)
    s += std::log(lower(i, i));
  return 2.0 * s;
}

struct LmlInternal {
  double lml;
  Eigen::Vector3d grad;  // wrt (log_lengthscale, log_signal_sd, log_noise_sd)
  double jitter;
};

LmlInternal lml_from_sq(const Eigen::MatrixXd& sq,
                        const Eigen::VectorXd& targets,
                        const GpDimHyper& hyper, double noise_floor) {
  const Eigen::Index n = targets.size();
  const double lengthscale = std::exp(hyper.log_lengthscale);
  const double signal_sd = std::exp(hyper.log_signal_sd);
  const double noise_sd = noise_floor + std::exp(hyper.log_noise_sd);
  const double noise_var = noise_sd * noise_sd;

  Eigen::MatrixXd kn = rbf_from_sq(sq, lengthscale, signal_sd);
  Eigen::MatrixXd a = kn;
  a.diagonal().array() += noise_var;
  auto chol = chol_with_jitter(a, signal_sd, "log_marginal_likelihood");

  Eigen::VectorXd alpha = chol.lower.triangularView<Eigen::Lower>().solve(targets);
  alpha = chol.lower.transpose().triangularView<Eigen::Upper>().solve(alpha);

  const double quad = targets.dot(alpha);
  const double logdet = log_det_from_chol(chol.lower);
  const double lml = -0.5 * quad - 0.5 * logdet -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // d lml / d theta = 1/2 tr((alpha alpha^T - A^-1) dA/d theta)
  Eigen::MatrixXd ainv = Eigen::MatrixXd::Identity(n, n);
  chol.lower.triangularView<Eigen::Lower>().solveInPlace(ainv);
  chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(ainv);
  Eigen::MatrixXd m = alpha * alpha.transpose() - ainv;

  const double inv_l2 = 1.0 / (lengthscale * lengthscale);
  Eigen::MatrixXd dk_dlogl = kn.cwiseProduct(sq) * inv_l2;
  const double g_logl = 0.5 * m.cwiseProduct(dk_dlogl).sum();
  const double g_loga = 0.5 * m.cwiseProduct(2.0 * kn).sum();
  // noise: dA/d log_noise_sd = 2 sd (sd - floor) I
  const double g_logs = noise_sd * (noise_sd - noise_floor) * m.trace();

  return {lml, Eigen::Vector3d(g_logl, g_loga, g_logs), chol.jitter};
}

}  // namespace

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb,
                           double lengthscale, double signal_sd) {
  return rbf_from_sq(pairwise_sq_dists(sa, sb), lengthscale, signal_sd);
}

double median_pairwise_distance(const Eigen::MatrixXd& points) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j)
      d.push_back((points.row(i) - points.row(j)).norm());
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  double med = d[(d.size() - 1) / 2];
  return med > 0.0 ? med : 1.0;
}

LmlResult log_marginal_likelihood(const Eigen::MatrixXd& inputs,
                                  const Eigen::VectorXd& targets,
                                  const GpDimHyper& hyper,
                                  double noise_floor) {
  if (inputs.rows() != targets.size())
    throw_config("log_marginal_likelihood: inputs/targets size mismatch");
  if (inputs.rows() < 1)
    throw_config("log_marginal_likelihood: need at least one class");
  auto r = lml_from_sq(pairwise_sq_dists(inputs, inputs), targets, hyper,
                       noise_floor);
  LmlResult out;
  out.lml = r.lml;
  out.grad_log_lengthscale = r.grad(0);
  out.grad_log_signal_sd = r.grad(1);
  out.grad_log_noise_sd = r.grad(2);
  out.jitter_used = r.jitter;
  return out;
}

namespace {

GpDimState finalize_dim(const Eigen::MatrixXd& sq,
                        const Eigen::VectorXd& targets, double lengthscale,
                        double signal_sd, double noise_var) {
  GpDimState st;
  st.lengthscale = lengthscale;
  st.signal_sd = signal_sd;
  st.noise_var = noise_var;
  Eigen::MatrixXd a = rbf_from_sq(sq, lengthscale, signal_sd);
  a.diagonal().array() += noise_var;
  auto chol = chol_with_jitter(a, signal_sd, "fit_gp");
  st.chol = chol.lower;
  st.jitter = chol.jitter;
  st.alpha = st.chol.triangularView<Eigen::Lower>().solve(targets);
  st.alpha =
      st.chol.transpose().triangularView<Eigen::Upper>().solve(st.alpha);
  return st;
}

}  // namespace

GpModel fit_gp(const Eigen::MatrixXd& seen_semantics,
               const Eigen::MatrixXd& seen_prototypes,
               const GpFitConfig& cfg) {
  if (seen_semantics.rows() != seen_prototypes.rows())
    throw_config("fit_gp: semantics/prototypes row mismatch");
  if (seen_semantics.rows() < 2)
    throw_config("fit_gp: need at least 2 seen classes");

  GpModel model;
  model.train_inputs = seen_semantics;
  model.train_targets = seen_prototypes;
  model.dims.resize(static_cast<size_t>(seen_prototypes.cols()));

  const Eigen::MatrixXd sq = pairwise_sq_dists(seen_semantics, seen_semantics);
  const double init_lengthscale = median_pairwise_distance(seen_semantics);

  for (Eigen::Index d = 0; d < seen_prototypes.cols(); ++d) {
    const Eigen::VectorXd y = seen_prototypes.col(d);
    const double mean = y.mean();
    double sd = std::sqrt((y.array() - mean).square().mean());
    if (!(sd > 1e-3)) sd = 1e-3;
    const double noise0 = 0.1 * sd;

    GpDimHyper hyper;
    hyper.log_lengthscale = std::log(init_lengthscale);
    hyper.log_signal_sd = std::log(sd);
    hyper.log_noise_sd =
        std::log(std::max(noise0 - cfg.noise_floor, 1e-12));

    Eigen::MatrixXd params(3, 1);
    params << hyper.log_lengthscale, hyper.log_signal_sd, hyper.log_noise_sd;
    AdamState state = AdamState::like(params);
    AdamConfig adam;
    adam.lr = cfg.lr;

    double initial_lml = 0.0;
    double last_lml = 0.0;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
      GpDimHyper h{params(0, 0), params(1, 0), params(2, 0)};
      auto r = lml_from_sq(sq, y, h, cfg.noise_floor);
      if (!std::isfinite(r.lml))
        throw_numerical("fit_gp: non-finite log marginal likelihood in dim " +
                        std::to_string(d));
      if (ep == 0) initial_lml = r.lml;
      last_lml = r.lml;
      Eigen::MatrixXd grad(3, 1);
      grad << -r.grad(0), -r.grad(1), -r.grad(2);  // ascent
      adam_step(params, grad, state, adam);
    }

    const double lengthscale = std::exp(params(0, 0));
    const double signal_sd = std::exp(params(1, 0));
    const double noise_sd = cfg.noise_floor + std::exp(params(2, 0));
    auto st = finalize_dim(sq, y, lengthscale, signal_sd, noise_sd * noise_sd);
    if (cfg.epochs == 0) {
      GpDimHyper h{params(0, 0), params(1, 0), params(2, 0)};
      auto r = lml_from_sq(sq, y, h, cfg.noise_floor);
      initial_lml = last_lml = r.lml;
    }
    st.initial_lml = initial_lml;
    st.final_lml = last_lml;
    model.dims[static_cast<size_t>(d)] = std::move(st);
  }
  return model;
}

GpModel gp_with_hyperparams(const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& targets,
                            const std::vector<GpEffectiveHyper>& per_dim) {
  if (inputs.rows() != targets.rows())
    throw_config("gp_with_hyperparams: inputs/targets row mismatch");
  const size_t n_dims = static_cast<size_t>(targets.cols());
  if (per_dim.size() != 1 && per_dim.size() != n_dims)
    throw_config("gp_with_hyperparams: need 1 or n_latent hyper entries");

  GpModel model;
  model.train_inputs = inputs;
  model.train_targets = targets;
  model.dims.resize(n_dims);
  const Eigen::MatrixXd sq = pairwise_sq_dists(inputs, inputs);
  for (size_t d = 0; d < n_dims; ++d) {
    const auto& h = per_dim.size() == 1 ? per_dim[0] : per_dim[d];
    auto st = finalize_dim(sq, targets.col(static_cast<Eigen::Index>(d)),
                           h.lengthscale, h.signal_sd, h.noise_var);
    model.dims[d] = std::move(st);
  }
  return model;
}

GpPrediction predict_prototypes(const GpModel& model,
                                const Eigen::MatrixXd& s_query) {
  if (s_query.cols() != model.n_semantic())
    throw_config("predict_prototypes: semantic dimension mismatch (" +
                 std::to_string(s_query.cols()) + " vs " +
                 std::to_string(model.n_semantic()) + ")");
  if (model.dims.empty()) throw_config("predict_prototypes: model not fitted");

  const Eigen::MatrixXd sq = pairwise_sq_dists(s_query, model.train_inputs);
  GpPrediction pred;
  pred.mean.resize(s_query.rows(), model.n_latent());
  pred.var.resize(s_query.rows(), model.n_latent());

  for (Eigen::Index d = 0; d < model.n_latent(); ++d) {
    const auto& st = model.dims[static_cast<size_t>(d)];
    Eigen::MatrixXd kq = rbf_from_sq(sq, st.lengthscale, st.signal_sd);
    pred.mean.col(d) = kq * st.alpha;
    // var = k(q,q) + sigma^2 - ||L^-1 k_q||^2, clamped at zero
    const double prior = st.signal_sd * st.signal_sd + st.noise_var;
    for (Eigen::Index q = 0; q < s_query.rows(); ++q) {
      Eigen::VectorXd w = st.chol.triangularView<Eigen::Lower>().solve(
          kq.row(q).transpose());
      pred.var(q, d) = std::max(prior - w.squaredNorm(), 0.0);
    }
  }
  return pred;
}

Eigen::MatrixXd predict_prototypes_krr(const Eigen::MatrixXd& seen_semantics,
                                       const Eigen::MatrixXd& seen_prototypes,
                                       const Eigen::MatrixXd& s_query,
                                       const KrrConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw_config("predict_prototypes_krr: lambda must be > 0");
  if (seen_semantics.rows() != seen_prototypes.rows())
    throw_config("predict_prototypes_krr: semantics/prototypes row mismatch");
  Eigen::MatrixXd a =
      rbf_kernel(seen_semantics, seen_semantics, cfg.lengthscale, cfg.signal_sd);
  a.diagonal().array() += cfg.lambda;
  auto chol = chol_with_jitter(a, cfg.signal_sd, "predict_prototypes_krr");
  Eigen::MatrixXd weights = chol.lower.triangularView<Eigen::Lower>().solve(
      seen_prototypes);
  weights =
      chol.lower.transpose().triangularView<Eigen::Upper>().solve(weights);
  return rbf_kernel(s_query, seen_semantics, cfg.lengthscale, cfg.signal_sd) *
         weights;
}

void save_gp_checkpoint(const GpModel& model,
                        const std::filesystem::path& file) {
  std::ostringstream os;
  os << "dim,log_lengthscale,log_signal_sd,log_noise_sd,jitter_used,final_lml\n";
  for (size_t d = 0; d < model.dims.size(); ++d) {
    const auto& st = model.dims[d];
    os << d << ',' << format_double(std::log(st.lengthscale)) << ','
       << format_double(std::log(st.signal_sd)) << ','
       << format_double(0.5 * std::log(st.noise_var)) << ','
       << format_double(st.jitter) << ',' << format_double(st.final_lml)
       << '\n';
  }
  write_text_file(file, os.str());
}

std::vector<GpEffectiveHyper> load_gp_checkpoint(
    const std::filesystem::path& file) {
  auto lines = read_lines(file);
  if (lines.size() < 2) throw_io(file.string() + ": empty GP checkpoint");
  std::vector<GpEffectiveHyper> out;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto toks = split_csv_line(lines[i]);
    if (toks.size() != 6)
      throw_io(file.string() + ": row " + std::to_string(i) +
               " has " + std::to_string(toks.size()) + " fields, expected 6");
    GpEffectiveHyper h;
    const std::string ctx = file.string() + " row " + std::to_string(i);
    h.lengthscale = std::exp(parse_double(toks[1], ctx));
    h.signal_sd = std::exp(parse_double(toks[2], ctx));
    const double noise_sd = std::exp(parse_double(toks[3], ctx));
    h.noise_var = noise_sd * noise_sd;
    out.push_back(h);
  }
  return out;
}

}  // namespace zsl
