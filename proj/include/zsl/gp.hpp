#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace zsl {

// ||a_p - b_q||^2 for all row pairs.
Eigen::MatrixXd pairwise_sq_dists(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b);

// K[p][q] = signal_sd^2 * exp(-||sa_p - sb_q||^2 / (2 lengthscale^2))
Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb,
                           double lengthscale, double signal_sd);

// Median of the off-diagonal pairwise Euclidean distances ("median
// heuristic"); 1.0 when fewer than two distinct points.
double median_pairwise_distance(const Eigen::MatrixXd& points);

// Raw optimizer coordinates for one latent dimension. Effective values:
//   lengthscale = exp(log_lengthscale)
//   signal_sd   = exp(log_signal_sd)
//   noise_sd    = noise_floor + exp(log_noise_sd)
// The additive floor keeps the linear system solvable on duplicated inputs
// while leaving the parameterization smooth for gradient ascent.
struct GpDimHyper {
  double log_lengthscale = 0.0;
  double log_signal_sd = 0.0;
  double log_noise_sd = 0.0;
};

struct GpFitConfig {
  double lr = 0.01;
  int epochs = 1000;
  std::uint64_t seed = 0;
  double noise_floor = 1e-4;
};

struct LmlResult {
  double lml = 0.0;
  double grad_log_lengthscale = 0.0;
  double grad_log_signal_sd = 0.0;
  double grad_log_noise_sd = 0.0;
  double jitter_used = 0.0;
};

// Log evidence of one output dimension and its gradient in the raw log
// coordinates:
//   lml = -1/2 y^T (K+s^2 I)^-1 y - 1/2 log det(K+s^2 I) - (L/2) log 2pi
// Gradients via  d lml/d theta = 1/2 tr((aa^T - A^-1) dA/d theta).
LmlResult log_marginal_likelihood(const Eigen::MatrixXd& inputs,
                                  const Eigen::VectorXd& targets,
                                  const GpDimHyper& hyper,
                                  double noise_floor = 1e-4);

// Fitted state of one latent dimension.
struct GpDimState {
  double lengthscale = 1.0;
  double signal_sd = 1.0;
  double noise_var = 0.0;
  Eigen::MatrixXd chol;    // lower factor of K + noise_var I + jitter I
  Eigen::VectorXd alpha;   // (K + noise_var I + jitter I)^-1 targets
  double jitter = 0.0;
  double initial_lml = 0.0;
  double final_lml = 0.0;
};

struct GpModel {
  Eigen::MatrixXd train_inputs;   // L x n_semantic
  Eigen::MatrixXd train_targets;  // L x n_latent
  std::vector<GpDimState> dims;   // one per latent dimension

  Eigen::Index n_latent() const { return train_targets.cols(); }
  Eigen::Index n_semantic() const { return train_inputs.cols(); }
};

// Per-dimension evidence maximization by Adam ascent in log space from the
// documented initialization (median-heuristic lengthscale, target-sd signal,
// noise at a tenth of signal).
GpModel fit_gp(const Eigen::MatrixXd& seen_semantics,
               const Eigen::MatrixXd& seen_prototypes, const GpFitConfig& cfg);

// Model with fixed effective hyperparameters (no optimization); used by the
// frozen-refit path and by tests. `per_dim` may hold one entry, shared by
// every dimension, or one entry per dimension.
struct GpEffectiveHyper {
  double lengthscale = 1.0;
  double signal_sd = 1.0;
  double noise_var = 0.0;
};
GpModel gp_with_hyperparams(const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& targets,
                            const std::vector<GpEffectiveHyper>& per_dim);

struct GpPrediction {
  Eigen::MatrixXd mean;  // n_query x n_latent
  Eigen::MatrixXd var;   // n_query x n_latent, includes the noise term
};
GpPrediction predict_prototypes(const GpModel& model,
                                const Eigen::MatrixXd& s_query);

// Kernel ridge baseline: k_q (K + lambda I)^-1 targets with one shared set
// of fixed hyperparameters; identical to the GP posterior mean with sigma^2
// frozen at lambda.
struct KrrConfig {
  double lengthscale = 1.0;
  double signal_sd = 1.0;
  double lambda = 0.1;
};
Eigen::MatrixXd predict_prototypes_krr(const Eigen::MatrixXd& seen_semantics,
                                       const Eigen::MatrixXd& seen_prototypes,
                                       const Eigen::MatrixXd& s_query,
                                       const KrrConfig& cfg);

// CSV checkpoint: dim,log_lengthscale,log_signal_sd,log_noise_sd,
// jitter_used,final_lml (logs of the effective values).
void save_gp_checkpoint(const GpModel& model,
                        const std::filesystem::path& file);
std::vector<GpEffectiveHyper> load_gp_checkpoint(
    const std::filesystem::path& file);

}  // namespace zsl
