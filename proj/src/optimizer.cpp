#include "zsl/optimizer.hpp"

#include <cmath>

#include "zsl/error.hpp"

namespace zsl {

void adam_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
               AdamState& state, const AdamConfig& cfg) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols())
    throw_config("adam_step: gradient shape does not match parameter shape");
  if (!grad.allFinite()) throw_numerical("adam_step: non-finite gradient");

  Eigen::MatrixXd g = grad;
  if (cfg.weight_decay != 0.0 && !cfg.decoupled_decay)
    g += cfg.weight_decay * param;

  state.step += 1;
  const double t = static_cast<double>(state.step);
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  Eigen::MatrixXd m_hat = state.m / bias1;
  Eigen::MatrixXd v_hat = state.v / bias2;
  param -= cfg.lr *
           (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
  if (cfg.weight_decay != 0.0 && cfg.decoupled_decay)
    param -= cfg.lr * cfg.weight_decay * param;
}

}  // namespace zsl
