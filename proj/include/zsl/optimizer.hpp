#pragma once

#include <Eigen/Core>

namespace zsl {

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Coupled decay adds wd*param to the gradient before the moment update
  // (the common framework default); decoupled subtracts lr*wd*param directly.
  bool decoupled_decay = false;
};

struct AdamState {
  Eigen::MatrixXd m;  // first moment
  Eigen::MatrixXd v;  // second moment
  long step = 0;

  static AdamState like(const Eigen::MatrixXd& param) {
    AdamState s;
    s.m = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    s.v = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    return s;
  }
};

// One bias-corrected Adam update in place. Throws on non-finite gradients.
void adam_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
               AdamState& state, const AdamConfig& cfg);

}  // namespace zsl
