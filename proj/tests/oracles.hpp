// Independent reference implementations used only by tests. Everything here
// is written as plain nested loops, kept deliberately separate from the
// library code paths it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <random>
#include <vector>

namespace oracle {

// Same documented summation order as the library (ascending dimension), so
// loss comparisons can be exact.
inline double sq_dist(const Eigen::MatrixXd& m, int a,
                      const std::vector<double>& mean) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    const double diff = m(a, d) - mean[static_cast<size_t>(d)];
    s += diff * diff;
  }
  return s;
}

inline double sq_dist_rows(const Eigen::MatrixXd& m, int a, int b) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    const double diff = m(a, d) - m(b, d);
    s += diff * diff;
  }
  return s;
}

inline std::map<int, std::vector<int>> groups_of(
    const std::vector<int>& labels) {
  std::map<int, std::vector<int>> g;
  for (size_t i = 0; i < labels.size(); ++i)
    g[labels[i]].push_back(static_cast<int>(i));
  return g;
}

// Class-balanced triplet loss, naive translation of its definition:
// ordered class pairs ascending, anchors ascending, batch-mean of the anchor
// class, min over the negative class members (first index wins ties).
inline double loss_balanced(const Eigen::MatrixXd& latent,
                            const std::vector<int>& labels, double delta) {
  auto groups = groups_of(labels);
  std::map<int, std::vector<double>> means;
  for (const auto& [c, members] : groups) {
    std::vector<double> acc(static_cast<size_t>(latent.cols()), 0.0);
    for (int idx : members)
      for (Eigen::Index d = 0; d < latent.cols(); ++d)
        acc[static_cast<size_t>(d)] += latent(idx, d);
    for (auto& v : acc) v /= static_cast<double>(members.size());
    means[c] = acc;
  }
  double loss = 0.0;
  for (const auto& [ci, members_i] : groups) {
    for (const auto& [cj, members_j] : groups) {
      if (ci == cj) continue;
      double d_neg = 0.0;
      bool first = true;
      for (int n : members_j) {
        const double d = sq_dist(latent, n, means[ci]);
        if (first || d < d_neg) {
          d_neg = d;
          first = false;
        }
      }
      for (int l : members_i) {
        const double d_pos = sq_dist(latent, l, means[ci]);
        const double arg = delta + d_pos - d_neg;
        if (arg > 0.0) loss += arg;
      }
    }
  }
  return loss;
}

// Standard triplet loss over all (anchor, positive, negative) triples in
// ascending (ci, cj, l, m, n) order.
inline double loss_standard(const Eigen::MatrixXd& latent,
                            const std::vector<int>& labels, double delta) {
  auto groups = groups_of(labels);
  double loss = 0.0;
  for (const auto& [ci, members_i] : groups) {
    for (const auto& [cj, members_j] : groups) {
      if (ci == cj) continue;
      for (int l : members_i)
        for (int m : members_i) {
          if (m == l) continue;
          const double d_pos = sq_dist_rows(latent, l, m);
          for (int n : members_j) {
            const double arg = delta + d_pos - sq_dist_rows(latent, l, n);
            if (arg > 0.0) loss += arg;
          }
        }
    }
  }
  return loss;
}

// Scalar Adam recurrence, coupled weight decay.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;
  double step(double param, double grad, double lr, double wd) {
    const double g = grad + wd * param;
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    return param - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

// Posterior mean by a dense LU solve, a different route from the library's
// Cholesky path.
inline Eigen::VectorXd gp_mean_dense(const Eigen::MatrixXd& train_in,
                                     const Eigen::VectorXd& train_y,
                                     const Eigen::MatrixXd& query,
                                     double lengthscale, double signal_sd,
                                     double noise_var) {
  const auto k = [&](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return signal_sd * signal_sd *
           std::exp(-(a - b).squaredNorm() /
                    (2.0 * lengthscale * lengthscale));
  };
  const Eigen::Index n = train_in.rows();
  Eigen::MatrixXd kmat(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      kmat(i, j) = k(train_in.row(i), train_in.row(j));
  kmat.diagonal().array() += noise_var;
  Eigen::VectorXd weights = kmat.fullPivLu().solve(train_y);
  Eigen::VectorXd out(query.rows());
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      s += k(query.row(q), train_in.row(i)) * weights(i);
    out(q) = s;
  }
  return out;
}

// Deterministic random test instances.
inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows,
                                     Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = gauss(rng) * scale;
  return m;
}

// Balanced batch with n_classes * n_per samples, labels grouped by class.
inline std::vector<int> balanced_labels(int n_classes, int n_per) {
  std::vector<int> labels;
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < n_per; ++i) labels.push_back(c);
  return labels;
}

}  // namespace oracle
