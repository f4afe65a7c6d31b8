#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "zsl/dataset.hpp"

namespace zsl {

// Linear map from feature space to the latent space: x = w*f + b.
struct LinearEmbedding {
  Eigen::MatrixXd w;  // n_latent x n_feature
  Eigen::VectorXd b;  // n_latent

  Eigen::Index n_latent() const { return w.rows(); }
  Eigen::Index n_feature() const { return w.cols(); }

  static LinearEmbedding identity(Eigen::Index n);
  // Entries i.i.d. uniform in [-1/sqrt(n_feature), +1/sqrt(n_feature)],
  // drawn row-major; b = 0.
  static LinearEmbedding random_init(Eigen::Index n_latent,
                                     Eigen::Index n_feature,
                                     std::uint64_t seed);
};

enum class TripletKind { Balanced, Standard };

struct TripletConfig {
  double delta = 4.0;      // hinge margin
  int n_per_class = 8;     // balanced batch size per class
  int episodes = 500;      // one batch + one optimizer step each
  double lr = 0.002;
  double weight_decay = 0.1;
  std::uint64_t seed = 0;
  int n_latent = 1024;
  TripletKind loss = TripletKind::Balanced;
  bool decoupled_decay = false;
};

// Per-class mean latent vectors. Rows for classes without a computed or
// predicted prototype are undefined and flagged in `defined`.
struct PrototypeSet {
  Eigen::MatrixXd prototypes;  // n_classes x n_latent
  std::vector<std::uint8_t> seen_mask;
  std::vector<std::uint8_t> defined;

  static PrototypeSet empty(Eigen::Index n_classes, Eigen::Index n_latent);
};

// Sequential squared Euclidean distance (ascending dimension index). All
// triplet-loss code sums distances in this one documented order so that an
// independently written loop oracle reproduces results bitwise.
double squared_distance(const double* a, const double* b, Eigen::Index n);

Eigen::MatrixXd embed(const LinearEmbedding& emb,
                      const Eigen::MatrixXd& features);

// n_per_class indices from each class, classes in ascending id order.
// Uniform without replacement when the class has enough samples, with
// replacement otherwise.
std::vector<int> balanced_batch(const std::vector<int>& labels,
                                const std::vector<int>& classes,
                                int n_per_class, std::mt19937_64& rng);

// Uniform sample of the rows whose label is in `classes` (without
// replacement when possible); the sampling used by the standard triplet
// baseline.
std::vector<int> uniform_batch(const std::vector<int>& labels,
                               const std::vector<int>& classes,
                               int batch_size, std::mt19937_64& rng);

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // d loss / d latent, same shape as the batch
};

// Class-balanced triplet loss: for ordered class pairs (ci, cj) and anchors
// l of ci, hinge of delta + ||x_l - mean(ci)||^2 - min_n ||x_n^cj -
// mean(ci)||^2. The mean is the plain batch mean of ci and is differentiated
// through; min ties break toward the lowest batch index; the hinge takes the
// zero branch at the boundary. Summation runs over ascending (ci, cj, l).
LossResult loss_balanced_triplet(const Eigen::MatrixXd& latent,
                                 const std::vector<int>& labels, double delta);

// Standard triplet loss over all (anchor, positive != anchor, negative)
// triples, summed in ascending (ci, cj, l, m, n) order.
LossResult loss_standard_triplet(const Eigen::MatrixXd& latent,
                                 const std::vector<int>& labels, double delta);

struct TrainResult {
  LinearEmbedding embedding;
  std::vector<double> loss_trace;  // one entry per episode
};

// Trains w, b on the samples of data whose label is in data.split.train_seen.
// Balanced mode: balanced_batch -> embed -> loss_balanced_triplet -> adam.
// Standard mode: uniform_batch of the same size -> loss_standard_triplet.
TrainResult train_embedding(const Dataset& data, const TripletConfig& cfg);

// Prototype of each requested class = mean of its latent rows. Rows for
// other classes stay undefined. seen_mask is set for the requested classes.
PrototypeSet class_prototypes(const Eigen::MatrixXd& latent,
                              const std::vector<int>& labels,
                              const std::vector<int>& classes,
                              Eigen::Index n_classes_total);

// Checkpoint: header "ZSLEMB v1 <n_latent> <n_feature>", then w row-major
// one CSV line per row, then b as one CSV line.
void save_embedding(const LinearEmbedding& emb,
                    const std::filesystem::path& file);
LinearEmbedding load_embedding(const std::filesystem::path& file);

void save_loss_trace(const std::vector<double>& trace,
                     const std::filesystem::path& file);

}  // namespace zsl
