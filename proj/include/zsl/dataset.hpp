#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace zsl {

// Class-level split. Sets are kept as sorted id vectors.
struct ClassSplit {
  std::vector<int> train_seen;
  std::vector<int> val_unseen;
  std::vector<int> test_unseen;
};

struct PreprocessConfig {
  double clip_value = 7.0;
  bool enabled = true;
};

struct Dataset {
  Eigen::MatrixXd features;   // n_samples x n_feature
  std::vector<int> labels;    // class id per sample, in [0, n_classes)
  Eigen::MatrixXd semantics;  // n_classes x n_semantic, row index = class id
  ClassSplit split;

  Eigen::Index n_samples() const { return features.rows(); }
  Eigen::Index n_feature() const { return features.cols(); }
  Eigen::Index n_classes() const { return semantics.rows(); }
  Eigen::Index n_semantic() const { return semantics.cols(); }

  std::vector<int> all_classes() const;
  // Row indices carrying the given label.
  std::vector<int> rows_of_class(int c) const;
};

// clamp(v, 0, clip) / clip. The lower clamp keeps the [0,1] output range on
// inputs with negative entries; nonnegative inputs see plain min(v,clip)/clip.
Eigen::MatrixXd clip_and_scale(const Eigen::MatrixXd& features,
                               double clip_value);

struct FeatureStats {
  double mean = 0.0;
  double max = 0.0;
  double q999 = 0.0;  // nearest-rank 0.999 quantile over all entries
};
FeatureStats feature_stats(const Eigen::MatrixXd& features);

// Dataset directory layout:
//   features.csv   one row per sample
//   labels.csv     one integer class id per line
//   attributes.csv one row per class id
//   split.csv      lines "train_seen:<ids>", "val_unseen:<ids>",
//                  "test_unseen:<ids>"
//   features.bin   optional; "ZSLF", u32 rows, u32 cols, f32 data
//                  (little-endian); takes precedence over features.csv
Dataset load_dataset(const std::filesystem::path& dir,
                     const PreprocessConfig& preprocess = {});

void save_dataset(const Dataset& data, const std::filesystem::path& dir,
                  bool binary_features = false);

struct SynthSpec {
  int n_seen = 20;
  int n_val = 4;
  int n_unseen = 5;
  int n_feature = 64;
  int n_semantic = 16;
  double imbalance_ratio = 10.0;
  double noise_sd = 0.05;
  int min_class_count = 20;
  std::uint64_t seed = 1;

  int n_classes() const { return n_seen + n_val + n_unseen; }
};

// Class-imbalanced synthetic dataset. Per-class semantic vectors are drawn
// i.i.d. standard normal; ground-truth prototypes follow the smooth map
// proto = B*s + 0.25*sin(B'*s); features are an affine lift of the prototype
// plus Gaussian noise, offset into the clip window so preprocessing is
// near-lossless. Per-class counts ramp geometrically over
// [min_class_count, min_class_count*imbalance_ratio] under a seeded
// permutation. Fully deterministic per seed.
Dataset synth_dataset(const SynthSpec& spec);

// Compact "k=v,k=v" form used by the CLI --synth flag.
SynthSpec parse_synth_spec(const std::string& text);
std::string synth_spec_to_string(const SynthSpec& spec);

}  // namespace zsl
