#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "zsl/embedding.hpp"

namespace zsl {

// argmin over candidates of ||x - mu_c||^2, ties to the lowest class id.
int predict_nearest(const PrototypeSet& prototypes, const Eigen::VectorXd& x,
                    const std::vector<int>& candidates);

// argmax over candidates of -||x - mu_c||^2 - gamma * [c in seen_set],
// ties to the lowest class id.
int predict_calibrated(const PrototypeSet& prototypes, double gamma,
                       const Eigen::VectorXd& x,
                       const std::vector<int>& candidates,
                       const std::vector<int>& seen_set);

struct CalibratedClassifier {
  PrototypeSet prototypes;
  double gamma = 0.0;
};

struct PerClassAccuracy {
  std::map<int, double> per_class;
  double mean = 0.0;  // unweighted over classes
};
PerClassAccuracy per_class_accuracy(const std::vector<int>& preds,
                                    const std::vector<int>& labels,
                                    const std::vector<int>& classes);

// 2ab/(a+b), 0 when a+b == 0.
double harmonic_mean(double a, double b);

// Everything needed to score a calibrated sweep on one pool of probes.
struct ClassificationStage {
  PrototypeSet prototypes;
  Eigen::MatrixXd probe_latent;  // one probe per row
  std::vector<int> probe_labels;
  std::vector<int> seen_classes;    // candidates penalized by gamma
  std::vector<int> unseen_classes;  // remaining candidates

  std::vector<int> candidates() const;  // seen + unseen, sorted
};

struct GammaGridSpec {
  int count = 201;
  // When unset the grid spans [-d_max, d_max] with d_max the maximum
  // observed probe-to-candidate squared distance.
  std::optional<std::pair<double, double>> range;
};
std::vector<double> gamma_grid_values(const GammaGridSpec& spec, double d_max);

// Default grid half-width: max over probes of the larger of (squared
// distance to the nearest seen candidate, squared distance to the nearest
// unseen candidate). Every per-probe flip threshold is the difference of
// those two numbers, so gamma = -d_max forces every probe to the seen side
// and gamma = +d_max to the unseen side: the sweep saturates both limits
// while staying fine near the useful range.
double max_probe_prototype_sq_dist(const ClassificationStage& stage);

struct StageAccuracy {
  double a_s = 0.0;  // unweighted mean over seen classes with probes
  double a_u = 0.0;  // unweighted mean over unseen classes with probes
  std::map<int, double> per_class;
};
StageAccuracy evaluate_stage(const ClassificationStage& stage, double gamma);

// Grid search for the gamma maximizing the harmonic mean of (a_u, a_s) on
// the stage; ties return the smallest gamma.
double fit_gamma(const ClassificationStage& stage, const GammaGridSpec& grid);

struct SweepPoint {
  double gamma = 0.0;
  double a_s = 0.0;
  double a_u = 0.0;
};

struct AusucResult {
  double ausuc = 0.0;
  std::vector<SweepPoint> curve;
};
AusucResult ausuc(const ClassificationStage& stage, const GammaGridSpec& grid);

// Area under the (a_s, a_u) staircase envelope: points sorted by a_s,
// deduplicated keeping the max a_u, upper envelope taken right-to-left,
// trapezoid integration from a_s = 0.
double ausuc_from_points(std::vector<std::pair<double, double>> points);

struct EvalReport {
  std::map<int, double> per_class_acc;
  double a_t = 0.0;
  double a_u = 0.0;
  double a_s = 0.0;
  double h = 0.0;
  double ausuc = 0.0;
  double gamma = 0.0;
  std::vector<SweepPoint> curve;
};

// Final-stage inputs: prototypes for every class, test probes for the
// unseen classes and held-out probes for the seen classes.
struct EvalSetup {
  PrototypeSet prototypes;
  Eigen::MatrixXd unseen_latent;
  std::vector<int> unseen_labels;
  Eigen::MatrixXd seen_latent;
  std::vector<int> seen_labels;
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
};

// a_t restricts candidates to the unseen classes and ignores gamma; a_u and
// a_s run the calibrated classifier against all classes; the curve sweeps
// gamma over the grid on the combined probe pool.
EvalReport evaluate_full(const EvalSetup& setup, double gamma,
                         const GammaGridSpec& grid);

// report.csv (metric,value), curve.csv (gamma,a_s,a_u),
// per_class.csv (class,accuracy)
void save_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace zsl
