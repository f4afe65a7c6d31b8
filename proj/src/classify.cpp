#include "zsl/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "zsl/csv.hpp"
#include "zsl/error.hpp"

namespace zsl {

namespace {

void check_candidate(const PrototypeSet& prototypes, int c) {
  if (c < 0 || c >= prototypes.prototypes.rows() ||
      !prototypes.defined[static_cast<size_t>(c)])
    throw_config("no prototype for candidate class " + std::to_string(c));
}

}  // namespace

int predict_nearest(const PrototypeSet& prototypes, const Eigen::VectorXd& x,
                    const std::vector<int>& candidates) {
  if (candidates.empty()) throw_config("predict_nearest: empty candidate set");
  int best = -1;
  double best_d = 0.0;
  for (int c : candidates) {
    check_candidate(prototypes, c);
    const double d =
        (x.transpose() - prototypes.prototypes.row(c)).squaredNorm();
    if (best < 0 || d < best_d || (d == best_d && c < best)) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

int predict_calibrated(const PrototypeSet& prototypes, double gamma,
                       const Eigen::VectorXd& x,
                       const std::vector<int>& candidates,
                       const std::vector<int>& seen_set) {
  if (candidates.empty())
    throw_config("predict_calibrated: empty candidate set");
  std::set<int> seen(seen_set.begin(), seen_set.end());
  int best = -1;
  double best_score = 0.0;
  for (int c : candidates) {
    check_candidate(prototypes, c);
    double score =
        -(x.transpose() - prototypes.prototypes.row(c)).squaredNorm();
    if (seen.count(c)) score -= gamma;
    if (best < 0 || score > best_score || (score == best_score && c < best)) {
      best = c;
      best_score = score;
    }
  }
  return best;
}

PerClassAccuracy per_class_accuracy(const std::vector<int>& preds,
                                    const std::vector<int>& labels,
                                    const std::vector<int>& classes) {
  if (preds.size() != labels.size())
    throw_config("per_class_accuracy: preds/labels size mismatch");
  PerClassAccuracy out;
  std::map<int, std::pair<long, long>> counts;  // class -> (correct, total)
  for (int c : classes) counts[c] = {0, 0};
  for (size_t i = 0; i < labels.size(); ++i) {
    auto it = counts.find(labels[i]);
    if (it == counts.end()) continue;
    it->second.second += 1;
    if (preds[i] == labels[i]) it->second.first += 1;
  }
  double sum = 0.0;
  for (const auto& [c, cnt] : counts) {
    if (cnt.second == 0)
      throw_config("per_class_accuracy: class " + std::to_string(c) +
                   " has zero test samples");
    const double acc =
        static_cast<double>(cnt.first) / static_cast<double>(cnt.second);
    out.per_class[c] = acc;
    sum += acc;
  }
  out.mean = counts.empty() ? 0.0 : sum / static_cast<double>(counts.size());
  return out;
}

double harmonic_mean(double a, double b) {
  if (a + b <= 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

std::vector<int> ClassificationStage::candidates() const {
  std::vector<int> all = seen_classes;
  all.insert(all.end(), unseen_classes.begin(), unseen_classes.end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<double> gamma_grid_values(const GammaGridSpec& spec,
                                      double d_max) {
  if (spec.count < 1) throw_config("gamma grid: empty grid");
  double lo, hi;
  if (spec.range) {
    lo = spec.range->first;
    hi = spec.range->second;
  } else {
    if (!(d_max > 0.0)) d_max = 1.0;
    lo = -d_max;
    hi = d_max;
  }
  std::vector<double> values(static_cast<size_t>(spec.count));
  if (spec.count == 1) {
    values[0] = 0.5 * (lo + hi);
    return values;
  }
  const double step = (hi - lo) / static_cast<double>(spec.count - 1);
  for (int i = 0; i < spec.count; ++i)
    values[static_cast<size_t>(i)] = lo + step * i;
  return values;
}

double max_probe_prototype_sq_dist(const ClassificationStage& stage) {
  double d_max = 0.0;
  for (Eigen::Index r = 0; r < stage.probe_latent.rows(); ++r) {
    double near_seen = std::numeric_limits<double>::infinity();
    double near_unseen = std::numeric_limits<double>::infinity();
    for (int c : stage.seen_classes)
      near_seen = std::min(
          near_seen,
          (stage.probe_latent.row(r) - stage.prototypes.prototypes.row(c))
              .squaredNorm());
    for (int c : stage.unseen_classes)
      near_unseen = std::min(
          near_unseen,
          (stage.probe_latent.row(r) - stage.prototypes.prototypes.row(c))
              .squaredNorm());
    d_max = std::max(d_max, std::max(near_seen, near_unseen));
  }
  return d_max;
}

StageAccuracy evaluate_stage(const ClassificationStage& stage, double gamma) {
  if (stage.probe_labels.empty())
    throw_config("evaluate_stage: no probe samples");
  const auto cands = stage.candidates();
  std::set<int> seen(stage.seen_classes.begin(), stage.seen_classes.end());
  std::set<int> unseen(stage.unseen_classes.begin(),
                       stage.unseen_classes.end());

  std::map<int, std::pair<long, long>> counts;
  for (size_t i = 0; i < stage.probe_labels.size(); ++i) {
    const int pred = predict_calibrated(
        stage.prototypes, gamma,
        stage.probe_latent.row(static_cast<Eigen::Index>(i)).transpose(),
        cands, stage.seen_classes);
    auto& cnt = counts[stage.probe_labels[i]];
    cnt.second += 1;
    if (pred == stage.probe_labels[i]) cnt.first += 1;
  }

  StageAccuracy out;
  double seen_sum = 0.0, unseen_sum = 0.0;
  long seen_n = 0, unseen_n = 0;
  for (const auto& [c, cnt] : counts) {
    const double acc =
        static_cast<double>(cnt.first) / static_cast<double>(cnt.second);
    out.per_class[c] = acc;
    if (seen.count(c)) {
      seen_sum += acc;
      ++seen_n;
    } else if (unseen.count(c)) {
      unseen_sum += acc;
      ++unseen_n;
    }
  }
  if (seen_n == 0 || unseen_n == 0)
    throw_config("evaluate_stage: empty validation sets (need probes from "
                 "both seen and unseen classes)");
  out.a_s = seen_sum / static_cast<double>(seen_n);
  out.a_u = unseen_sum / static_cast<double>(unseen_n);
  return out;
}

double fit_gamma(const ClassificationStage& stage, const GammaGridSpec& grid) {
  const auto values =
      gamma_grid_values(grid, max_probe_prototype_sq_dist(stage));
  double best_gamma = values.front();
  double best_h = -1.0;
  for (double g : values) {
    const auto acc = evaluate_stage(stage, g);
    const double h = harmonic_mean(acc.a_u, acc.a_s);
    if (h > best_h) {
      best_h = h;
      best_gamma = g;
    }
  }
  return best_gamma;
}

AusucResult ausuc(const ClassificationStage& stage, const GammaGridSpec& grid) {
  const auto values =
      gamma_grid_values(grid, max_probe_prototype_sq_dist(stage));
  AusucResult out;
  std::vector<std::pair<double, double>> points;
  for (double g : values) {
    const auto acc = evaluate_stage(stage, g);
    out.curve.push_back({g, acc.a_s, acc.a_u});
    points.emplace_back(acc.a_s, acc.a_u);
  }
  out.ausuc = ausuc_from_points(std::move(points));
  return out;
}

double ausuc_from_points(std::vector<std::pair<double, double>> points) {
  if (points.empty()) throw_config("ausuc: empty grid");
  std::sort(points.begin(), points.end());
  // Deduplicate a_s keeping the best a_u.
  std::vector<std::pair<double, double>> dedup;
  for (const auto& p : points) {
    if (!dedup.empty() && dedup.back().first == p.first)
      dedup.back().second = std::max(dedup.back().second, p.second);
    else
      dedup.push_back(p);
  }
  // Upper staircase envelope: a_u non-increasing in a_s.
  for (size_t i = dedup.size(); i-- > 1;)
    dedup[i - 1].second = std::max(dedup[i - 1].second, dedup[i].second);
  if (dedup.front().first > 0.0)
    dedup.insert(dedup.begin(), {0.0, dedup.front().second});
  double area = 0.0;
  for (size_t i = 0; i + 1 < dedup.size(); ++i)
    area += (dedup[i + 1].first - dedup[i].first) * 0.5 *
            (dedup[i].second + dedup[i + 1].second);
  return area;
}

EvalReport evaluate_full(const EvalSetup& setup, double gamma,
                         const GammaGridSpec& grid) {
  EvalReport report;
  report.gamma = gamma;

  // Traditional ZSL: unseen probes, candidates restricted to unseen classes.
  {
    std::vector<int> preds;
    preds.reserve(setup.unseen_labels.size());
    for (Eigen::Index r = 0; r < setup.unseen_latent.rows(); ++r)
      preds.push_back(predict_nearest(setup.prototypes,
                                      setup.unseen_latent.row(r).transpose(),
                                      setup.unseen_classes));
    report.a_t =
        per_class_accuracy(preds, setup.unseen_labels, setup.unseen_classes)
            .mean;
  }

  // Generalized ZSL over all classes.
  ClassificationStage stage;
  stage.prototypes = setup.prototypes;
  stage.seen_classes = setup.seen_classes;
  stage.unseen_classes = setup.unseen_classes;
  stage.probe_latent.resize(
      setup.unseen_latent.rows() + setup.seen_latent.rows(),
      setup.unseen_latent.cols());
  stage.probe_latent.topRows(setup.unseen_latent.rows()) = setup.unseen_latent;
  stage.probe_latent.bottomRows(setup.seen_latent.rows()) = setup.seen_latent;
  stage.probe_labels = setup.unseen_labels;
  stage.probe_labels.insert(stage.probe_labels.end(),
                            setup.seen_labels.begin(),
                            setup.seen_labels.end());

  const auto acc = evaluate_stage(stage, gamma);
  report.a_u = acc.a_u;
  report.a_s = acc.a_s;
  report.h = harmonic_mean(report.a_u, report.a_s);
  report.per_class_acc = acc.per_class;

  const auto curve = ausuc(stage, grid);
  report.ausuc = curve.ausuc;
  report.curve = curve.curve;
  return report;
}

void save_report(const EvalReport& report, const std::filesystem::path& dir) {
  {
    std::ostringstream os;
    os << "metric,value\n";
    os << "a_t," << format_double(report.a_t) << '\n';
    os << "a_u," << format_double(report.a_u) << '\n';
    os << "a_s," << format_double(report.a_s) << '\n';
    os << "h," << format_double(report.h) << '\n';
    os << "ausuc," << format_double(report.ausuc) << '\n';
    os << "gamma," << format_double(report.gamma) << '\n';
    write_text_file(dir / "report.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "gamma,a_s,a_u\n";
    for (const auto& p : report.curve)
      os << format_double(p.gamma) << ',' << format_double(p.a_s) << ','
         << format_double(p.a_u) << '\n';
    write_text_file(dir / "curve.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "class,accuracy\n";
    for (const auto& [c, acc] : report.per_class_acc)
      os << c << ',' << format_double(acc) << '\n';
    write_text_file(dir / "per_class.csv", os.str());
  }
}

}  // namespace zsl
