#include "zsl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "zsl/csv.hpp"
#include "zsl/error.hpp"

namespace zsl {

std::vector<int> Dataset::all_classes() const {
  std::vector<int> out(static_cast<size_t>(n_classes()));
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

std::vector<int> Dataset::rows_of_class(int c) const {
  std::vector<int> out;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) out.push_back(static_cast<int>(i));
  return out;
}

Eigen::MatrixXd clip_and_scale(const Eigen::MatrixXd& features,
                               double clip_value) {
  if (!(clip_value > 0.0)) throw_config("clip_value must be positive");
  Eigen::MatrixXd out = features;
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    double v = out(j);
    if (v > clip_value) v = clip_value;
    if (v < 0.0) v = 0.0;
    out(j) = v / clip_value;
  }
  return out;
}

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.size() == 0) throw_config("feature_stats: empty matrix");
  FeatureStats s;
  s.mean = features.mean();
  s.max = features.maxCoeff();
  std::vector<double> flat(features.data(), features.data() + features.size());
  std::sort(flat.begin(), flat.end());
  // Nearest-rank: smallest value with cumulative fraction >= q.
  size_t rank = static_cast<size_t>(
      std::ceil(0.999 * static_cast<double>(flat.size())));
  if (rank == 0) rank = 1;
  if (rank > flat.size()) rank = flat.size();
  s.q999 = flat[rank - 1];
  return s;
}

namespace {

std::vector<int> parse_split_line(const std::string& line,
                                  const std::string& expected_key,
                                  const std::string& context) {
  size_t colon = line.find(':');
  if (colon == std::string::npos || line.substr(0, colon) != expected_key)
    throw_io(context + ": expected line '" + expected_key + ":<ids>', got '" +
             line + "'");
  std::vector<int> ids;
  std::string rest = line.substr(colon + 1);
  if (rest.empty()) return ids;
  for (const auto& tok : split_csv_line(rest))
    ids.push_back(static_cast<int>(parse_long(tok, context)));
  std::sort(ids.begin(), ids.end());
  return ids;
}

Eigen::MatrixXd read_features_bin(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw_io("cannot open file: " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ZSLF", 4) != 0)
    throw_io(file.string() + ": bad magic, expected ZSLF");
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  if (!in || rows == 0 || cols == 0)
    throw_io(file.string() + ": bad header dimensions");
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw_io(file.string() + ": truncated payload");
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      m(r, c) = static_cast<double>(buf[static_cast<size_t>(r) * cols + c]);
  return m;
}

void write_features_bin(const std::filesystem::path& file,
                        const Eigen::MatrixXd& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw_io("cannot write file: " + file.string());
  out.write("ZSLF", 4);
  std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  std::vector<float> buf(static_cast<size_t>(m.rows()) * m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      buf[static_cast<size_t>(r) * m.cols() + c] = static_cast<float>(m(r, c));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void validate_dataset(const Dataset& d, const std::string& dir) {
  if (d.n_samples() < 1 || d.n_feature() < 1 || d.n_semantic() < 1)
    throw_io(dir + ": degenerate dataset dimensions");
  if (static_cast<Eigen::Index>(d.labels.size()) != d.n_samples())
    throw_io(dir + ": labels.csv has " + std::to_string(d.labels.size()) +
             " rows, features has " + std::to_string(d.n_samples()));
  for (size_t i = 0; i < d.labels.size(); ++i)
    if (d.labels[i] < 0 || d.labels[i] >= d.n_classes())
      throw_io(dir + "/labels.csv row " + std::to_string(i) +
               ": label out of range (" + std::to_string(d.labels[i]) +
               " with " + std::to_string(d.n_classes()) + " classes)");
  for (Eigen::Index r = 0; r < d.features.rows(); ++r)
    for (Eigen::Index c = 0; c < d.features.cols(); ++c)
      if (!std::isfinite(d.features(r, c)))
        throw_io(dir + "/features row " + std::to_string(r) +
                 ": non-finite value");
  for (Eigen::Index r = 0; r < d.semantics.rows(); ++r)
    for (Eigen::Index c = 0; c < d.semantics.cols(); ++c)
      if (!std::isfinite(d.semantics(r, c)))
        throw_io(dir + "/attributes.csv row " + std::to_string(r) +
                 ": non-finite value");

  const auto& sp = d.split;
  if (sp.train_seen.empty() || sp.val_unseen.empty() ||
      sp.test_unseen.empty())
    throw_io(dir + "/split.csv: all three class sets must be non-empty");
  std::set<int> seen_ids;
  auto check_ids = [&](const std::vector<int>& ids, const char* name) {
    for (int c : ids) {
      if (c < 0 || c >= d.n_classes())
        throw_io(dir + "/split.csv: " + name + " id " + std::to_string(c) +
                 " out of range");
      if (!seen_ids.insert(c).second)
        throw_io(dir + "/split.csv: class " + std::to_string(c) +
                 " appears in more than one set");
    }
  };
  check_ids(sp.train_seen, "train_seen");
  check_ids(sp.val_unseen, "val_unseen");
  check_ids(sp.test_unseen, "test_unseen");
  for (int lbl : d.labels)
    if (!seen_ids.count(lbl))
      throw_io(dir + "/split.csv: class " + std::to_string(lbl) +
               " appears in labels but in no split set");
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir,
                     const PreprocessConfig& preprocess) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw_io("dataset directory not found: " + dir.string());

  Dataset d;
  const fs::path bin = dir / "features.bin";
  if (fs::exists(bin)) {
    d.features = read_features_bin(bin);
  } else {
    const fs::path csv = dir / "features.csv";
    if (!fs::exists(csv)) throw_io("missing file: " + csv.string());
    d.features = read_csv_matrix(csv);
  }

  const fs::path labels_file = dir / "labels.csv";
  if (!fs::exists(labels_file)) throw_io("missing file: " + labels_file.string());
  {
    auto lines = read_lines(labels_file);
    d.labels.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i)
      d.labels.push_back(static_cast<int>(parse_long(
          lines[i], labels_file.string() + " row " + std::to_string(i))));
  }

  const fs::path attr_file = dir / "attributes.csv";
  if (!fs::exists(attr_file)) throw_io("missing file: " + attr_file.string());
  d.semantics = read_csv_matrix(attr_file);

  const fs::path split_file = dir / "split.csv";
  if (!fs::exists(split_file)) throw_io("missing file: " + split_file.string());
  {
    auto lines = read_lines(split_file);
    if (lines.size() != 3)
      throw_io(split_file.string() + ": expected 3 lines, got " +
               std::to_string(lines.size()));
    d.split.train_seen =
        parse_split_line(lines[0], "train_seen", split_file.string());
    d.split.val_unseen =
        parse_split_line(lines[1], "val_unseen", split_file.string());
    d.split.test_unseen =
        parse_split_line(lines[2], "test_unseen", split_file.string());
  }

  validate_dataset(d, dir.string());
  if (preprocess.enabled)
    d.features = clip_and_scale(d.features, preprocess.clip_value);
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir,
                  bool binary_features) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (binary_features)
    write_features_bin(dir / "features.bin", data.features);
  else
    write_csv_matrix(dir / "features.csv", data.features);

  {
    std::ostringstream os;
    for (int lbl : data.labels) os << lbl << '\n';
    write_text_file(dir / "labels.csv", os.str());
  }
  write_csv_matrix(dir / "attributes.csv", data.semantics);
  {
    std::ostringstream os;
    auto put = [&os](const char* key, const std::vector<int>& ids) {
      os << key << ':';
      for (size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ',';
        os << ids[i];
      }
      os << '\n';
    };
    put("train_seen", data.split.train_seen);
    put("val_unseen", data.split.val_unseen);
    put("test_unseen", data.split.test_unseen);
    write_text_file(dir / "split.csv", os.str());
  }
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.n_seen < 1 || spec.n_val < 1 || spec.n_unseen < 1 ||
      spec.n_feature < 1 || spec.n_semantic < 1 || spec.min_class_count < 1)
    throw_config("synth_dataset: all counts must be >= 1");
  if (spec.imbalance_ratio < 1.0)
    throw_config("synth_dataset: imbalance_ratio must be >= 1");

  const int n_classes = spec.n_classes();
  // Prototypes live on a low-dimensional manifold so that class spacings
  // vary: a few genuinely confusable pairs keep the calibration stage away
  // from degenerate all-correct plateaus.
  const int d_true = std::min(6, spec.n_semantic);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset d;
  d.semantics.resize(n_classes, spec.n_semantic);
  for (Eigen::Index r = 0; r < d.semantics.rows(); ++r)
    for (Eigen::Index c = 0; c < d.semantics.cols(); ++c)
      d.semantics(r, c) = gauss(rng);

  // The linear part is kept small relative to the sin wiggle so prototype
  // regression stays imperfect and the calibration stage sees a genuine
  // seen/unseen trade-off.
  const double lin_scale =
      0.30 / std::sqrt(static_cast<double>(spec.n_semantic));
  const double sin_scale = 1.0 / std::sqrt(static_cast<double>(spec.n_semantic));
  Eigen::MatrixXd map_lin(d_true, spec.n_semantic);
  Eigen::MatrixXd map_sin(d_true, spec.n_semantic);
  for (Eigen::Index r = 0; r < d_true; ++r)
    for (Eigen::Index c = 0; c < spec.n_semantic; ++c)
      map_lin(r, c) = gauss(rng) * lin_scale;
  for (Eigen::Index r = 0; r < d_true; ++r)
    for (Eigen::Index c = 0; c < spec.n_semantic; ++c)
      map_sin(r, c) = gauss(rng) * sin_scale;

  const double lift_scale = 1.0 / std::sqrt(static_cast<double>(d_true));
  Eigen::MatrixXd lift(spec.n_feature, d_true);
  for (Eigen::Index r = 0; r < lift.rows(); ++r)
    for (Eigen::Index c = 0; c < lift.cols(); ++c)
      lift(r, c) = gauss(rng) * lift_scale;

  // Ground-truth prototypes in the d_true space.
  Eigen::MatrixXd protos(n_classes, d_true);
  for (int c = 0; c < n_classes; ++c) {
    Eigen::VectorXd s = d.semantics.row(c).transpose();
    Eigen::VectorXd p = map_lin * s + 0.25 * (map_sin * s).array().sin().matrix();
    protos.row(c) = p.transpose();
  }

  // Counts ramp geometrically from min to min*ratio; a seeded permutation
  // decorrelates count from class id (and hence from the split).
  std::vector<int> counts(n_classes);
  {
    std::vector<int> order(n_classes);
    for (int i = 0; i < n_classes; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < n_classes; ++i) {
      double t = n_classes > 1
                     ? static_cast<double>(order[i]) / (n_classes - 1)
                     : 0.0;
      counts[i] = static_cast<int>(std::lround(
          spec.min_class_count * std::pow(spec.imbalance_ratio, t)));
    }
  }

  int total = 0;
  for (int c : counts) total += c;
  d.features.resize(total, spec.n_feature);
  d.labels.reserve(static_cast<size_t>(total));

  // Offset centers features inside the default clip window [0, 7] so that
  // clip_and_scale(.,7) keeps nearly all of the signal.
  const double offset = 3.5;
  int row = 0;
  for (int c = 0; c < n_classes; ++c) {
    Eigen::VectorXd base = lift * protos.row(c).transpose();
    for (int k = 0; k < counts[c]; ++k) {
      for (int j = 0; j < spec.n_feature; ++j)
        d.features(row, j) = base(j) + offset + spec.noise_sd * gauss(rng);
      d.labels.push_back(c);
      ++row;
    }
  }

  auto iota_range = [](int lo, int hi) {
    std::vector<int> v;
    for (int i = lo; i < hi; ++i) v.push_back(i);
    return v;
  };
  d.split.train_seen = iota_range(0, spec.n_seen);
  d.split.val_unseen = iota_range(spec.n_seen, spec.n_seen + spec.n_val);
  d.split.test_unseen = iota_range(spec.n_seen + spec.n_val, n_classes);
  return d;
}

SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec spec;
  if (text.empty() || text == "default") return spec;
  for (const auto& kv : split_csv_line(text)) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw_config("synth spec entry '" + kv + "' is not key=value");
    std::string key = kv.substr(0, eq);
    std::string val = kv.substr(eq + 1);
    const std::string ctx = "synth spec";
    if (key == "n_seen") spec.n_seen = static_cast<int>(parse_long(val, ctx));
    else if (key == "n_val") spec.n_val = static_cast<int>(parse_long(val, ctx));
    else if (key == "n_unseen")
      spec.n_unseen = static_cast<int>(parse_long(val, ctx));
    else if (key == "n_feature")
      spec.n_feature = static_cast<int>(parse_long(val, ctx));
    else if (key == "n_semantic")
      spec.n_semantic = static_cast<int>(parse_long(val, ctx));
    else if (key == "imbalance_ratio")
      spec.imbalance_ratio = parse_double(val, ctx);
    else if (key == "noise_sd") spec.noise_sd = parse_double(val, ctx);
    else if (key == "min_class_count")
      spec.min_class_count = static_cast<int>(parse_long(val, ctx));
    else if (key == "seed")
      spec.seed = static_cast<std::uint64_t>(parse_long(val, ctx));
    else
      throw_config("unknown synth spec key '" + key + "'");
  }
  return spec;
}

std::string synth_spec_to_string(const SynthSpec& spec) {
  std::ostringstream os;
  os << "n_seen=" << spec.n_seen << ",n_val=" << spec.n_val
     << ",n_unseen=" << spec.n_unseen << ",n_feature=" << spec.n_feature
     << ",n_semantic=" << spec.n_semantic
     << ",imbalance_ratio=" << format_double(spec.imbalance_ratio)
     << ",noise_sd=" << format_double(spec.noise_sd)
     << ",min_class_count=" << spec.min_class_count << ",seed=" << spec.seed;
  return os.str();
}

}  // namespace zsl
