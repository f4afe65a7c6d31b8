#include "zsl/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "zsl/csv.hpp"
#include "zsl/error.hpp"
#include "zsl/optimizer.hpp"

namespace zsl {

LinearEmbedding LinearEmbedding::identity(Eigen::Index n) {
  LinearEmbedding e;
  e.w = Eigen::MatrixXd::Identity(n, n);
  e.b = Eigen::VectorXd::Zero(n);
  return e;
}

LinearEmbedding LinearEmbedding::random_init(Eigen::Index n_latent,
                                             Eigen::Index n_feature,
                                             std::uint64_t seed) {
  LinearEmbedding e;
  e.w.resize(n_latent, n_feature);
  e.b = Eigen::VectorXd::Zero(n_latent);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(n_feature));
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (Eigen::Index r = 0; r < n_latent; ++r)
    for (Eigen::Index c = 0; c < n_feature; ++c) e.w(r, c) = unif(rng);
  return e;
}

PrototypeSet PrototypeSet::empty(Eigen::Index n_classes,
                                 Eigen::Index n_latent) {
  PrototypeSet p;
  p.prototypes = Eigen::MatrixXd::Zero(n_classes, n_latent);
  p.seen_mask.assign(static_cast<size_t>(n_classes), 0);
  p.defined.assign(static_cast<size_t>(n_classes), 0);
  return p;
}

double squared_distance(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Eigen::MatrixXd embed(const LinearEmbedding& emb,
                      const Eigen::MatrixXd& features) {
  if (features.cols() != emb.n_feature())
    throw_config("embed: features have " + std::to_string(features.cols()) +
                 " columns, embedding expects " +
                 std::to_string(emb.n_feature()));
  Eigen::MatrixXd out = features * emb.w.transpose();
  out.rowwise() += emb.b.transpose();
  return out;
}

namespace {

// Batch positions per class id, classes ascending, positions ascending.
std::map<int, std::vector<int>> group_by_class(const std::vector<int>& labels) {
  std::map<int, std::vector<int>> groups;
  for (size_t i = 0; i < labels.size(); ++i)
    groups[labels[i]].push_back(static_cast<int>(i));
  return groups;
}

// Row-copy of the latent batch so distance loops read contiguous memory.
struct RowView {
  const Eigen::MatrixXd& mat;
  Eigen::Index dim;
  std::vector<double> buf;  // row-major copy
  explicit RowView(const Eigen::MatrixXd& m) : mat(m), dim(m.cols()) {
    buf.resize(static_cast<size_t>(m.rows() * m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        buf[static_cast<size_t>(r * dim + c)] = m(r, c);
  }
  const double* row(int r) const {
    return buf.data() + static_cast<size_t>(r) * static_cast<size_t>(dim);
  }
};

}  // namespace

std::vector<int> balanced_batch(const std::vector<int>& labels,
                                const std::vector<int>& classes,
                                int n_per_class, std::mt19937_64& rng) {
  if (n_per_class < 1) throw_config("balanced_batch: n_per_class must be >= 1");
  std::vector<int> out;
  out.reserve(classes.size() * static_cast<size_t>(n_per_class));
  std::vector<int> sorted_classes = classes;
  std::sort(sorted_classes.begin(), sorted_classes.end());
  for (int c : sorted_classes) {
    std::vector<int> members;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(static_cast<int>(i));
    if (members.empty())
      throw_config("balanced_batch: class " + std::to_string(c) +
                   " has zero samples");
    const int count = static_cast<int>(members.size());
    if (count >= n_per_class) {
      // Partial Fisher-Yates: uniform without replacement.
      for (int j = 0; j < n_per_class; ++j) {
        std::uniform_int_distribution<int> pick(j, count - 1);
        std::swap(members[static_cast<size_t>(j)],
                  members[static_cast<size_t>(pick(rng))]);
        out.push_back(members[static_cast<size_t>(j)]);
      }
    } else {
      std::uniform_int_distribution<int> pick(0, count - 1);
      for (int j = 0; j < n_per_class; ++j)
        out.push_back(members[static_cast<size_t>(pick(rng))]);
    }
  }
  return out;
}

std::vector<int> uniform_batch(const std::vector<int>& labels,
                               const std::vector<int>& classes,
                               int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw_config("uniform_batch: batch_size must be >= 1");
  std::vector<int> pool;
  std::vector<std::uint8_t> in_set(
      1 + *std::max_element(classes.begin(), classes.end()), 0);
  for (int c : classes) in_set[static_cast<size_t>(c)] = 1;
  for (size_t i = 0; i < labels.size(); ++i) {
    int lbl = labels[i];
    if (lbl >= 0 && static_cast<size_t>(lbl) < in_set.size() &&
        in_set[static_cast<size_t>(lbl)])
      pool.push_back(static_cast<int>(i));
  }
  if (pool.empty()) throw_config("uniform_batch: no samples in class set");
  std::vector<int> out;
  out.reserve(static_cast<size_t>(batch_size));
  const int count = static_cast<int>(pool.size());
  if (count >= batch_size) {
    for (int j = 0; j < batch_size; ++j) {
      std::uniform_int_distribution<int> pick(j, count - 1);
      std::swap(pool[static_cast<size_t>(j)],
                pool[static_cast<size_t>(pick(rng))]);
      out.push_back(pool[static_cast<size_t>(j)]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, count - 1);
    for (int j = 0; j < batch_size; ++j)
      out.push_back(pool[static_cast<size_t>(pick(rng))]);
  }
  return out;
}

LossResult loss_balanced_triplet(const Eigen::MatrixXd& latent,
                                 const std::vector<int>& labels,
                                 double delta) {
  if (static_cast<Eigen::Index>(labels.size()) != latent.rows())
    throw_config("loss_balanced_triplet: labels/latent size mismatch");
  auto groups = group_by_class(labels);
  if (groups.size() < 2)
    throw_config("loss_balanced_triplet: need at least 2 classes in batch");
  const size_t per_class = groups.begin()->second.size();
  for (const auto& [c, members] : groups)
    if (members.size() != per_class || members.size() < 2)
      throw_config("loss_balanced_triplet: batch not class-balanced (class " +
                   std::to_string(c) + ")");

  const Eigen::Index dim = latent.cols();
  RowView rows(latent);

  // Class means, members accumulated in batch order.
  std::vector<int> class_ids;
  std::vector<Eigen::VectorXd> means;
  for (const auto& [c, members] : groups) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
    for (int idx : members) acc += latent.row(idx).transpose();
    class_ids.push_back(c);
    means.push_back(acc / static_cast<double>(members.size()));
  }

  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(latent.rows(), dim);
  const double inv_n = 1.0 / static_cast<double>(per_class);

  for (size_t i = 0; i < class_ids.size(); ++i) {
    const auto& members_i = groups[class_ids[i]];
    const Eigen::VectorXd& mean_i = means[i];
    for (size_t j = 0; j < class_ids.size(); ++j) {
      if (j == i) continue;
      const auto& members_j = groups[class_ids[j]];
      // Shared across anchors of the (i, j) pair: nearest cj member to the
      // ci mean, first index winning ties.
      double d_neg = 0.0;
      int neg_idx = -1;
      for (int n : members_j) {
        double d = squared_distance(rows.row(n), mean_i.data(), dim);
        if (neg_idx < 0 || d < d_neg) {
          d_neg = d;
          neg_idx = n;
        }
      }
      for (int l : members_i) {
        const double d_pos = squared_distance(rows.row(l), mean_i.data(), dim);
        const double arg = delta + d_pos - d_neg;
        if (arg > 0.0) {
          res.loss += arg;
          Eigen::VectorXd u = latent.row(l).transpose() - mean_i;
          Eigen::VectorXd v = latent.row(neg_idx).transpose() - mean_i;
          res.grad.row(l) += 2.0 * u.transpose();
          Eigen::RowVectorXd mean_term = (2.0 * inv_n) * (v - u).transpose();
          for (int k : members_i) res.grad.row(k) += mean_term;
          res.grad.row(neg_idx) -= 2.0 * v.transpose();
        }
      }
    }
  }
  return res;
}

LossResult loss_standard_triplet(const Eigen::MatrixXd& latent,
                                 const std::vector<int>& labels,
                                 double delta) {
  if (static_cast<Eigen::Index>(labels.size()) != latent.rows())
    throw_config("loss_standard_triplet: labels/latent size mismatch");
  auto groups = group_by_class(labels);
  bool any_pair = false;
  for (const auto& [c, members] : groups)
    if (members.size() >= 2) any_pair = true;
  if (groups.size() < 2 || !any_pair)
    throw_config("loss_standard_triplet: no valid triplet in batch");

  const Eigen::Index dim = latent.cols();
  RowView rows(latent);
  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(latent.rows(), dim);

  for (const auto& [ci, members_i] : groups) {
    for (const auto& [cj, members_j] : groups) {
      if (ci == cj) continue;
      for (int l : members_i) {
        for (int m : members_i) {
          if (m == l) continue;
          const double d_pos = squared_distance(rows.row(l), rows.row(m), dim);
          for (int n : members_j) {
            const double d_neg =
                squared_distance(rows.row(l), rows.row(n), dim);
            const double arg = delta + d_pos - d_neg;
            if (arg > 0.0) {
              res.loss += arg;
              Eigen::RowVectorXd pos_diff = latent.row(l) - latent.row(m);
              Eigen::RowVectorXd neg_diff = latent.row(l) - latent.row(n);
              res.grad.row(l) += 2.0 * (pos_diff - neg_diff);
              res.grad.row(m) -= 2.0 * pos_diff;
              res.grad.row(n) += 2.0 * neg_diff;
            }
          }
        }
      }
    }
  }
  return res;
}

namespace {

bool has_valid_triplet(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int l : labels) counts[l]++;
  if (counts.size() < 2) return false;
  for (const auto& [c, n] : counts)
    if (n >= 2) return true;
  return false;
}

}  // namespace

TrainResult train_embedding(const Dataset& data, const TripletConfig& cfg) {
  if (!(cfg.delta > 0.0)) throw_config("train_embedding: delta must be > 0");
  if (cfg.n_per_class < 2)
    throw_config("train_embedding: n_per_class must be >= 2");

  // Training pool: samples of train_seen classes.
  std::vector<int> rows;
  {
    std::vector<std::uint8_t> in_train(static_cast<size_t>(data.n_classes()),
                                       0);
    for (int c : data.split.train_seen) in_train[static_cast<size_t>(c)] = 1;
    for (size_t i = 0; i < data.labels.size(); ++i)
      if (in_train[static_cast<size_t>(data.labels[i])])
        rows.push_back(static_cast<int>(i));
  }
  if (rows.empty()) throw_config("train_embedding: no train_seen samples");
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(rows.size()),
                        data.n_feature());
  std::vector<int> labels(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    labels[i] = data.labels[static_cast<size_t>(rows[i])];
  }

  TrainResult result;
  result.embedding =
      LinearEmbedding::random_init(cfg.n_latent, data.n_feature(), cfg.seed);
  result.loss_trace.reserve(static_cast<size_t>(cfg.episodes));

  std::mt19937_64 batch_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamConfig adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  adam.decoupled_decay = cfg.decoupled_decay;
  AdamState state_w = AdamState::like(result.embedding.w);
  AdamState state_b = AdamState::like(result.embedding.b);

  const int batch_size =
      static_cast<int>(data.split.train_seen.size()) * cfg.n_per_class;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    std::vector<int> idx;
    if (cfg.loss == TripletKind::Balanced)
      idx = balanced_batch(labels, data.split.train_seen, cfg.n_per_class,
                           batch_rng);
    else
      idx = uniform_batch(labels, data.split.train_seen, batch_size,
                          batch_rng);

    Eigen::MatrixXd batch_feats(static_cast<Eigen::Index>(idx.size()),
                                feats.cols());
    std::vector<int> batch_labels(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      batch_feats.row(static_cast<Eigen::Index>(i)) = feats.row(idx[i]);
      batch_labels[i] = labels[static_cast<size_t>(idx[i])];
    }

    Eigen::MatrixXd latent = embed(result.embedding, batch_feats);
    LossResult lres;
    if (cfg.loss == TripletKind::Balanced) {
      lres = loss_balanced_triplet(latent, batch_labels, cfg.delta);
    } else if (has_valid_triplet(batch_labels)) {
      lres = loss_standard_triplet(latent, batch_labels, cfg.delta);
    } else {
      // Uniform draw produced a degenerate batch; skip the step.
      result.loss_trace.push_back(0.0);
      continue;
    }

    Eigen::MatrixXd grad_w = lres.grad.transpose() * batch_feats;
    Eigen::VectorXd grad_b = lres.grad.colwise().sum().transpose();
    adam_step(result.embedding.w, grad_w, state_w, adam);
    adam_step(result.embedding.b, grad_b, state_b, adam);
    result.loss_trace.push_back(lres.loss);
  }
  return result;
}

PrototypeSet class_prototypes(const Eigen::MatrixXd& latent,
                              const std::vector<int>& labels,
                              const std::vector<int>& classes,
                              Eigen::Index n_classes_total) {
  PrototypeSet out = PrototypeSet::empty(n_classes_total, latent.cols());
  for (int c : classes) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(latent.cols());
    int count = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) {
        acc += latent.row(static_cast<Eigen::Index>(i)).transpose();
        ++count;
      }
    }
    if (count == 0)
      throw_config("class_prototypes: class " + std::to_string(c) +
                   " has zero samples");
    out.prototypes.row(c) = (acc / static_cast<double>(count)).transpose();
    out.seen_mask[static_cast<size_t>(c)] = 1;
    out.defined[static_cast<size_t>(c)] = 1;
  }
  return out;
}

void save_embedding(const LinearEmbedding& emb,
                    const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw_io("cannot write file: " + file.string());
  out << "ZSLEMB v1 " << emb.n_latent() << ' ' << emb.n_feature() << '\n';
  for (Eigen::Index r = 0; r < emb.w.rows(); ++r) {
    for (Eigen::Index c = 0; c < emb.w.cols(); ++c) {
      if (c) out << ',';
      out << format_double(emb.w(r, c));
    }
    out << '\n';
  }
  for (Eigen::Index i = 0; i < emb.b.size(); ++i) {
    if (i) out << ',';
    out << format_double(emb.b(i));
  }
  out << '\n';
}

LinearEmbedding load_embedding(const std::filesystem::path& file) {
  auto lines = read_lines(file);
  if (lines.empty()) throw_io("empty embedding file: " + file.string());
  std::istringstream header(lines[0]);
  std::string magic, version;
  Eigen::Index n_latent = 0, n_feature = 0;
  header >> magic >> version >> n_latent >> n_feature;
  if (magic != "ZSLEMB" || version != "v1" || n_latent < 1 || n_feature < 1)
    throw_io(file.string() + ": bad header '" + lines[0] + "'");
  if (static_cast<Eigen::Index>(lines.size()) != n_latent + 2)
    throw_io(file.string() + ": expected " + std::to_string(n_latent + 2) +
             " lines, got " + std::to_string(lines.size()));
  LinearEmbedding emb;
  emb.w.resize(n_latent, n_feature);
  for (Eigen::Index r = 0; r < n_latent; ++r) {
    auto toks = split_csv_line(lines[static_cast<size_t>(r + 1)]);
    if (static_cast<Eigen::Index>(toks.size()) != n_feature)
      throw_io(file.string() + ": row " + std::to_string(r) + " has " +
               std::to_string(toks.size()) + " values");
    for (Eigen::Index c = 0; c < n_feature; ++c)
      emb.w(r, c) = parse_double(toks[static_cast<size_t>(c)], file.string());
  }
  auto btoks = split_csv_line(lines[static_cast<size_t>(n_latent + 1)]);
  if (static_cast<Eigen::Index>(btoks.size()) != n_latent)
    throw_io(file.string() + ": bias row has " + std::to_string(btoks.size()) +
             " values");
  emb.b.resize(n_latent);
  for (Eigen::Index i = 0; i < n_latent; ++i)
    emb.b(i) = parse_double(btoks[static_cast<size_t>(i)], file.string());
  if (!emb.w.allFinite() || !emb.b.allFinite())
    throw_io(file.string() + ": non-finite value");
  return emb;
}

void save_loss_trace(const std::vector<double>& trace,
                     const std::filesystem::path& file) {
  std::ostringstream os;
  os << "episode,loss\n";
  for (size_t i = 0; i < trace.size(); ++i)
    os << i << ',' << format_double(trace[i]) << '\n';
  write_text_file(file, os.str());
}

}  // namespace zsl
