#include "segloc/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "segloc/rng.hpp"
#include "segloc/util.hpp"

namespace segloc {

namespace {

constexpr char kGbtMagic[4] = {'S', 'G', 'T', '1'};

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

struct SplitChoice {
  bool found = false;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

// Builds one regression tree on (g, h) for the given rows.
class TreeBuilder {
 public:
  TreeBuilder(const FrameDataset& data, const std::vector<double>& g,
              const std::vector<double>& h, const GbtConfig& cfg)
      : data_(data), g_(g), h_(h), cfg_(cfg) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  std::int32_t grow(std::vector<std::size_t> rows, std::uint32_t depth) {
    const std::int32_t index = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    double g_sum = 0.0, h_sum = 0.0;
    for (const std::size_t r : rows) {
      g_sum += g_[r];
      h_sum += h_[r];
    }

    SplitChoice split;
    if (depth < cfg_.max_depth && rows.size() >= 2 * std::size_t(cfg_.min_samples_leaf)) {
      split = find_split(rows, g_sum, h_sum);
    }
    if (!split.found) {
      const double denom = h_sum + cfg_.lambda_l2;
      tree_.nodes[index].value = denom > 0.0 ? -g_sum / denom : 0.0;
      return index;
    }

    std::vector<std::size_t> left, right;
    for (const std::size_t r : rows) {
      if (data_.row(r)[split.feature] < split.threshold) {
        left.push_back(r);
      } else {
        right.push_back(r);
      }
    }
    rows.clear();
    rows.shrink_to_fit();

    tree_.nodes[index].feature = split.feature;
    tree_.nodes[index].threshold = split.threshold;
    const std::int32_t l = grow(std::move(left), depth + 1);
    const std::int32_t r = grow(std::move(right), depth + 1);
    tree_.nodes[index].left = l;
    tree_.nodes[index].right = r;
    return index;
  }

  // Exact greedy over sorted feature values. Features are scanned in
  // ascending index and thresholds in ascending value, and a candidate wins
  // only on strictly larger gain, so equal-gain ties resolve to the lowest
  // feature index, then the lowest threshold.
  SplitChoice find_split(const std::vector<std::size_t>& rows, double g_sum,
                         double h_sum) {
    SplitChoice best;
    const double lambda = cfg_.lambda_l2;
    if (h_sum + lambda <= 0.0) return best;
    const double parent = g_sum * g_sum / (h_sum + lambda);
    const std::size_t n = rows.size();
    const std::size_t min_leaf = cfg_.min_samples_leaf;

    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::uint32_t f = 0; f < data_.feature_dim; ++f) {
      for (std::size_t i = 0; i < n; ++i) {
        order[i] = {data_.row(rows[i])[f], rows[i]};
      }
      std::sort(order.begin(), order.end());

      double g_left = 0.0, h_left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        g_left += g_[order[i].second];
        h_left += h_[order[i].second];
        if (order[i].first == order[i + 1].first) continue;  // no boundary here
        const std::size_t n_left = i + 1;
        if (n_left < min_leaf || n - n_left < min_leaf) continue;
        const double g_right = g_sum - g_left;
        const double h_right = h_sum - h_left;
        if (h_left + lambda <= 0.0 || h_right + lambda <= 0.0) continue;
        const double gain = 0.5 * (g_left * g_left / (h_left + lambda) +
                                   g_right * g_right / (h_right + lambda) - parent);
        if (gain > best.gain) {
          double threshold = 0.5 * (order[i].first + order[i + 1].first);
          if (!(threshold > order[i].first)) threshold = order[i + 1].first;
          best.found = true;
          best.feature = f;
          best.threshold = threshold;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  const FrameDataset& data_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const GbtConfig& cfg_;
  DecisionTree tree_;
};

void validate_gbt_config(const GbtConfig& cfg) {
  if (cfg.n_trees < 1) throw ConfigError("gbt: n_trees must be >= 1");
  if (cfg.max_depth < 1) throw ConfigError("gbt: max_depth must be >= 1");
  if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0)) {
    throw ConfigError("gbt: learning rate must be in (0,1]");
  }
  if (cfg.lambda_l2 < 0.0) throw ConfigError("gbt: lambda must be >= 0");
  if (!(cfg.subsample > 0.0 && cfg.subsample <= 1.0)) {
    throw ConfigError("gbt: subsample must be in (0,1]");
  }
  if (cfg.min_samples_leaf < 1) throw ConfigError("gbt: min_samples_leaf must be >= 1");
}

}  // namespace

double DecisionTree::evaluate(std::span<const double> x) const {
  std::int32_t at = 0;
  while (!nodes[at].is_leaf()) {
    at = x[nodes[at].feature] < nodes[at].threshold ? nodes[at].left
                                                    : nodes[at].right;
  }
  return nodes[at].value;
}

GbtModel fit_gbt(const FrameDataset& data, const GbtConfig& cfg) {
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), std::size_t(0));
  return fit_gbt(data, rows, cfg);
}

GbtModel fit_gbt(const FrameDataset& data, std::span<const std::size_t> rows,
                 const GbtConfig& cfg) {
  validate_gbt_config(cfg);
  if (rows.size() < 2) throw DataError("fit_gbt: need at least 2 rows");

  std::size_t n_pos = 0;
  for (const std::size_t r : rows) {
    if (data.targets[r]) ++n_pos;
    for (const double v : data.row(r)) {
      if (!std::isfinite(v)) {
        throw DataError("fit_gbt: non-finite feature in row " + std::to_string(r));
      }
    }
  }
  const std::size_t n_neg = rows.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("fit_gbt: training target is single-class");
  }

  GbtModel model;
  model.n_features = data.feature_dim;
  model.learning_rate = cfg.learning_rate;
  model.base_score = std::log(double(n_pos) / double(n_neg));

  const std::size_t n = rows.size();
  std::vector<double> margin(n, model.base_score);
  std::vector<double> g(data.rows(), 0.0), h(data.rows(), 0.0);

  auto logloss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += bce_from_logit(margin[i], double(data.targets[rows[i]]));
    }
    return total / double(n);
  };
  model.train_logloss.push_back(logloss());

  Rng rng(derive_seed(cfg.rng_seed, 0x676274ull));
  std::vector<std::size_t> fit_rows;
  std::vector<std::size_t> pick(n);
  for (std::uint32_t round = 0; round < cfg.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = rows[i];
      const double p = sigmoid(margin[i]);
      g[r] = p - double(data.targets[r]);
      h[r] = p * (1.0 - p);
    }

    fit_rows.clear();
    if (cfg.subsample >= 1.0) {
      fit_rows.assign(rows.begin(), rows.end());
    } else {
      const std::size_t take = std::max<std::size_t>(
          2, static_cast<std::size_t>(std::llround(cfg.subsample * double(n))));
      std::iota(pick.begin(), pick.end(), std::size_t(0));
      for (std::size_t i = 0; i < take && i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pick[i], pick[j]);
        fit_rows.push_back(rows[pick[i]]);
      }
      std::sort(fit_rows.begin(), fit_rows.end());
    }

    TreeBuilder builder(data, g, h, cfg);
    DecisionTree tree = builder.build(fit_rows);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += cfg.learning_rate * tree.evaluate(data.row(rows[i]));
    }
    model.trees.push_back(std::move(tree));
    model.train_logloss.push_back(logloss());
  }
  return model;
}

double predict_gbt(const GbtModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw DataError("predict_gbt: input has dim " + std::to_string(x.size()) +
                    ", model expects " + std::to_string(model.n_features));
  }
  double acc = 0.0;
  for (const DecisionTree& tree : model.trees) acc += tree.evaluate(x);
  return sigmoid(model.base_score + model.learning_rate * acc);
}

namespace {

// Round-robin over positives then negatives, with a cursor that keeps
// cycling across the two strata; fold sizes stay within +-1.
std::vector<std::uint8_t> row_level_folds(const FrameDataset& data) {
  std::vector<std::uint8_t> fold(data.rows(), 0);
  std::size_t cursor = 0;
  for (const int wanted : {1, 0}) {
    for (std::size_t r = 0; r < data.rows(); ++r) {
      if (int(data.targets[r]) != wanted) continue;
      fold[r] = static_cast<std::uint8_t>(cursor % 5);
      ++cursor;
    }
  }
  return fold;
}

std::vector<std::uint8_t> video_grouped_folds(const FrameDataset& data) {
  struct Group {
    std::string video_id;
    std::vector<std::size_t> rows;
    std::size_t n_pos = 0;
  };
  std::map<std::string, Group> by_video;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    Group& grp = by_video[data.video_ids[r]];
    grp.video_id = data.video_ids[r];
    grp.rows.push_back(r);
    if (data.targets[r]) ++grp.n_pos;
  }
  std::vector<Group> groups;
  groups.reserve(by_video.size());
  for (auto& [id, grp] : by_video) groups.push_back(std::move(grp));
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.n_pos != b.n_pos) return a.n_pos > b.n_pos;
    if (a.rows.size() != b.rows.size()) return a.rows.size() > b.rows.size();
    return a.video_id < b.video_id;
  });

  std::array<std::size_t, 5> fold_pos{}, fold_rows{};
  std::vector<std::uint8_t> fold(data.rows(), 0);
  for (const Group& grp : groups) {
    std::size_t pick = 0;
    for (std::size_t f = 1; f < 5; ++f) {
      if (std::tie(fold_pos[f], fold_rows[f], f) <
          std::tie(fold_pos[pick], fold_rows[pick], pick)) {
        pick = f;
      }
    }
    for (const std::size_t r : grp.rows) fold[r] = static_cast<std::uint8_t>(pick);
    fold_pos[pick] += grp.n_pos;
    fold_rows[pick] += grp.rows.size();
  }
  return fold;
}

// Every fold's training set (rows outside the fold) must contain both
// classes, otherwise the fold model is untrainable.
bool folds_trainable(const FrameDataset& data, const std::vector<std::uint8_t>& fold) {
  std::array<std::size_t, 5> pos{}, neg{};
  std::size_t total_pos = 0, total_neg = 0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (data.targets[r]) {
      ++pos[fold[r]];
      ++total_pos;
    } else {
      ++neg[fold[r]];
      ++total_neg;
    }
  }
  for (std::size_t f = 0; f < 5; ++f) {
    if (total_pos - pos[f] == 0 || total_neg - neg[f] == 0) return false;
  }
  return true;
}

}  // namespace

FoldEnsemble fit_cv(const FrameDataset& data, const GbtConfig& cfg) {
  validate_gbt_config(cfg);
  if (data.rows() < 10) throw DataError("fit_cv: need at least 10 rows");
  std::size_t n_pos = 0;
  for (const std::uint8_t t : data.targets) n_pos += t;
  if (n_pos < 2 || data.rows() - n_pos < 2) {
    throw DataError("fit_cv: need at least 2 rows of each class");
  }

  FoldEnsemble ens;
  ens.class_id = data.class_id;

  std::set<std::string> distinct_videos(data.video_ids.begin(), data.video_ids.end());
  if (distinct_videos.size() >= 5) {
    ens.fold_assignment = video_grouped_folds(data);
    ens.video_grouped = true;
    if (!folds_trainable(data, ens.fold_assignment)) {
      warn("fit_cv: class " + std::to_string(data.class_id) +
           ": video grouping leaves a fold single-class; falling back to "
           "row-level stratification");
      ens.fold_assignment = row_level_folds(data);
      ens.video_grouped = false;
    }
  } else {
    warn("fit_cv: class " + std::to_string(data.class_id) + ": only " +
         std::to_string(distinct_videos.size()) +
         " source videos; falling back to row-level stratification");
    ens.fold_assignment = row_level_folds(data);
    ens.video_grouped = false;
  }
  if (!folds_trainable(data, ens.fold_assignment)) {
    throw DataError("fit_cv: class " + std::to_string(data.class_id) +
                    ": cannot form 5 folds with both classes trainable");
  }

  for (std::uint8_t f = 0; f < 5; ++f) {
    std::vector<std::size_t> train_rows, val_rows;
    for (std::size_t r = 0; r < data.rows(); ++r) {
      (ens.fold_assignment[r] == f ? val_rows : train_rows).push_back(r);
    }
    GbtConfig fold_cfg = cfg;
    fold_cfg.rng_seed = derive_seed(cfg.rng_seed, 0x666F6C64ull + f);
    ens.folds[f] = fit_gbt(data, train_rows, fold_cfg);

    double val = 0.0;
    for (const std::size_t r : val_rows) {
      const double p = predict_gbt(ens.folds[f], data.row(r));
      const double y = double(data.targets[r]);
      val += -(y * std::log(std::max(p, 1e-12)) +
               (1.0 - y) * std::log(std::max(1.0 - p, 1e-12)));
    }
    ens.validation_logloss[f] = val_rows.empty() ? 0.0 : val / double(val_rows.size());
  }
  return ens;
}

double predict_cv(const FoldEnsemble& ensemble, std::span<const double> x) {
  double sum = 0.0;
  for (const GbtModel& m : ensemble.folds) sum += predict_gbt(m, x);
  return sum / 5.0;
}

namespace {

class GbtWriter {
 public:
  explicit GbtWriter(const std::filesystem::path& path)
      : path_(path.string()), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot open for writing: " + path_);
  }

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }

  void u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out_.write(reinterpret_cast<const char*>(b), 4);
  }

  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }

  void check() {
    if (!out_) throw DataError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class GbtReader {
 public:
  explicit GbtReader(const std::filesystem::path& path)
      : path_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open: " + path_);
  }

  std::uint8_t u8() {
    const int c = in_.get();
    if (c == EOF) fail("unexpected end of file");
    ++offset_;
    return static_cast<std::uint8_t>(c);
  }

  std::uint32_t u32() {
    unsigned char b[4];
    in_.read(reinterpret_cast<char*>(b), 4);
    if (in_.gcount() != 4) fail("unexpected end of file");
    offset_ += 4;
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | std::uint64_t(u32()) << 32;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  void magic() {
    char m[4];
    in_.read(m, 4);
    if (in_.gcount() != 4 || std::memcmp(m, kGbtMagic, 4) != 0) {
      throw FormatError(path_ + ": bad magic, expected 'SGT1'");
    }
    offset_ = 4;
  }

  [[noreturn]] void fail(const std::string& what) {
    throw FormatError(path_ + ": at offset " + std::to_string(offset_) + ": " + what);
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void write_model(GbtWriter& out, const GbtModel& m) {
  out.u32(m.n_features);
  out.f64(m.base_score);
  out.f64(m.learning_rate);
  out.u32(static_cast<std::uint32_t>(m.trees.size()));
  for (const DecisionTree& tree : m.trees) {
    out.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const TreeNode& node : tree.nodes) {
      out.u32(node.feature);
      out.f64(node.threshold);
      out.i32(node.left);
      out.i32(node.right);
      out.f64(node.value);
    }
  }
  out.u32(static_cast<std::uint32_t>(m.train_logloss.size()));
  for (const double v : m.train_logloss) out.f64(v);
}

GbtModel read_model(GbtReader& in) {
  GbtModel m;
  m.n_features = in.u32();
  m.base_score = in.f64();
  m.learning_rate = in.f64();
  const std::uint32_t n_trees = in.u32();
  m.trees.resize(n_trees);
  for (DecisionTree& tree : m.trees) {
    const std::uint32_t n_nodes = in.u32();
    tree.nodes.resize(n_nodes);
    for (TreeNode& node : tree.nodes) {
      node.feature = in.u32();
      node.threshold = in.f64();
      node.left = in.i32();
      node.right = in.i32();
      node.value = in.f64();
    }
  }
  const std::uint32_t n_loss = in.u32();
  m.train_logloss.resize(n_loss);
  for (double& v : m.train_logloss) v = in.f64();
  return m;
}

}  // namespace

void save_fold_ensemble(const FoldEnsemble& ensemble, const GbtConfig& cfg,
                        const std::filesystem::path& file) {
  GbtWriter out(file);
  out.u8('S');
  out.u8('G');
  out.u8('T');
  out.u8('1');
  out.u32(ensemble.class_id);
  out.u8(ensemble.video_grouped ? 1 : 0);
  out.u32(cfg.n_trees);
  out.u32(cfg.max_depth);
  out.f64(cfg.learning_rate);
  out.u32(cfg.min_samples_leaf);
  out.f64(cfg.lambda_l2);
  out.f64(cfg.subsample);
  out.u64(cfg.rng_seed);
  out.u32(static_cast<std::uint32_t>(ensemble.fold_assignment.size()));
  for (const std::uint8_t f : ensemble.fold_assignment) out.u8(f);
  for (const double v : ensemble.validation_logloss) out.f64(v);
  for (const GbtModel& m : ensemble.folds) write_model(out, m);
  out.check();
}

FoldEnsemble load_fold_ensemble(const std::filesystem::path& file) {
  GbtReader in(file);
  in.magic();
  FoldEnsemble ens;
  ens.class_id = in.u32();
  ens.video_grouped = in.u8() != 0;
  in.u32();  // n_trees (config echo)
  in.u32();  // max_depth
  in.f64();  // learning_rate
  in.u32();  // min_samples_leaf
  in.f64();  // lambda
  in.f64();  // subsample
  in.u64();  // seed
  const std::uint32_t n_rows = in.u32();
  ens.fold_assignment.resize(n_rows);
  for (std::uint8_t& f : ens.fold_assignment) {
    f = in.u8();
    if (f >= 5) in.fail("fold index out of range");
  }
  for (double& v : ens.validation_logloss) v = in.f64();
  for (GbtModel& m : ens.folds) m = read_model(in);
  return ens;
}

}  // namespace segloc
