#include "segloc/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "segloc/corpus.hpp"
#include "segloc/rng.hpp"
#include "segloc/util.hpp"

namespace segloc {

namespace {

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

// y += M x, with M row-major (rows x cols).
void matvec_add(const std::vector<double>& m, const double* x, std::size_t rows,
                std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T d, with M row-major (rows x cols); d has `rows` entries.
void matvec_t_add(const std::vector<double>& m, const double* d, std::size_t rows,
                  std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double dr = d[r];
    const double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) y[c] += dr * row[c];
  }
}

// G += d x^T.
void outer_add(std::vector<double>& g, const double* d, const double* x,
               std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = g.data() + r * cols;
    const double dr = d[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += dr * x[c];
  }
}

// Per-step activations of one directional pass, in processing order.
struct CellTrace {
  std::size_t steps = 0;
  std::size_t hidden = 0;
  std::vector<double> h;        // steps x H
  std::vector<double> update;   // z gate
  std::vector<double> reset;    // r gate
  std::vector<double> cand;     // candidate
  std::vector<double> reset_h;  // r (.) h_prev

  const double* at(const std::vector<double>& buf, std::size_t step) const {
    return buf.data() + step * hidden;
  }
};

// h_t = (1 - z) (.) h_prev + z (.) cand, standard 2-gate recurrence.
void cell_forward(const GruCell& cell, const std::vector<std::vector<double>>& inputs,
                  std::size_t input_dim, std::size_t hidden, CellTrace* trace) {
  const std::size_t steps = inputs.size();
  trace->steps = steps;
  trace->hidden = hidden;
  trace->h.assign(steps * hidden, 0.0);
  trace->update.assign(steps * hidden, 0.0);
  trace->reset.assign(steps * hidden, 0.0);
  trace->cand.assign(steps * hidden, 0.0);
  trace->reset_h.assign(steps * hidden, 0.0);

  std::vector<double> h_prev(hidden, 0.0);
  std::vector<double> z(hidden), r(hidden), c(hidden), s(hidden);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* x = inputs[t].data();

    z.assign(cell.b_update.begin(), cell.b_update.end());
    matvec_add(cell.w_update, x, hidden, input_dim, z.data());
    matvec_add(cell.u_update, h_prev.data(), hidden, hidden, z.data());
    for (double& v : z) v = sigmoid(v);

    r.assign(cell.b_reset.begin(), cell.b_reset.end());
    matvec_add(cell.w_reset, x, hidden, input_dim, r.data());
    matvec_add(cell.u_reset, h_prev.data(), hidden, hidden, r.data());
    for (double& v : r) v = sigmoid(v);

    for (std::size_t j = 0; j < hidden; ++j) s[j] = r[j] * h_prev[j];

    c.assign(cell.b_cand.begin(), cell.b_cand.end());
    matvec_add(cell.w_cand, x, hidden, input_dim, c.data());
    matvec_add(cell.u_cand, s.data(), hidden, hidden, c.data());
    for (double& v : c) v = std::tanh(v);

    double* h_out = trace->h.data() + t * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      h_out[j] = (1.0 - z[j]) * h_prev[j] + z[j] * c[j];
    }
    std::copy(z.begin(), z.end(), trace->update.begin() + t * hidden);
    std::copy(r.begin(), r.end(), trace->reset.begin() + t * hidden);
    std::copy(c.begin(), c.end(), trace->cand.begin() + t * hidden);
    std::copy(s.begin(), s.end(), trace->reset_h.begin() + t * hidden);
    std::copy(h_out, h_out + hidden, h_prev.begin());
  }
}

struct CellGrad {
  GruCell* acc = nullptr;
  std::vector<std::vector<double>>* dx = nullptr;  // per step, input_dim
};

// Backpropagation through time over the trace; dh_ext holds the external
// gradient injected at each step (from the output layer).
void cell_backward(const GruCell& cell, const std::vector<std::vector<double>>& inputs,
                   std::size_t input_dim, std::size_t hidden, const CellTrace& trace,
                   const std::vector<std::vector<double>>& dh_ext, CellGrad out) {
  const std::size_t steps = trace.steps;
  std::vector<double> dh(hidden, 0.0);
  std::vector<double> dz(hidden), dr(hidden), dc(hidden), ds(hidden),
      dh_prev(hidden);
  std::vector<double> zero(hidden, 0.0);

  for (std::size_t t = steps; t-- > 0;) {
    const double* x = inputs[t].data();
    const double* h_prev = t == 0 ? zero.data() : trace.at(trace.h, t - 1);
    const double* z = trace.at(trace.update, t);
    const double* r = trace.at(trace.reset, t);
    const double* c = trace.at(trace.cand, t);
    const double* s = trace.at(trace.reset_h, t);

    for (std::size_t j = 0; j < hidden; ++j) dh[j] += dh_ext[t][j];

    for (std::size_t j = 0; j < hidden; ++j) {
      dz[j] = dh[j] * (c[j] - h_prev[j]) * z[j] * (1.0 - z[j]);
      dc[j] = dh[j] * z[j] * (1.0 - c[j] * c[j]);
      dh_prev[j] = dh[j] * (1.0 - z[j]);
    }

    ds.assign(hidden, 0.0);
    matvec_t_add(cell.u_cand, dc.data(), hidden, hidden, ds.data());
    for (std::size_t j = 0; j < hidden; ++j) {
      dr[j] = ds[j] * h_prev[j] * r[j] * (1.0 - r[j]);
      dh_prev[j] += ds[j] * r[j];
    }
    matvec_t_add(cell.u_update, dz.data(), hidden, hidden, dh_prev.data());
    matvec_t_add(cell.u_reset, dr.data(), hidden, hidden, dh_prev.data());

    if (out.acc) {
      outer_add(out.acc->w_update, dz.data(), x, hidden, input_dim);
      outer_add(out.acc->u_update, dz.data(), h_prev, hidden, hidden);
      outer_add(out.acc->w_reset, dr.data(), x, hidden, input_dim);
      outer_add(out.acc->u_reset, dr.data(), h_prev, hidden, hidden);
      outer_add(out.acc->w_cand, dc.data(), x, hidden, input_dim);
      outer_add(out.acc->u_cand, dc.data(), s, hidden, hidden);
      for (std::size_t j = 0; j < hidden; ++j) {
        out.acc->b_update[j] += dz[j];
        out.acc->b_reset[j] += dr[j];
        out.acc->b_cand[j] += dc[j];
      }
    }
    if (out.dx) {
      std::vector<double>& dx = (*out.dx)[t];
      matvec_t_add(cell.w_update, dz.data(), hidden, input_dim, dx.data());
      matvec_t_add(cell.w_reset, dr.data(), hidden, input_dim, dx.data());
      matvec_t_add(cell.w_cand, dc.data(), hidden, input_dim, dx.data());
    }
    dh = dh_prev;
  }
}

GruCell make_cell(std::size_t input_dim, std::size_t hidden) {
  GruCell cell;
  cell.w_update.assign(hidden * input_dim, 0.0);
  cell.u_update.assign(hidden * hidden, 0.0);
  cell.b_update.assign(hidden, 0.0);
  cell.w_reset.assign(hidden * input_dim, 0.0);
  cell.u_reset.assign(hidden * hidden, 0.0);
  cell.b_reset.assign(hidden, 0.0);
  cell.w_cand.assign(hidden * input_dim, 0.0);
  cell.u_cand.assign(hidden * hidden, 0.0);
  cell.b_cand.assign(hidden, 0.0);
  return cell;
}

void init_cell(GruCell& cell, Rng& rng, double sigma) {
  for (auto* w : {&cell.w_update, &cell.u_update, &cell.w_reset, &cell.u_reset,
                  &cell.w_cand, &cell.u_cand}) {
    for (double& v : *w) v = rng.truncated_gaussian(sigma);
  }
}

// Inputs x_t = [frame_t ; embedding(class)], built once per pair.
std::vector<std::vector<double>> build_inputs(const LocalizerModel& model,
                                              const VideoRecord& video,
                                              std::uint32_t class_id) {
  if (video.dim != model.input_dim) {
    throw DataError("localizer: video '" + video.video_id + "' has D=" +
                    std::to_string(video.dim) + ", model expects " +
                    std::to_string(model.input_dim));
  }
  if (class_id >= model.n_classes) {
    throw DataError("localizer: class " + std::to_string(class_id) + " >= C=" +
                    std::to_string(model.n_classes));
  }
  const double* emb = model.embedding.data() +
                      std::size_t(class_id) * model.embed_dim;
  std::vector<std::vector<double>> inputs(video.frames);
  for (std::uint32_t t = 0; t < video.frames; ++t) {
    std::vector<double>& x = inputs[t];
    x.resize(model.input_dim + model.embed_dim);
    const float* row = video.frame(t);
    for (std::uint32_t d = 0; d < model.input_dim; ++d) x[d] = row[d];
    for (std::uint32_t e = 0; e < model.embed_dim; ++e) {
      x[model.input_dim + e] = emb[e];
    }
  }
  return inputs;
}

std::vector<double> logits_from_traces(const LocalizerModel& model,
                                       const CellTrace& fwd, const CellTrace& bwd,
                                       std::size_t frames) {
  const std::size_t H = model.hidden_dim;
  std::vector<double> logits(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* hf = fwd.at(fwd.h, t);
    const double* hb = bwd.at(bwd.h, frames - 1 - t);
    double fwd_part = 0.0, bwd_part = 0.0;
    for (std::size_t j = 0; j < H; ++j) fwd_part += model.out_weight[j] * hf[j];
    for (std::size_t j = 0; j < H; ++j) bwd_part += model.out_weight[H + j] * hb[j];
    logits[t] = fwd_part + bwd_part + model.out_bias;
  }
  return logits;
}

}  // namespace

LocalizerModel init_localizer(std::uint32_t input_dim, std::uint32_t n_classes,
                              std::uint32_t embed_dim, std::uint32_t hidden_dim,
                              std::uint64_t seed) {
  if (input_dim < 1 || n_classes < 1 || embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("localizer: all dims must be >= 1");
  }
  LocalizerModel m;
  m.input_dim = input_dim;
  m.n_classes = n_classes;
  m.embed_dim = embed_dim;
  m.hidden_dim = hidden_dim;

  const double sigma = 0.1;
  Rng rng(derive_seed(seed, 0x6C6F63ull));
  m.embedding.resize(std::size_t(n_classes) * embed_dim);
  for (double& v : m.embedding) v = rng.truncated_gaussian(sigma);
  const std::size_t in = input_dim + embed_dim;
  m.forward_cell = make_cell(in, hidden_dim);
  m.backward_cell = make_cell(in, hidden_dim);
  init_cell(m.forward_cell, rng, sigma);
  init_cell(m.backward_cell, rng, sigma);
  m.out_weight.resize(2 * std::size_t(hidden_dim));
  for (double& v : m.out_weight) v = rng.truncated_gaussian(sigma);
  m.out_bias = 0.0;
  return m;
}

std::vector<MaskedTargets> build_masked_targets(const std::vector<VideoRecord>& corpus,
                                                const std::vector<SegmentLabel>& labels) {
  std::map<std::string, const VideoRecord*> by_id;
  for (const VideoRecord& v : corpus) by_id[v.video_id] = &v;

  std::map<std::pair<std::string, std::uint32_t>, MaskedTargets> pairs;
  auto paint = [&](const SegmentLabel& l, FrameTarget value, bool overwrite) {
    const auto it = by_id.find(l.video_id);
    if (it == by_id.end()) {
      throw DataError("masked targets: label references unknown video '" +
                      l.video_id + "'");
    }
    MaskedTargets& mt = pairs[{l.video_id, l.class_id}];
    if (mt.frames.empty()) {
      mt.video_id = l.video_id;
      mt.class_id = l.class_id;
      mt.frames.assign(it->second->frames, FrameTarget::unlabelled);
    }
    if (l.start + kSegmentLen > it->second->frames) {
      throw DataError("masked targets: segment out of bounds in video '" +
                      l.video_id + "'");
    }
    for (std::uint32_t t = l.start; t < l.start + kSegmentLen; ++t) {
      if (overwrite || mt.frames[t] == FrameTarget::unlabelled) mt.frames[t] = value;
    }
  };
  for (const SegmentLabel& l : labels) {
    if (l.polarity == Polarity::negative) paint(l, FrameTarget::negative, false);
  }
  for (const SegmentLabel& l : labels) {
    if (l.polarity == Polarity::positive) paint(l, FrameTarget::positive, true);
  }

  std::vector<MaskedTargets> out;
  out.reserve(pairs.size());
  for (auto& [key, mt] : pairs) out.push_back(std::move(mt));
  return out;
}

std::vector<double> localizer_logits(const LocalizerModel& model,
                                     const VideoRecord& video,
                                     std::uint32_t class_id) {
  const auto inputs = build_inputs(model, video, class_id);
  const std::size_t in_dim = model.input_dim + model.embed_dim;

  CellTrace fwd, bwd;
  cell_forward(model.forward_cell, inputs, in_dim, model.hidden_dim, &fwd);
  std::vector<std::vector<double>> reversed(inputs.rbegin(), inputs.rend());
  cell_forward(model.backward_cell, reversed, in_dim, model.hidden_dim, &bwd);
  return logits_from_traces(model, fwd, bwd, video.frames);
}

std::vector<double> localizer_forward(const LocalizerModel& model,
                                      const VideoRecord& video,
                                      std::uint32_t class_id) {
  std::vector<double> out = localizer_logits(model, video, class_id);
  for (double& v : out) v = sigmoid(v);
  return out;
}

double masked_bce_loss(std::span<const double> logits,
                       std::span<const FrameTarget> targets) {
  if (logits.size() != targets.size()) {
    throw DataError("masked_bce_loss: logits/targets length mismatch");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (targets[t] == FrameTarget::unlabelled) continue;
    loss += bce_from_logit(logits[t], targets[t] == FrameTarget::positive ? 1.0 : 0.0);
  }
  return loss;
}

double localizer_loss_and_gradient(const LocalizerModel& model,
                                   const VideoRecord& video,
                                   const MaskedTargets& targets,
                                   LocalizerGradient* grad) {
  if (targets.frames.size() != video.frames) {
    throw DataError("localizer: targets length != video frames");
  }
  const auto inputs = build_inputs(model, video, targets.class_id);
  const std::size_t in_dim = model.input_dim + model.embed_dim;
  const std::size_t H = model.hidden_dim;
  const std::size_t T = video.frames;

  CellTrace fwd, bwd;
  cell_forward(model.forward_cell, inputs, in_dim, H, &fwd);
  std::vector<std::vector<double>> reversed(inputs.rbegin(), inputs.rend());
  cell_forward(model.backward_cell, reversed, in_dim, H, &bwd);
  const std::vector<double> logits = logits_from_traces(model, fwd, bwd, T);
  const double loss = masked_bce_loss(logits, targets.frames);
  if (!grad) return loss;

  grad->embedding.assign(model.embedding.size(), 0.0);
  grad->forward_cell = make_cell(in_dim, H);
  grad->backward_cell = make_cell(in_dim, H);
  grad->out_weight.assign(2 * H, 0.0);
  grad->out_bias = 0.0;

  // Output layer: only labelled frames inject gradient.
  std::vector<std::vector<double>> dh_fwd(T, std::vector<double>(H, 0.0));
  std::vector<std::vector<double>> dh_bwd(T, std::vector<double>(H, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    if (targets.frames[t] == FrameTarget::unlabelled) continue;
    const double y = targets.frames[t] == FrameTarget::positive ? 1.0 : 0.0;
    const double dlogit = sigmoid(logits[t]) - y;
    const double* hf = fwd.at(fwd.h, t);
    const double* hb = bwd.at(bwd.h, T - 1 - t);
    for (std::size_t j = 0; j < H; ++j) {
      grad->out_weight[j] += dlogit * hf[j];
      grad->out_weight[H + j] += dlogit * hb[j];
      dh_fwd[t][j] += dlogit * model.out_weight[j];
      dh_bwd[T - 1 - t][j] += dlogit * model.out_weight[H + j];
    }
    grad->out_bias += dlogit;
  }

  std::vector<std::vector<double>> dx_fwd(T, std::vector<double>(in_dim, 0.0));
  std::vector<std::vector<double>> dx_bwd(T, std::vector<double>(in_dim, 0.0));
  cell_backward(model.forward_cell, inputs, in_dim, H, fwd, dh_fwd,
                {&grad->forward_cell, &dx_fwd});
  cell_backward(model.backward_cell, reversed, in_dim, H, bwd, dh_bwd,
                {&grad->backward_cell, &dx_bwd});

  // Embedding receives the summed input gradient over all steps of both
  // directions (the embedding occupies the input tail).
  double* demb = grad->embedding.data() +
                 std::size_t(targets.class_id) * model.embed_dim;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::uint32_t e = 0; e < model.embed_dim; ++e) {
      demb[e] += dx_fwd[t][model.input_dim + e] + dx_bwd[t][model.input_dim + e];
    }
  }
  return loss;
}

std::vector<std::span<double>> parameter_views(LocalizerModel& model) {
  std::vector<std::span<double>> out;
  out.emplace_back(model.embedding);
  for (GruCell* cell : {&model.forward_cell, &model.backward_cell}) {
    out.emplace_back(cell->w_update);
    out.emplace_back(cell->u_update);
    out.emplace_back(cell->b_update);
    out.emplace_back(cell->w_reset);
    out.emplace_back(cell->u_reset);
    out.emplace_back(cell->b_reset);
    out.emplace_back(cell->w_cand);
    out.emplace_back(cell->u_cand);
    out.emplace_back(cell->b_cand);
  }
  out.emplace_back(model.out_weight);
  out.emplace_back(&model.out_bias, 1);
  return out;
}

std::vector<std::span<double>> gradient_views(LocalizerGradient& grad,
                                              const LocalizerModel& shape) {
  (void)shape;
  std::vector<std::span<double>> out;
  out.emplace_back(grad.embedding);
  for (GruCell* cell : {&grad.forward_cell, &grad.backward_cell}) {
    out.emplace_back(cell->w_update);
    out.emplace_back(cell->u_update);
    out.emplace_back(cell->b_update);
    out.emplace_back(cell->w_reset);
    out.emplace_back(cell->u_reset);
    out.emplace_back(cell->b_reset);
    out.emplace_back(cell->w_cand);
    out.emplace_back(cell->u_cand);
    out.emplace_back(cell->b_cand);
  }
  out.emplace_back(grad.out_weight);
  out.emplace_back(&grad.out_bias, 1);
  return out;
}

LocalizerModel train_localizer(const std::vector<VideoRecord>& corpus,
                               const std::vector<SegmentLabel>& labels,
                               const TrainConfig& cfg, std::uint32_t n_classes,
                               std::uint32_t embed_dim) {
  const std::vector<MaskedTargets> pairs = build_masked_targets(corpus, labels);
  if (pairs.empty()) {
    throw DataError("train_localizer: no labelled segments");
  }
  std::map<std::string, const VideoRecord*> by_id;
  for (const VideoRecord& v : corpus) by_id[v.video_id] = &v;

  const std::uint32_t hidden =
      cfg.hidden_sizes.empty() ? 64 : cfg.hidden_sizes.front();
  LocalizerModel model = init_localizer(corpus.front().dim, n_classes, embed_dim,
                                        hidden, cfg.rng_seed);

  Rng shuffle_rng(derive_seed(cfg.rng_seed, 0x6C6F63736800ull));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  LocalizerGradient grad;
  auto params = parameter_views(model);
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (const std::size_t idx : order) {
      const MaskedTargets& mt = pairs[idx];
      const double loss =
          localizer_loss_and_gradient(model, *by_id.at(mt.video_id), mt, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError(
            "train_localizer: loss became non-finite; try a smaller learning rate");
      }
      auto grads = gradient_views(grad, model);
      for (std::size_t v = 0; v < params.size(); ++v) {
        double* p = params[v].data();
        const double* g = grads[v].data();
        for (std::size_t i = 0; i < params[v].size(); ++i) {
          p[i] -= cfg.learning_rate * g[i];
        }
      }
      if (cfg.l2 > 0.0) {
        // Decoupled weight decay on the recurrent and output weights.
        for (GruCell* cell : {&model.forward_cell, &model.backward_cell}) {
          for (auto* w : {&cell->w_update, &cell->u_update, &cell->w_reset,
                          &cell->u_reset, &cell->w_cand, &cell->u_cand}) {
            for (double& v : *w) v -= cfg.learning_rate * cfg.l2 * v;
          }
        }
        for (double& v : model.out_weight) v -= cfg.learning_rate * cfg.l2 * v;
      }
    }
  }
  return model;
}

ScoreTable localizer_scores(const LocalizerModel& model,
                            const std::vector<VideoRecord>& corpus,
                            std::uint32_t stride,
                            const std::vector<std::uint32_t>& classes,
                            unsigned jobs) {
  using Entry = std::pair<ScoreKey, double>;
  std::vector<std::vector<Entry>> per_video(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    const VideoRecord& video = corpus[i];
    std::vector<Entry>& out = per_video[i];
    for (const std::uint32_t class_id : classes) {
      const std::vector<double> probs = localizer_forward(model, video, class_id);
      for (const std::uint32_t start : segment_starts(video.frames, stride)) {
        const std::uint32_t end =
            std::min<std::uint32_t>(start + kSegmentLen, video.frames);
        double sum = 0.0;
        for (std::uint32_t t = start; t < end; ++t) sum += probs[t];
        out.push_back({{video.video_id, start, class_id}, sum / double(end - start)});
      }
    }
  });

  ScoreTable table;
  table.provenance = "localizer";
  for (auto& entries : per_video) {
    for (auto& [key, score] : entries) table.entries[std::move(key)] = score;
  }
  return table;
}

void save_localizer(const LocalizerModel& model, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + file.string());
  auto u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u32(static_cast<std::uint32_t>(bits));
    u32(static_cast<std::uint32_t>(bits >> 32));
  };
  out.write("SGL1", 4);
  u32(model.input_dim);
  u32(model.n_classes);
  u32(model.embed_dim);
  u32(model.hidden_dim);
  LocalizerModel& mutable_model = const_cast<LocalizerModel&>(model);
  for (const auto view : parameter_views(mutable_model)) {
    for (const double v : view) f64(v);
  }
  if (!out) throw DataError("write failed: " + file.string());
}

LocalizerModel load_localizer(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open: " + file.string());
  auto u32 = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError(file.string() + ": unexpected end of file");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  };
  auto f64 = [&]() {
    const std::uint64_t lo = u32();
    const std::uint64_t bits = lo | std::uint64_t(u32()) << 32;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  };
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "SGL1", 4) != 0) {
    throw FormatError(file.string() + ": bad magic, expected 'SGL1'");
  }
  const std::uint32_t input_dim = u32();
  const std::uint32_t n_classes = u32();
  const std::uint32_t embed_dim = u32();
  const std::uint32_t hidden_dim = u32();
  LocalizerModel model = init_localizer(input_dim, n_classes, embed_dim, hidden_dim, 0);
  for (auto view : parameter_views(model)) {
    for (double& v : view) v = f64();
  }
  return model;
}

}  // namespace segloc
