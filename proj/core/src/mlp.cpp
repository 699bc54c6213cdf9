#include "segloc/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "segloc/corpus.hpp"
#include "segloc/rng.hpp"
#include "segloc/util.hpp"

namespace segloc {

namespace {

constexpr char kMlpMagic[4] = {'S', 'G', 'M', '1'};

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// BCE from the logit, numerically stable for large |z|.
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

struct Activations {
  // pre[l] = W a + b of layer l; post[l] = activation(pre[l]).
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};

void forward(const MlpModel& m, std::span<const double> x, Activations* acts) {
  const std::size_t L = m.n_layers();
  acts->pre.assign(L, {});
  acts->post.assign(L, {});
  std::span<const double> cur = x;
  for (std::size_t l = 0; l < L; ++l) {
    const std::uint32_t in = m.layer_in[l], out = m.layer_out[l];
    std::vector<double>& z = acts->pre[l];
    z.assign(out, 0.0);
    const double* w = m.weights[l].data();
    for (std::uint32_t o = 0; o < out; ++o) {
      double acc = m.biases[l][o];
      const double* row = w + std::size_t(o) * in;
      for (std::uint32_t i = 0; i < in; ++i) acc += row[i] * cur[i];
      z[o] = acc;
    }
    std::vector<double>& a = acts->post[l];
    a = z;
    if (l + 1 < L) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;  // ReLU
    } else {
      for (double& v : a) v = sigmoid(v);
    }
    cur = a;
  }
}

}  // namespace

MlpModel init_mlp(std::uint32_t input_dim, const std::vector<std::uint32_t>& hidden,
                  std::uint32_t output_dim, std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) {
    throw ConfigError("mlp: input and output dims must be >= 1");
  }
  for (const std::uint32_t h : hidden) {
    if (h < 1) throw ConfigError("mlp: hidden sizes must be >= 1");
  }
  MlpModel m;
  m.input_dim = input_dim;
  m.output_dim = output_dim;
  std::vector<std::uint32_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::uint32_t in = dims[l], out = dims[l + 1];
    m.layer_in.push_back(in);
    m.layer_out.push_back(out);
    const double a = std::sqrt(6.0 / double(in + out));
    std::vector<double> w(std::size_t(in) * out);
    for (double& v : w) v = rng.uniform(-a, a);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
  }
  return m;
}

std::vector<double> predict_video(const MlpModel& model, std::span<const double> input) {
  if (input.size() != model.input_dim) {
    throw DataError("mlp: input has dim " + std::to_string(input.size()) +
                    ", model expects " + std::to_string(model.input_dim));
  }
  Activations acts;
  forward(model, input, &acts);
  return acts.post.back();
}

std::vector<double> predict_frame(const MlpModel& model, const float* frame,
                                  std::uint32_t dim) {
  std::vector<double> x(frame, frame + dim);
  return predict_video(model, x);
}

double mlp_loss_and_gradient(const MlpModel& model,
                             const std::vector<std::vector<double>>& inputs,
                             const std::vector<std::vector<double>>& targets,
                             double l2, MlpGradient* grad) {
  if (inputs.empty() || inputs.size() != targets.size()) {
    throw DataError("mlp: batch inputs/targets size mismatch");
  }
  const std::size_t L = model.n_layers();
  if (grad) {
    grad->weights.assign(L, {});
    grad->biases.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
      grad->weights[l].assign(model.weights[l].size(), 0.0);
      grad->biases[l].assign(model.biases[l].size(), 0.0);
    }
  }

  const double scale = 1.0 / (double(inputs.size()) * double(model.output_dim));
  double loss = 0.0;
  Activations acts;
  std::vector<double> delta, next_delta;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    forward(model, inputs[n], &acts);
    const std::vector<double>& z_out = acts.pre.back();
    for (std::uint32_t c = 0; c < model.output_dim; ++c) {
      loss += scale * bce_from_logit(z_out[c], targets[n][c]);
    }
    if (!grad) continue;

    // delta = dLoss/dz for the current layer, starting at the output.
    delta.resize(model.output_dim);
    for (std::uint32_t c = 0; c < model.output_dim; ++c) {
      delta[c] = scale * (acts.post.back()[c] - targets[n][c]);
    }
    for (std::size_t l = L; l-- > 0;) {
      const std::uint32_t in = model.layer_in[l], out = model.layer_out[l];
      const std::vector<double>& a_prev = l == 0 ? inputs[n] : acts.post[l - 1];
      double* gw = grad->weights[l].data();
      for (std::uint32_t o = 0; o < out; ++o) {
        const double d = delta[o];
        grad->biases[l][o] += d;
        double* row = gw + std::size_t(o) * in;
        for (std::uint32_t i = 0; i < in; ++i) row[i] += d * a_prev[i];
      }
      if (l == 0) break;
      next_delta.assign(in, 0.0);
      const double* w = model.weights[l].data();
      for (std::uint32_t o = 0; o < out; ++o) {
        const double d = delta[o];
        const double* row = w + std::size_t(o) * in;
        for (std::uint32_t i = 0; i < in; ++i) next_delta[i] += d * row[i];
      }
      // Through the ReLU of layer l-1.
      for (std::uint32_t i = 0; i < in; ++i) {
        if (acts.pre[l - 1][i] <= 0.0) next_delta[i] = 0.0;
      }
      delta = next_delta;
    }
  }

  if (l2 > 0.0) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
        const double w = model.weights[l][i];
        loss += 0.5 * l2 * w * w;
        if (grad) grad->weights[l][i] += l2 * w;
      }
    }
  }
  return loss;
}

MlpModel train_video_model(const std::vector<VideoRecord>& corpus,
                           const TrainConfig& cfg, std::uint32_t n_classes) {
  if (corpus.empty()) throw DataError("train_video_model: empty corpus");
  if (cfg.learning_rate <= 0.0 || cfg.batch_size < 1) {
    throw ConfigError("train_video_model: learning rate and batch size must be positive");
  }
  const std::uint32_t dim = corpus.front().dim;

  std::vector<std::vector<double>> x(corpus.size());
  std::vector<std::vector<double>> y(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    x[i] = mean_pool(corpus[i]);
    y[i].assign(n_classes, 0.0);
    for (const std::uint32_t c : corpus[i].video_labels) {
      if (c >= n_classes) {
        throw DataError("train_video_model: video label " + std::to_string(c) +
                        " >= C=" + std::to_string(n_classes));
      }
      y[i][c] = 1.0;
    }
  }

  MlpModel model = init_mlp(dim, cfg.hidden_sizes, n_classes, cfg.rng_seed);
  Rng shuffle_rng(derive_seed(cfg.rng_seed, 0x736875666Cull));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0u);

  MlpGradient grad;
  std::vector<std::vector<double>> bx, by;
  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      bx.clear();
      by.clear();
      for (std::size_t j = begin; j < end; ++j) {
        bx.push_back(x[order[j]]);
        by.push_back(y[order[j]]);
      }
      const double loss = mlp_loss_and_gradient(model, bx, by, cfg.l2, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError(
            "train_video_model: loss became non-finite; try a smaller learning rate");
      }
      for (std::size_t l = 0; l < model.n_layers(); ++l) {
        for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
          model.weights[l][i] -= cfg.learning_rate * grad.weights[l][i];
        }
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
          model.biases[l][i] -= cfg.learning_rate * grad.biases[l][i];
        }
      }
    }
  }
  return model;
}

void save_mlp(const MlpModel& model, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + file.string());
  auto u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto f32 = [&](double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  };
  out.write(kMlpMagic, 4);
  u32(model.input_dim);
  u32(static_cast<std::uint32_t>(model.n_layers()));
  for (std::size_t l = 0; l < model.n_layers(); ++l) u32(model.layer_out[l]);
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    for (const double w : model.weights[l]) f32(w);
    for (const double b : model.biases[l]) f32(b);
  }
  if (!out) throw DataError("write failed: " + file.string());
}

MlpModel load_mlp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open: " + file.string());
  std::size_t offset = 0;
  auto fail = [&](const std::string& what) {
    throw FormatError(file.string() + ": at offset " + std::to_string(offset) +
                      ": " + what);
  };
  auto u32 = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) fail("unexpected end of file");
    offset += 4;
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  };
  auto f32 = [&]() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return double(v);
  };
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMlpMagic, 4) != 0) {
    throw FormatError(file.string() + ": bad magic, expected 'SGM1'");
  }
  offset = 4;

  MlpModel m;
  m.input_dim = u32();
  const std::uint32_t n_layers = u32();
  if (n_layers < 1 || n_layers > 64) fail("implausible layer count");
  std::vector<std::uint32_t> outs(n_layers);
  for (auto& o : outs) o = u32();
  std::uint32_t in_dim = m.input_dim;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    m.layer_in.push_back(in_dim);
    m.layer_out.push_back(outs[l]);
    in_dim = outs[l];
  }
  m.output_dim = outs.back();
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    std::vector<double> w(std::size_t(m.layer_in[l]) * m.layer_out[l]);
    for (double& v : w) v = f32();
    m.weights.push_back(std::move(w));
    std::vector<double> b(m.layer_out[l]);
    for (double& v : b) v = f32();
    m.biases.push_back(std::move(b));
  }
  return m;
}

}  // namespace segloc
