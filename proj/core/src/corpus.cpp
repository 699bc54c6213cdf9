#include "segloc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>

#include "segloc/rng.hpp"

namespace segloc {

namespace {

std::string video_name(std::uint32_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%06u", index);
  return buf;
}

// Planted but not yet revealed annotation.
struct Candidate {
  std::uint32_t video = 0;
  std::uint32_t start = 0;
};

}  // namespace

void validate_corpus_config(const CorpusConfig& cfg) {
  if (cfg.dim < 1) throw ConfigError("corpus config: D must be >= 1");
  if (cfg.classes < 1) throw ConfigError("corpus config: C must be >= 1");
  if (cfg.segment_len != kSegmentLen) {
    throw ConfigError("corpus config: segment_len is fixed at 5");
  }
  if (cfg.max_frames < kSegmentLen) {
    throw ConfigError("corpus config: max_frames must be >= 5");
  }
}

void validate_synthetic_spec(const SyntheticSpec& spec, const CorpusConfig& cfg) {
  validate_corpus_config(cfg);
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(std::string("synthetic spec: ") + name + " must be in [0,1]");
    }
  };
  fraction(spec.event_rate, "event_rate");
  fraction(spec.label_fraction, "label_fraction");
  if (spec.noise_sigma < 0.0) {
    throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  }
  if (spec.classes_per_video < 0.0) {
    throw ConfigError("synthetic spec: classes_per_video must be >= 0");
  }
  if (spec.frames_min < kSegmentLen || spec.frames_max > cfg.max_frames ||
      spec.frames_min > spec.frames_max) {
    throw ConfigError("synthetic spec: frames_range must lie within [5, max_frames]");
  }
  // Each planted class needs event_rate of the timeline; more than one class
  // per video on average must still fit.
  const double demand = spec.event_rate * std::max(1.0, spec.classes_per_video);
  if (demand > 1.0 + 1e-9) {
    throw ConfigError(
        "synthetic spec infeasible: event_rate " + std::to_string(spec.event_rate) +
        " with classes_per_video " + std::to_string(spec.classes_per_video) +
        " would require more event frames than a video has");
  }
}

GeneratedCorpus generate_synthetic(const SyntheticSpec& spec, const CorpusConfig& cfg) {
  validate_synthetic_spec(spec, cfg);

  const std::uint32_t D = cfg.dim;
  const std::uint32_t C = cfg.classes;

  // Class prototypes: unit-norm directions, one per class.
  Rng proto_rng(derive_seed(cfg.rng_seed, 0x70726F746F));
  std::vector<std::vector<double>> prototypes(C, std::vector<double>(D));
  for (std::uint32_t c = 0; c < C; ++c) {
    double norm2 = 0.0;
    for (std::uint32_t d = 0; d < D; ++d) {
      prototypes[c][d] = proto_rng.gaussian();
      norm2 += prototypes[c][d] * prototypes[c][d];
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
    for (std::uint32_t d = 0; d < D; ++d) prototypes[c][d] *= inv;
  }

  GeneratedCorpus out;
  out.videos.resize(spec.n_videos);

  // Per (class, polarity) pools of planted segments, revealed later.
  std::vector<std::vector<Candidate>> positive_pool(C), negative_pool(C);

  for (std::uint32_t i = 0; i < spec.n_videos; ++i) {
    Rng rng(derive_seed(cfg.rng_seed, 0x766964ull * 0x10001ull + i));
    VideoRecord& video = out.videos[i];
    video.video_id = video_name(i);
    video.dim = D;
    video.frames = spec.frames_min +
                   static_cast<std::uint32_t>(
                       rng.below(std::uint64_t(spec.frames_max) - spec.frames_min + 1));

    const std::uint32_t n_blocks = video.frames / kSegmentLen;
    const std::uint32_t blocks_per_class = std::max<std::uint32_t>(
        1, static_cast<std::uint32_t>(std::llround(spec.event_rate * n_blocks)));

    // Number of planted classes; clamped so the chosen events always fit.
    std::uint32_t k = std::min<std::uint32_t>(rng.poisson(spec.classes_per_video), C);
    k = std::min(k, n_blocks / blocks_per_class);

    std::vector<std::uint32_t> class_ids(C);
    std::iota(class_ids.begin(), class_ids.end(), 0u);
    rng.shuffle(class_ids);
    class_ids.resize(k);
    std::sort(class_ids.begin(), class_ids.end());

    std::vector<std::uint32_t> block_order(n_blocks);
    std::iota(block_order.begin(), block_order.end(), 0u);
    rng.shuffle(block_order);

    // block_owner[b] = class owning block b, or C for background.
    std::vector<std::uint32_t> block_owner(n_blocks, C);
    std::size_t cursor = 0;
    for (const std::uint32_t c : class_ids) {
      for (std::uint32_t j = 0; j < blocks_per_class; ++j) {
        block_owner[block_order[cursor++]] = c;
      }
      video.video_labels.insert(c);
    }

    video.features.resize(std::size_t(video.frames) * D);
    for (std::uint32_t t = 0; t < video.frames; ++t) {
      const std::uint32_t b = t / kSegmentLen;
      const std::uint32_t owner = b < n_blocks ? block_owner[b] : C;
      float* row = video.features.data() + std::size_t(t) * D;
      for (std::uint32_t d = 0; d < D; ++d) {
        const double mean = owner < C ? prototypes[owner][d] : 0.0;
        const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.gaussian() : 0.0;
        row[d] = static_cast<float>(mean + noise);
      }
      if (owner < C) {
        out.truth.push_back({video.video_id, t, owner});
      }
    }

    // Planted segments: every aligned block of a positive video carries a
    // candidate label for each of the video's classes.
    for (const std::uint32_t c : class_ids) {
      for (std::uint32_t b = 0; b < n_blocks; ++b) {
        Candidate cand{i, b * kSegmentLen};
        if (block_owner[b] == c) {
          positive_pool[c].push_back(cand);
        } else {
          negative_pool[c].push_back(cand);
        }
      }
    }
  }

  // Reveal label_fraction of each pool, per class and polarity.
  Rng reveal_rng(derive_seed(cfg.rng_seed, 0x6C6162656Cull));
  auto reveal = [&](std::vector<Candidate>& pool, std::uint32_t class_id, Polarity pol) {
    reveal_rng.shuffle(pool);
    const std::size_t n =
        static_cast<std::size_t>(std::llround(spec.label_fraction * double(pool.size())));
    for (std::size_t j = 0; j < n; ++j) {
      out.labels.push_back({out.videos[pool[j].video].video_id, pool[j].start,
                            class_id, pol});
    }
  };
  for (std::uint32_t c = 0; c < C; ++c) {
    reveal(positive_pool[c], c, Polarity::positive);
    reveal(negative_pool[c], c, Polarity::negative);
  }

  std::sort(out.labels.begin(), out.labels.end(),
            [](const SegmentLabel& a, const SegmentLabel& b) {
              return std::tie(a.video_id, a.start, a.class_id) <
                     std::tie(b.video_id, b.start, b.class_id);
            });
  std::sort(out.truth.begin(), out.truth.end());
  return out;
}

std::vector<double> mean_pool(const VideoRecord& video) {
  if (video.frames < 1) throw DataError("mean_pool: video has no frames");
  std::vector<double> out(video.dim, 0.0);
  for (std::uint32_t t = 0; t < video.frames; ++t) {
    const float* row = video.frame(t);
    for (std::uint32_t d = 0; d < video.dim; ++d) out[d] += row[d];
  }
  const double inv = 1.0 / double(video.frames);
  for (double& v : out) v *= inv;
  return out;
}

std::vector<std::uint32_t> segment_starts(std::uint32_t frames, std::uint32_t stride) {
  if (stride == 0) throw ConfigError("stride must be >= 1");
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = 0; s < frames; s += stride) out.push_back(s);
  return out;
}

void validate_corpus(const std::vector<VideoRecord>& videos,
                     const std::vector<SegmentLabel>& labels,
                     const CorpusConfig& cfg) {
  validate_corpus_config(cfg);
  std::map<std::string, const VideoRecord*> by_id;
  for (const VideoRecord& v : videos) {
    if (v.video_id.empty()) throw DataError("corpus: empty video id");
    if (!by_id.emplace(v.video_id, &v).second) {
      throw DataError("corpus: duplicate video id '" + v.video_id + "'");
    }
    if (v.frames < 1 || v.frames > cfg.max_frames) {
      throw DataError("corpus: video '" + v.video_id + "' frame count " +
                      std::to_string(v.frames) + " outside [1, " +
                      std::to_string(cfg.max_frames) + "]");
    }
    if (v.dim != cfg.dim) {
      throw DataError("corpus: video '" + v.video_id + "' has D=" +
                      std::to_string(v.dim) + ", corpus D=" + std::to_string(cfg.dim));
    }
    if (v.features.size() != std::size_t(v.frames) * v.dim) {
      throw DataError("corpus: video '" + v.video_id + "' feature buffer size mismatch");
    }
    for (const float x : v.features) {
      if (!std::isfinite(x)) {
        throw DataError("corpus: video '" + v.video_id + "' has a non-finite feature");
      }
    }
    for (const std::uint32_t c : v.video_labels) {
      if (c >= cfg.classes) {
        throw DataError("corpus: video '" + v.video_id + "' labelled with class " +
                        std::to_string(c) + " >= C=" + std::to_string(cfg.classes));
      }
    }
  }
  std::set<std::tuple<std::string, std::uint32_t, std::uint32_t>> seen;
  for (const SegmentLabel& l : labels) {
    const auto it = by_id.find(l.video_id);
    if (it == by_id.end()) {
      throw DataError("labels: unknown video id '" + l.video_id + "'");
    }
    if (l.start + kSegmentLen > it->second->frames) {
      throw DataError("labels: segment [" + std::to_string(l.start) + "," +
                      std::to_string(l.start + kSegmentLen) + ") exceeds video '" +
                      l.video_id + "' length " + std::to_string(it->second->frames));
    }
    if (l.class_id >= cfg.classes) {
      throw DataError("labels: class " + std::to_string(l.class_id) +
                      " >= C=" + std::to_string(cfg.classes));
    }
    if (!seen.emplace(l.video_id, l.start, l.class_id).second) {
      throw DataError("labels: duplicate (video,start,class) = ('" + l.video_id +
                      "'," + std::to_string(l.start) + "," +
                      std::to_string(l.class_id) + ")");
    }
  }
}

}  // namespace segloc
