#include "segloc/frame_dataset.hpp"

#include <algorithm>
#include <map>

#include "segloc/rng.hpp"
#include "segloc/util.hpp"

namespace segloc {

std::vector<std::uint32_t> expand_segment_frames(const SegmentLabel& label,
                                                 const VideoRecord& video) {
  if (label.video_id != video.video_id) {
    throw DataError("expand_segment_frames: label references video '" +
                    label.video_id + "', got '" + video.video_id + "'");
  }
  if (label.start + kSegmentLen > video.frames) {
    throw DataError("expand_segment_frames: segment at " + std::to_string(label.start) +
                    " exceeds video length " + std::to_string(video.frames));
  }
  const std::int64_t lo = std::int64_t(label.start) - 2;
  const std::int64_t hi = std::int64_t(label.start) + kSegmentLen + 2;
  std::vector<std::uint32_t> out;
  for (std::int64_t t = std::max<std::int64_t>(lo, 0);
       t < std::min<std::int64_t>(hi, video.frames); ++t) {
    out.push_back(static_cast<std::uint32_t>(t));
  }
  return out;
}

FrameDataset build_frame_dataset(std::uint32_t class_id,
                                 const std::vector<SegmentLabel>& labels,
                                 const std::vector<VideoRecord>& corpus,
                                 const MlpModel& fl_model,
                                 std::int64_t n_random_neg,
                                 std::uint64_t seed) {
  std::map<std::string, const VideoRecord*> by_id;
  for (const VideoRecord& v : corpus) by_id[v.video_id] = &v;
  const std::uint32_t dim = fl_model.input_dim;
  const std::uint32_t n_classes = fl_model.output_dim;

  FrameDataset ds;
  ds.class_id = class_id;
  ds.feature_dim = dim + n_classes;

  auto add_row = [&](const VideoRecord& video, std::uint32_t frame,
                     std::uint8_t target, RowSource source) {
    if (video.dim != dim) {
      throw DataError("build_frame_dataset: video '" + video.video_id + "' has D=" +
                      std::to_string(video.dim) + ", fl model expects " +
                      std::to_string(dim));
    }
    const float* raw = video.frame(frame);
    const std::vector<double> fl = predict_frame(fl_model, raw, dim);
    const std::size_t base = ds.features.size();
    ds.features.resize(base + ds.feature_dim);
    for (std::uint32_t d = 0; d < dim; ++d) ds.features[base + d] = raw[d];
    std::copy(fl.begin(), fl.end(), ds.features.begin() + base + dim);
    ds.targets.push_back(target);
    ds.sources.push_back(source);
    ds.video_ids.push_back(video.video_id);
  };

  std::size_t n_positive = 0;
  for (const SegmentLabel& label : labels) {
    if (label.class_id != class_id) continue;
    const auto it = by_id.find(label.video_id);
    if (it == by_id.end()) {
      throw DataError("build_frame_dataset: label references unknown video '" +
                      label.video_id + "'");
    }
    const bool positive = label.polarity == Polarity::positive;
    if (positive) ++n_positive;
    for (const std::uint32_t t : expand_segment_frames(label, *it->second)) {
      add_row(*it->second, t, positive ? 1 : 0,
              positive ? RowSource::segment_positive : RowSource::segment_negative);
    }
  }
  if (n_positive == 0) {
    throw DataError("build_frame_dataset: class " + std::to_string(class_id) +
                    " has no positive segment labels");
  }

  std::size_t want = 0;
  if (n_random_neg < 0) {
    want = 2 * ds.rows();  // default: twice the segment-sourced rows
  } else {
    want = static_cast<std::size_t>(n_random_neg);
  }
  if (want > 0) {
    // Pool of (video, frame) pairs from videos not labelled with the class.
    std::vector<std::pair<const VideoRecord*, std::uint32_t>> pool;
    for (const VideoRecord& v : corpus) {
      if (v.video_labels.count(class_id)) continue;
      for (std::uint32_t t = 0; t < v.frames; ++t) pool.emplace_back(&v, t);
    }
    if (pool.empty()) {
      throw DataError("build_frame_dataset: class " + std::to_string(class_id) +
                      ": no eligible negative videos to sample from");
    }
    Rng rng(derive_seed(seed, 0x6E6567ull * 0x10001ull + class_id));
    if (want <= pool.size()) {
      // Partial Fisher-Yates: first `want` entries become the sample.
      for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        add_row(*pool[i].first, pool[i].second, 0, RowSource::random_negative);
      }
    } else {
      warn("build_frame_dataset: class " + std::to_string(class_id) +
           ": negative pool has " + std::to_string(pool.size()) + " frames, " +
           std::to_string(want) + " requested; sampling with replacement");
      for (std::size_t i = 0; i < want; ++i) {
        const auto& pick = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        add_row(*pick.first, pick.second, 0, RowSource::random_negative);
      }
    }
  }
  return ds;
}

void write_frame_dataset_csv(const FrameDataset& dataset,
                             const std::filesystem::path& file) {
  std::string csv = "target,source,video_id";
  for (std::uint32_t d = 0; d < dataset.feature_dim; ++d) {
    csv += ",f" + std::to_string(d);
  }
  csv += "\n";
  static const char* kSourceNames[] = {"segment_positive", "segment_negative",
                                       "random_negative"};
  for (std::size_t i = 0; i < dataset.rows(); ++i) {
    csv += std::to_string(int(dataset.targets[i]));
    csv += ",";
    csv += kSourceNames[static_cast<int>(dataset.sources[i])];
    csv += "," + dataset.video_ids[i];
    for (const double v : dataset.row(i)) {
      csv += "," + format_double(v);
    }
    csv += "\n";
  }
  write_text_file(file, csv);
}

}  // namespace segloc
