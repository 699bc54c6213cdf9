#pragma once

#include <filesystem>
#include <vector>

#include "segloc/types.hpp"

namespace segloc {

// Corpus directory layout:
//   corpus.meta        key=value: format_version, D, C, n_videos, seed
//   features.bin       "SGF1", then per video: u32 id-length, id bytes,
//                      u32 T, u32 D, T*D little-endian f32
//   video_labels.csv   video_id,classes (space-delimited class ids)
//   segment_labels.csv video_id,start,class_id,polarity (1=positive)
//   truth.csv          video_id,frame,class_id (synthetic corpora only)

struct LoadedCorpus {
  CorpusConfig cfg;  // dim/classes/seed restored from corpus.meta
  std::vector<VideoRecord> videos;
  std::vector<SegmentLabel> labels;
};

void write_corpus(const std::vector<VideoRecord>& videos,
                  const std::vector<SegmentLabel>& labels,
                  const CorpusConfig& cfg,
                  const std::filesystem::path& dir);

LoadedCorpus read_corpus(const std::filesystem::path& dir);

void write_truth(const std::vector<TruthEntry>& truth, const std::filesystem::path& file);
std::vector<TruthEntry> read_truth(const std::filesystem::path& file);

// segment_labels.csv is also the interchange format for label subsets
// (train/eval splits, evaluation inputs).
void write_segment_labels(const std::vector<SegmentLabel>& labels,
                          const std::filesystem::path& file);
std::vector<SegmentLabel> read_segment_labels(const std::filesystem::path& file);

}  // namespace segloc
