#pragma once

#include <vector>

#include "segloc/types.hpp"

namespace segloc {

struct GeneratedCorpus {
  std::vector<VideoRecord> videos;
  std::vector<SegmentLabel> labels;   // the revealed (sparse) annotations
  std::vector<TruthEntry> truth;      // complete frame-level membership
};

void validate_corpus_config(const CorpusConfig& cfg);
void validate_synthetic_spec(const SyntheticSpec& spec, const CorpusConfig& cfg);

// Plants per-class events as disjoint 5-frame-aligned blocks, draws event
// frames around a class prototype and background frames around zero, and
// reveals label_fraction of the planted segments (both polarities, only in
// videos positive for the class). Pure function of (spec, cfg).
GeneratedCorpus generate_synthetic(const SyntheticSpec& spec, const CorpusConfig& cfg);

// Element-wise arithmetic mean over the time dimension.
std::vector<double> mean_pool(const VideoRecord& video);

// Candidate segment starts for a video of `frames` frames: every multiple of
// `stride` with at least one frame. Tail segments may cover fewer than 5
// frames when stride and length misalign.
std::vector<std::uint32_t> segment_starts(std::uint32_t frames, std::uint32_t stride);

// Structural checks shared by the generator and the reader: dimensions,
// finiteness, class-id ranges, label references.
void validate_corpus(const std::vector<VideoRecord>& videos,
                     const std::vector<SegmentLabel>& labels,
                     const CorpusConfig& cfg);

}  // namespace segloc
