#include "segloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "segloc/composition.hpp"
#include "segloc/corpus.hpp"
#include "segloc/corpus_io.hpp"
#include "segloc/frame_dataset.hpp"
#include "segloc/metrics.hpp"
#include "segloc/rng.hpp"
#include "segloc/util.hpp"

namespace segloc {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint32_t> parse_hidden(const std::string& value,
                                        const std::string& key) {
  std::vector<std::uint32_t> out;
  for (const std::string& tok : split(value, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    out.push_back(parse_u32(t, key));
  }
  if (out.empty()) throw ConfigError(key + ": no hidden sizes given");
  return out;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError(key + ": expected 0/1/true/false, got '" + value + "'");
}

}  // namespace

void apply_config_override(PipelineConfig& cfg, const std::string& key,
                           const std::string& value) {
  const std::string ctx = "config key " + key;
  if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "corpus_dir") {
    cfg.corpus_dir = value;
  } else if (key == "corpus.d") {
    cfg.corpus.dim = parse_u32(value, ctx);
  } else if (key == "corpus.c") {
    cfg.corpus.classes = parse_u32(value, ctx);
  } else if (key == "corpus.max_frames") {
    cfg.corpus.max_frames = parse_u32(value, ctx);
  } else if (key == "corpus.seed") {
    cfg.corpus.rng_seed = parse_u64(value, ctx);
  } else if (key == "synth.n_videos") {
    cfg.synth.n_videos = parse_u32(value, ctx);
  } else if (key == "synth.frames_min") {
    cfg.synth.frames_min = parse_u32(value, ctx);
  } else if (key == "synth.frames_max") {
    cfg.synth.frames_max = parse_u32(value, ctx);
  } else if (key == "synth.classes_per_video") {
    cfg.synth.classes_per_video = parse_double(value, ctx);
  } else if (key == "synth.event_rate") {
    cfg.synth.event_rate = parse_double(value, ctx);
  } else if (key == "synth.label_fraction") {
    cfg.synth.label_fraction = parse_double(value, ctx);
  } else if (key == "synth.noise_sigma") {
    cfg.synth.noise_sigma = parse_double(value, ctx);
  } else if (key == "split.eval_fraction") {
    cfg.eval_fraction = parse_double(value, ctx);
  } else if (key == "split.seed") {
    cfg.split_seed = parse_u64(value, ctx);
  } else if (key == "video_model.hidden") {
    cfg.video_model.hidden_sizes = parse_hidden(value, ctx);
  } else if (key == "video_model.lr") {
    cfg.video_model.learning_rate = parse_double(value, ctx);
  } else if (key == "video_model.epochs") {
    cfg.video_model.epochs = parse_u32(value, ctx);
  } else if (key == "video_model.batch") {
    cfg.video_model.batch_size = parse_u32(value, ctx);
  } else if (key == "video_model.l2") {
    cfg.video_model.l2 = parse_double(value, ctx);
  } else if (key == "video_model.seed") {
    cfg.video_model.rng_seed = parse_u64(value, ctx);
  } else if (key == "frames.n_random_neg") {
    cfg.frames_random_neg = static_cast<std::int64_t>(parse_double(value, ctx));
  } else if (key == "frames.dump") {
    cfg.frames_dump = parse_bool(value, ctx);
  } else if (key == "frames.seed") {
    cfg.frames_seed = parse_u64(value, ctx);
  } else if (key == "gbt.n_trees") {
    cfg.gbt.n_trees = parse_u32(value, ctx);
  } else if (key == "gbt.max_depth") {
    cfg.gbt.max_depth = parse_u32(value, ctx);
  } else if (key == "gbt.eta") {
    cfg.gbt.learning_rate = parse_double(value, ctx);
  } else if (key == "gbt.lambda") {
    cfg.gbt.lambda_l2 = parse_double(value, ctx);
  } else if (key == "gbt.min_samples_leaf") {
    cfg.gbt.min_samples_leaf = parse_u32(value, ctx);
  } else if (key == "gbt.subsample") {
    cfg.gbt.subsample = parse_double(value, ctx);
  } else if (key == "gbt.seed") {
    cfg.gbt.rng_seed = parse_u64(value, ctx);
  } else if (key == "localizer.hidden") {
    cfg.localizer.hidden_sizes = parse_hidden(value, ctx);
  } else if (key == "localizer.embed") {
    cfg.localizer_embed = parse_u32(value, ctx);
  } else if (key == "localizer.lr") {
    cfg.localizer.learning_rate = parse_double(value, ctx);
  } else if (key == "localizer.epochs") {
    cfg.localizer.epochs = parse_u32(value, ctx);
  } else if (key == "localizer.l2") {
    cfg.localizer.l2 = parse_double(value, ctx);
  } else if (key == "localizer.seed") {
    cfg.localizer.rng_seed = parse_u64(value, ctx);
  } else if (key == "compose.p") {
    cfg.compose_p = parse_double(value, ctx);
    if (!(cfg.compose_p > 0.0)) throw ConfigError("compose.p must be > 0");
  } else if (key == "k") {
    cfg.top_k = parse_u64(value, ctx);
    if (cfg.top_k < 1) throw ConfigError("k must be >= 1");
  } else if (key == "stride") {
    cfg.stride = parse_u32(value, ctx);
    if (cfg.stride < 1) throw ConfigError("stride must be >= 1");
  } else if (key == "jobs") {
    cfg.jobs = parse_u32(value, ctx);
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

PipelineConfig load_pipeline_config(const fs::path& file) {
  PipelineConfig cfg;
  std::istringstream in(read_text_file(file));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + t + "'");
    }
    apply_config_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

namespace {

// ---------------------------------------------------------------------------
// Stage plumbing. Stages talk to each other only through files, so a resumed
// run and a fresh run see bit-identical inputs.
// ---------------------------------------------------------------------------

struct Paths {
  fs::path corpus_dir;
  fs::path split_train, split_eval;
  fs::path video_model;
  fs::path video_scores;
  fs::path baseline_scores, baseline_submission;
  fs::path frames_manifest, frames_dir;
  fs::path gbt_dir, trained_classes;
  fs::path xgb_frame_scores;
  fs::path composed_scores, composed_submission;
  fs::path localizer_model;
  fs::path localizer_score_file;
  fs::path combined_scores, combined_submission;
  fs::path final_submission;
  fs::path report, metrics;

  explicit Paths(const PipelineConfig& cfg) {
    const fs::path& out = cfg.out_dir;
    corpus_dir = cfg.corpus_dir.empty() ? out / "corpus" : cfg.corpus_dir;
    split_train = out / "split_train.csv";
    split_eval = out / "split_eval.csv";
    video_model = out / "video_model.bin";
    video_scores = out / "video_scores.csv";
    baseline_scores = out / "baseline_scores.csv";
    baseline_submission = out / "baseline_submission.csv";
    frames_manifest = out / "frames_manifest.txt";
    frames_dir = out / "frames";
    gbt_dir = out / "gbt";
    trained_classes = out / "gbt" / "trained_classes.txt";
    xgb_frame_scores = out / "xgb_frame_scores.csv";
    composed_scores = out / "composed_scores.csv";
    composed_submission = out / "composed_submission.csv";
    localizer_model = out / "localizer.bin";
    localizer_score_file = out / "localizer_scores.csv";
    combined_scores = out / "combined_scores.csv";
    combined_submission = out / "combined_submission.csv";
    final_submission = out / "final_submission.csv";
    report = out / "report.txt";
    metrics = out / "metrics.csv";
  }
};

template <class Fn>
void run_stage(const PipelineConfig& cfg, const std::string& name,
               const std::vector<fs::path>& artifacts, Fn&& fn) {
  if (cfg.resume && !artifacts.empty()) {
    bool complete = true;
    for (const fs::path& a : artifacts) {
      if (!fs::exists(a)) complete = false;
    }
    if (complete) {
      std::cout << "[run-all] stage " << name << ": up to date, skipped\n";
      return;
    }
  }
  std::cout << "[run-all] stage " << name << "\n";
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("stage " + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + name + ": " + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError("stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError("stage " + name + ": " + std::string(e.what()));
  }
}

std::set<std::string> video_ids_of(const std::vector<SegmentLabel>& labels) {
  std::set<std::string> out;
  for (const SegmentLabel& l : labels) out.insert(l.video_id);
  return out;
}

// Videos whose labels were held out never participate in training.
std::vector<VideoRecord> training_videos(const std::vector<VideoRecord>& all,
                                         const std::set<std::string>& eval_videos) {
  std::vector<VideoRecord> out;
  for (const VideoRecord& v : all) {
    if (!eval_videos.count(v.video_id)) out.push_back(v);
  }
  return out;
}

std::vector<std::uint32_t> read_class_list(const fs::path& file) {
  std::vector<std::uint32_t> out;
  std::istringstream in(read_text_file(file));
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.push_back(parse_u32(t, file.string()));
  }
  return out;
}

// Builds the frame dataset for one class or explains why it cannot be
// trained. Never throws for per-class data shortages.
struct ClassDataset {
  bool ok = false;
  std::string reason;
  FrameDataset dataset;
};

ClassDataset try_build_dataset(std::uint32_t class_id,
                               const std::vector<SegmentLabel>& train_labels,
                               const std::vector<VideoRecord>& train_corpus,
                               const MlpModel& fl_model,
                               const PipelineConfig& cfg) {
  ClassDataset out;
  try {
    out.dataset = build_frame_dataset(class_id, train_labels, train_corpus, fl_model,
                                      cfg.frames_random_neg, cfg.frames_seed);
    if (out.dataset.rows() < 10) {
      out.reason = "fewer than 10 rows";
      return out;
    }
    std::size_t n_pos = 0;
    for (const std::uint8_t t : out.dataset.targets) n_pos += t;
    if (n_pos < 2 || out.dataset.rows() - n_pos < 2) {
      out.reason = "fewer than 2 rows of one class";
      return out;
    }
    out.ok = true;
  } catch (const DataError& e) {
    out.reason = e.what();
  }
  return out;
}

// Segment-level composition from the frame-level GBT table and the video
// prior table: per segment, mean over frames of xgb^p, times vl. Enumerates
// segments from the frame table itself (it covers every frame of a video).
ScoreTable compose_from_tables(const ScoreTable& frame_table,
                               const ScoreTable& video_table, double p,
                               std::uint32_t stride) {
  struct VideoClass {
    std::vector<double> probs;  // indexed by frame
  };
  std::map<std::pair<std::string, std::uint32_t>, VideoClass> grouped;
  std::map<std::string, std::uint32_t> frames_of;
  for (const auto& [key, score] : frame_table.entries) {
    auto& vc = grouped[{key.video_id, key.class_id}];
    if (vc.probs.size() <= key.start) vc.probs.resize(key.start + 1, -1.0);
    vc.probs[key.start] = score;
    frames_of[key.video_id] = std::max(frames_of[key.video_id], key.start + 1);
  }

  ScoreTable out;
  out.provenance = "composed(p=" + format_double(p) + ")";
  std::vector<double> window;
  for (auto& [vc_key, vc] : grouped) {
    const auto& [video_id, class_id] = vc_key;
    const std::uint32_t frames = frames_of[video_id];
    vc.probs.resize(frames, -1.0);
    const auto vl_it = video_table.entries.find({video_id, 0, class_id});
    if (vl_it == video_table.entries.end()) {
      throw DataError("compose: video table missing ('" + video_id + "', class " +
                      std::to_string(class_id) + ")");
    }
    for (const std::uint32_t start : segment_starts(frames, stride)) {
      const std::uint32_t end = std::min<std::uint32_t>(start + kSegmentLen, frames);
      window.clear();
      for (std::uint32_t t = start; t < end; ++t) {
        if (vc.probs[t] < 0.0) {
          throw DataError("compose: frame table missing ('" + video_id + "', frame " +
                          std::to_string(t) + ", class " + std::to_string(class_id) +
                          ")");
        }
        window.push_back(vc.probs[t]);
      }
      out.entries[{video_id, start, class_id}] = segment_score(window, vl_it->second, p);
    }
  }
  return out;
}

// Classes the GBT stage could not train keep their baseline ordering, so
// every downstream table still covers the full class set.
void inject_baseline_for_missing_classes(ScoreTable& table,
                                         const ScoreTable& baseline_table) {
  std::set<std::uint32_t> have;
  for (const auto& [key, score] : table.entries) have.insert(key.class_id);
  std::size_t injected = 0;
  for (const auto& [key, score] : baseline_table.entries) {
    if (have.count(key.class_id)) continue;
    table.entries[key] = score;
    ++injected;
  }
  if (injected > 0) {
    warn("composition: " + std::to_string(injected) +
         " baseline entries injected for untrained classes");
  }
}

ScoreTable restrict_to_classes(const ScoreTable& table,
                               const std::set<std::uint32_t>& classes) {
  ScoreTable out;
  out.provenance = table.provenance;
  for (const auto& [key, score] : table.entries) {
    if (classes.count(key.class_id)) out.entries[key] = score;
  }
  return out;
}

}  // namespace

std::string metrics_csv_text(const MapResult& result) {
  std::string csv = "class_id,n_pos,ap\n";
  for (const auto& [class_id, ap] : result.per_class) {
    csv += std::to_string(class_id) + "," + std::to_string(ap.n_pos) + "," +
           format_double(ap.ap) + "\n";
  }
  return csv;
}

std::string evaluation_report_text(const MapResult& result, std::size_t k_limit) {
  char buf[160];
  std::string text;
  std::snprintf(buf, sizeof(buf), "MAP@%zu = %.6f over %zu classes\n", k_limit,
                result.map, result.per_class.size());
  text += buf;
  std::snprintf(buf, sizeof(buf), "classes without labelled positives: %zu (excluded)\n",
                result.skipped_classes);
  text += buf;
  for (const auto& [class_id, ap] : result.per_class) {
    std::snprintf(buf, sizeof(buf), "class %u: n_pos=%zu ap=%.6f\n", class_id,
                  ap.n_pos, ap.ap);
    text += buf;
  }
  return text;
}

RunReport run_all(const PipelineConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("run_all: out_dir is required");
  fs::create_directories(cfg.out_dir);
  const Paths paths(cfg);

  // -- corpus ---------------------------------------------------------------
  run_stage(cfg, "corpus", {paths.corpus_dir / "corpus.meta"}, [&] {
    if (!cfg.corpus_dir.empty()) {
      if (!fs::exists(cfg.corpus_dir / "corpus.meta")) {
        throw DataError("corpus_dir has no corpus.meta: " + cfg.corpus_dir.string());
      }
      return;
    }
    const GeneratedCorpus gen = generate_synthetic(cfg.synth, cfg.corpus);
    write_corpus(gen.videos, gen.labels, cfg.corpus, paths.corpus_dir);
    write_truth(gen.truth, paths.corpus_dir / "truth.csv");
  });

  // -- split ----------------------------------------------------------------
  run_stage(cfg, "split", {paths.split_train, paths.split_eval}, [&] {
    if (!(cfg.eval_fraction >= 0.0 && cfg.eval_fraction < 1.0)) {
      throw ConfigError("split.eval_fraction must be in [0,1)");
    }
    const auto labels = read_segment_labels(paths.corpus_dir / "segment_labels.csv");
    std::vector<std::string> videos(video_ids_of(labels).begin(),
                                    video_ids_of(labels).end());
    Rng rng(derive_seed(cfg.split_seed, 0x73706C6974ull));
    rng.shuffle(videos);
    std::size_t n_eval = static_cast<std::size_t>(
        std::llround(cfg.eval_fraction * double(videos.size())));
    if (cfg.eval_fraction > 0.0 && !videos.empty()) {
      n_eval = std::max<std::size_t>(n_eval, 1);
    }
    const std::set<std::string> eval_videos(videos.begin(), videos.begin() + n_eval);
    std::vector<SegmentLabel> train, eval;
    for (const SegmentLabel& l : labels) {
      (eval_videos.count(l.video_id) ? eval : train).push_back(l);
    }
    write_segment_labels(train, paths.split_train);
    write_segment_labels(eval, paths.split_eval);
  });

  // -- video model ----------------------------------------------------------
  run_stage(cfg, "video-model", {paths.video_model}, [&] {
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const auto eval_videos =
        video_ids_of(read_segment_labels(paths.split_eval));
    const auto train_corpus = training_videos(corpus.videos, eval_videos);
    if (train_corpus.empty()) {
      throw DataError("no training videos left after the split");
    }
    const MlpModel model =
        train_video_model(train_corpus, cfg.video_model, corpus.cfg.classes);
    save_mlp(model, paths.video_model);
  });

  // -- video scores ---------------------------------------------------------
  run_stage(cfg, "video-scores", {paths.video_scores}, [&] {
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const MlpModel model = load_mlp(paths.video_model);
    ScoreTable table;
    table.provenance = "video_model";
    for (const VideoRecord& v : corpus.videos) {
      const std::vector<double> probs = predict_video(model, mean_pool(v));
      for (std::uint32_t c = 0; c < corpus.cfg.classes; ++c) {
        table.entries[{v.video_id, 0, c}] = probs[c];
      }
    }
    write_score_table(table, paths.video_scores);
  });

  // -- baseline -------------------------------------------------------------
  run_stage(cfg, "baseline", {paths.baseline_scores, paths.baseline_submission}, [&] {
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const ScoreTable video_table = read_score_table(paths.video_scores, "video_model");
    const ScoreTable table = baseline_scores(video_table, corpus.videos, cfg.stride);
    write_score_table(table, paths.baseline_scores);
    write_submission(to_submission(table, cfg.top_k, cfg.stride),
                     paths.baseline_submission);
  });

  // -- frame datasets -------------------------------------------------------
  run_stage(cfg, "build-frames", {paths.frames_manifest}, [&] {
    const auto train_labels = read_segment_labels(paths.split_train);
    if (train_labels.empty()) {
      throw DataError("no labelled segments in the training split");
    }
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const auto eval_videos = video_ids_of(read_segment_labels(paths.split_eval));
    const auto train_corpus = training_videos(corpus.videos, eval_videos);
    const MlpModel fl_model = load_mlp(paths.video_model);

    if (cfg.frames_dump) fs::create_directories(paths.frames_dir);
    std::string manifest = "# class_id status rows positives\n";
    for (std::uint32_t c = 0; c < corpus.cfg.classes; ++c) {
      const ClassDataset built =
          try_build_dataset(c, train_labels, train_corpus, fl_model, cfg);
      if (!built.ok) {
        manifest += std::to_string(c) + " skipped 0 0 # " + built.reason + "\n";
        warn("build-frames: class " + std::to_string(c) + " skipped: " + built.reason);
        continue;
      }
      std::size_t n_pos = 0;
      for (const std::uint8_t t : built.dataset.targets) n_pos += t;
      manifest += std::to_string(c) + " ok " + std::to_string(built.dataset.rows()) +
                  " " + std::to_string(n_pos) + "\n";
      if (cfg.frames_dump) {
        write_frame_dataset_csv(built.dataset,
                                paths.frames_dir /
                                    ("frames_class" + std::to_string(c) + ".csv"));
      }
    }
    write_text_file(paths.frames_manifest, manifest);
  });

  // -- GBT training ---------------------------------------------------------
  run_stage(cfg, "train-gbt", {paths.trained_classes}, [&] {
    const auto train_labels = read_segment_labels(paths.split_train);
    if (train_labels.empty()) {
      throw DataError("no labelled segments in the training split");
    }
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const auto eval_videos = video_ids_of(read_segment_labels(paths.split_eval));
    const auto train_corpus = training_videos(corpus.videos, eval_videos);
    const MlpModel fl_model = load_mlp(paths.video_model);
    fs::create_directories(paths.gbt_dir);

    const std::uint32_t n_classes = corpus.cfg.classes;
    std::vector<std::string> status(n_classes);
    parallel_for(n_classes, cfg.jobs, [&](std::size_t c32) {
      const std::uint32_t c = static_cast<std::uint32_t>(c32);
      const ClassDataset built =
          try_build_dataset(c, train_labels, train_corpus, fl_model, cfg);
      if (!built.ok) {
        status[c] = "skip:" + built.reason;
        return;
      }
      GbtConfig class_cfg = cfg.gbt;
      class_cfg.rng_seed = derive_seed(cfg.gbt.rng_seed, 0x636C617373ull + c);
      try {
        const FoldEnsemble ens = fit_cv(built.dataset, class_cfg);
        save_fold_ensemble(ens, class_cfg,
                           paths.gbt_dir / ("class_" + std::to_string(c) + ".bin"));
        status[c] = "ok";
      } catch (const DataError& e) {
        status[c] = std::string("skip:") + e.what();
      }
    });

    std::string listing;
    std::size_t trained = 0;
    for (std::uint32_t c = 0; c < n_classes; ++c) {
      if (status[c] == "ok") {
        listing += std::to_string(c) + "\n";
        ++trained;
      } else {
        warn("train-gbt: class " + std::to_string(c) + " " + status[c]);
      }
    }
    if (trained == 0) throw DataError("no class could be trained");
    write_text_file(paths.trained_classes, listing);
  });

  // -- frame-level GBT scores -----------------------------------------------
  run_stage(cfg, "xgb-frame-scores", {paths.xgb_frame_scores}, [&] {
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const MlpModel fl_model = load_mlp(paths.video_model);
    const std::vector<std::uint32_t> classes = read_class_list(paths.trained_classes);
    std::vector<FoldEnsemble> ensembles;
    for (const std::uint32_t c : classes) {
      ensembles.push_back(load_fold_ensemble(
          paths.gbt_dir / ("class_" + std::to_string(c) + ".bin")));
    }

    using Entry = std::pair<ScoreKey, double>;
    std::vector<std::vector<Entry>> per_video(corpus.videos.size());
    parallel_for(corpus.videos.size(), cfg.jobs, [&](std::size_t i) {
      const VideoRecord& v = corpus.videos[i];
      std::vector<Entry>& out = per_video[i];
      std::vector<double> augmented(v.dim + fl_model.output_dim);
      for (std::uint32_t t = 0; t < v.frames; ++t) {
        const float* raw = v.frame(t);
        for (std::uint32_t d = 0; d < v.dim; ++d) augmented[d] = raw[d];
        const std::vector<double> fl = predict_frame(fl_model, raw, v.dim);
        std::copy(fl.begin(), fl.end(), augmented.begin() + v.dim);
        for (std::size_t e = 0; e < ensembles.size(); ++e) {
          out.push_back({{v.video_id, t, classes[e]},
                         predict_cv(ensembles[e], augmented)});
        }
      }
    });
    ScoreTable table;
    table.provenance = "xgb_frames";
    for (auto& entries : per_video) {
      for (auto& [key, score] : entries) table.entries[std::move(key)] = score;
    }
    write_score_table(table, paths.xgb_frame_scores);
  });

  // -- composition ----------------------------------------------------------
  run_stage(cfg, "compose", {paths.composed_scores, paths.composed_submission}, [&] {
    const ScoreTable frame_table =
        read_score_table(paths.xgb_frame_scores, "xgb_frames");
    const ScoreTable video_table = read_score_table(paths.video_scores, "video_model");
    ScoreTable composed =
        compose_from_tables(frame_table, video_table, cfg.compose_p, cfg.stride);
    inject_baseline_for_missing_classes(
        composed, read_score_table(paths.baseline_scores, "baseline"));
    write_score_table(composed, paths.composed_scores);
    write_submission(to_submission(composed, cfg.top_k, cfg.stride),
                     paths.composed_submission);
  });

  // -- localizer ------------------------------------------------------------
  run_stage(cfg, "train-localizer", {paths.localizer_model}, [&] {
    const auto train_labels = read_segment_labels(paths.split_train);
    if (train_labels.empty()) {
      throw DataError("no labelled segments in the training split");
    }
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const LocalizerModel model =
        train_localizer(corpus.videos, train_labels, cfg.localizer,
                        corpus.cfg.classes, cfg.localizer_embed);
    save_localizer(model, paths.localizer_model);
  });

  run_stage(cfg, "localizer-scores", {paths.localizer_score_file}, [&] {
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    const LocalizerModel model = load_localizer(paths.localizer_model);
    const std::vector<std::uint32_t> classes = read_class_list(paths.trained_classes);
    const ScoreTable table =
        localizer_scores(model, corpus.videos, cfg.stride, classes, cfg.jobs);
    write_score_table(table, paths.localizer_score_file);
  });

  // -- combination (video prior x localizer) ---------------------------------
  run_stage(cfg, "combine", {paths.combined_scores, paths.combined_submission}, [&] {
    const ScoreTable baseline_table =
        read_score_table(paths.baseline_scores, "baseline");
    const ScoreTable localizer_table =
        read_score_table(paths.localizer_score_file, "localizer");
    std::set<std::uint32_t> loc_classes;
    for (const auto& [key, score] : localizer_table.entries) {
      loc_classes.insert(key.class_id);
    }
    const ScoreTable video_part = restrict_to_classes(baseline_table, loc_classes);
    ScoreTable combined =
        geometric_combine({{&video_part, 1.0}, {&localizer_table, 1.0}});
    inject_baseline_for_missing_classes(combined, baseline_table);
    write_score_table(combined, paths.combined_scores);
    write_submission(to_submission(combined, cfg.top_k, cfg.stride),
                     paths.combined_submission);
  });

  // -- rank average ---------------------------------------------------------
  run_stage(cfg, "rank-average", {paths.final_submission}, [&] {
    const ScoreTable composed = read_score_table(paths.composed_scores, "composed");
    const ScoreTable combined = read_score_table(paths.combined_scores, "combined");
    write_submission(rank_average({&composed, &combined}, cfg.top_k),
                     paths.final_submission);
  });

  // -- evaluation report ------------------------------------------------------
  RunReport report;
  report.report_file = paths.report;
  report.final_submission = paths.final_submission;
  run_stage(cfg, "report", {}, [&] {
    const auto eval_labels = read_segment_labels(paths.split_eval);
    if (eval_labels.empty()) {
      throw DataError("no labelled segments in the evaluation split");
    }
    const GroundTruth truth = GroundTruth::from_labels(eval_labels);

    const std::vector<std::pair<std::string, fs::path>> models = {
        {"baseline", paths.baseline_submission},
        {"gbt_composed", paths.composed_submission},
        {"localizer_combined", paths.combined_submission},
        {"rank_average", paths.final_submission},
    };
    MapResult final_result;
    char buf[160];
    std::string text = "segment localization report\n";
    const LoadedCorpus corpus = read_corpus(paths.corpus_dir);
    std::snprintf(buf, sizeof(buf), "corpus: %s (videos=%zu D=%u C=%u)\n",
                  paths.corpus_dir.string().c_str(), corpus.videos.size(),
                  corpus.cfg.dim, corpus.cfg.classes);
    text += buf;
    std::size_t n_pos = 0, n_neg = 0;
    for (const SegmentLabel& l : eval_labels) {
      (l.polarity == Polarity::positive ? n_pos : n_neg) += 1;
    }
    std::snprintf(buf, sizeof(buf),
                  "eval split: %zu videos, %zu positive / %zu negative labels\n",
                  video_ids_of(eval_labels).size(), n_pos, n_neg);
    text += buf;
    const auto trained = read_class_list(paths.trained_classes);
    std::snprintf(buf, sizeof(buf), "trained classes: %zu of %u\n", trained.size(),
                  corpus.cfg.classes);
    text += buf;
    std::snprintf(buf, sizeof(buf), "compose p=%g  K=%zu  stride=%u\n\n",
                  cfg.compose_p, cfg.top_k, cfg.stride);
    text += buf;
    std::snprintf(buf, sizeof(buf), "%-22s %s\n", "model", "held-out MAP");
    text += buf;
    for (const auto& [name, file] : models) {
      const MapResult r = map_at_k(read_submission(file), truth, cfg.top_k);
      report.maps[name] = r.map;
      std::snprintf(buf, sizeof(buf), "%-22s %.6f\n", name.c_str(), r.map);
      text += buf;
      if (name == "rank_average") final_result = r;
    }
    std::snprintf(buf, sizeof(buf), "\nclasses scored: %zu, excluded (no positives): %zu\n",
                  final_result.per_class.size(), final_result.skipped_classes);
    text += buf;
    write_text_file(paths.report, text);
    write_text_file(paths.metrics, metrics_csv_text(final_result));
  });

  return report;
}

std::vector<GridPoint> grid_search_p(const PipelineConfig& cfg,
                                     const std::vector<double>& p_values) {
  if (p_values.empty()) throw ConfigError("grid_search_p: empty grid");
  const Paths paths(cfg);
  for (const fs::path& need :
       {paths.xgb_frame_scores, paths.video_scores, paths.baseline_scores,
        paths.split_eval}) {
    if (!fs::exists(need)) {
      throw DataError("grid_search_p: missing artifact " + need.string() +
                      " (run the pipeline first)");
    }
  }

  const std::vector<std::pair<std::string, fs::path>> upstream = {
      {"xgb_frame_scores.csv", paths.xgb_frame_scores},
      {"video_scores.csv", paths.video_scores},
      {"baseline_scores.csv", paths.baseline_scores},
      {"split_eval.csv", paths.split_eval},
  };
  std::vector<std::uint64_t> initial_hashes;
  for (const auto& [name, file] : upstream) {
    initial_hashes.push_back(fnv1a64_file(file));
  }

  const ScoreTable frame_table =
      read_score_table(paths.xgb_frame_scores, "xgb_frames");
  const ScoreTable video_table = read_score_table(paths.video_scores, "video_model");
  const ScoreTable baseline_table =
      read_score_table(paths.baseline_scores, "baseline");
  const GroundTruth truth =
      GroundTruth::from_labels(read_segment_labels(paths.split_eval));

  std::string report = "grid search over composition exponent p\n";
  report += "upstream artifacts (fnv1a64):\n";
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    report += "  " + upstream[i].first + " " + hex64(initial_hashes[i]) + "\n";
  }

  std::vector<GridPoint> out;
  std::string grid_csv = "p,map\n";
  for (const double p : p_values) {
    if (!(p > 0.0)) throw ConfigError("grid_search_p: p must be > 0");
    ScoreTable composed = compose_from_tables(frame_table, video_table, p, cfg.stride);
    inject_baseline_for_missing_classes(composed, baseline_table);
    const MapResult r =
        map_at_k(to_submission(composed, cfg.top_k, cfg.stride), truth, cfg.top_k);
    out.push_back({p, r.map});
    grid_csv += format_double(p) + "," + format_double(r.map) + "\n";

    // Prove nothing upstream moved: only the composition changed.
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      const std::uint64_t now = fnv1a64_file(upstream[i].second);
      if (now != initial_hashes[i]) {
        throw DataError("grid_search_p: upstream artifact changed during the grid: " +
                        upstream[i].first);
      }
    }
    report += "p=" + format_double(p) + " map=" + format_double(r.map) +
              " upstream_unchanged=yes\n";
  }
  write_text_file(cfg.out_dir / "grid_p.csv", grid_csv);
  write_text_file(cfg.out_dir / "grid_p_report.txt", report);
  return out;
}

}  // namespace segloc
