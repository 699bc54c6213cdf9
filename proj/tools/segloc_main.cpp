// Command-line front end for the segment localization pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segloc/composition.hpp"
#include "segloc/corpus.hpp"
#include "segloc/corpus_io.hpp"
#include "segloc/frame_dataset.hpp"
#include "segloc/gbt.hpp"
#include "segloc/localizer.hpp"
#include "segloc/metrics.hpp"
#include "segloc/mlp.hpp"
#include "segloc/pipeline.hpp"
#include "segloc/rng.hpp"
#include "segloc/util.hpp"

namespace fs = std::filesystem;
using namespace segloc;

namespace {

std::vector<std::uint32_t> parse_class_list(const std::string& spec,
                                            std::uint32_t n_classes) {
  std::vector<std::uint32_t> out;
  if (spec == "all") {
    for (std::uint32_t c = 0; c < n_classes; ++c) out.push_back(c);
    return out;
  }
  for (const std::string& tok : split(spec, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    const std::uint32_t c = parse_u32(t, "--classes");
    if (c >= n_classes) {
      throw ConfigError("--classes: class " + t + " >= C=" +
                        std::to_string(n_classes));
    }
    out.push_back(c);
  }
  if (out.empty()) throw ConfigError("--classes: empty class list");
  return out;
}

std::vector<double> parse_double_list(const std::string& spec, const char* what) {
  std::vector<double> out;
  for (const std::string& tok : split(spec, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    out.push_back(parse_double(t, what));
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::set<std::string> read_id_file(const fs::path& file) {
  std::set<std::string> out;
  std::istringstream in(read_text_file(file));
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (!t.empty()) out.insert(t);
  }
  return out;
}

PipelineConfig pipeline_config_from(const std::string& config_file,
                                    const std::vector<std::string>& overrides,
                                    const std::string& out_dir, bool resume,
                                    unsigned jobs) {
  PipelineConfig cfg;
  if (!config_file.empty()) cfg = load_pipeline_config(config_file);
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    apply_config_override(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (jobs > 0) cfg.jobs = jobs;
  cfg.resume = resume;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segloc: weakly-supervised temporal event localization pipeline"};
  app.require_subcommand(1);

  try {
    // -- gen-synth ------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("gen-synth", "Generate a synthetic corpus");
      auto out = std::make_shared<std::string>();
      auto spec = std::make_shared<SyntheticSpec>();
      auto corpus = std::make_shared<CorpusConfig>();
      cmd->add_option("--out", *out, "Corpus directory")->required();
      cmd->add_option("--n-videos", spec->n_videos, "Video count");
      cmd->add_option("--frames-min", spec->frames_min, "Min frames per video");
      cmd->add_option("--frames-max", spec->frames_max, "Max frames per video");
      cmd->add_option("--classes-per-video", spec->classes_per_video,
                      "Mean planted classes per video");
      cmd->add_option("--event-rate", spec->event_rate,
                      "Fraction of a positive video covered by events");
      cmd->add_option("--label-fraction", spec->label_fraction,
                      "Fraction of planted segments revealed");
      cmd->add_option("--noise-sigma", spec->noise_sigma, "Feature noise scale");
      cmd->add_option("--d", corpus->dim, "Feature dims");
      cmd->add_option("--c", corpus->classes, "Class count");
      cmd->add_option("--max-frames", corpus->max_frames, "Frame cap");
      cmd->add_option("--seed", corpus->rng_seed, "RNG seed");
      cmd->callback([=] {
        const GeneratedCorpus gen = generate_synthetic(*spec, *corpus);
        write_corpus(gen.videos, gen.labels, *corpus, *out);
        write_truth(gen.truth, fs::path(*out) / "truth.csv");
        std::cout << "wrote " << gen.videos.size() << " videos, "
                  << gen.labels.size() << " segment labels to " << *out << "\n";
      });
    }

    // -- train-video-model ------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("train-video-model",
                                     "Train the video-level MLP on mean-pooled features");
      auto corpus_dir = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto exclude = std::make_shared<std::string>();
      auto hidden = std::make_shared<std::string>("128");
      auto cfg = std::make_shared<TrainConfig>(TrainConfig{0.3, 32, 60, {128}, 0.0, 21});
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--out", *out, "Output model file")->required();
      cmd->add_option("--hidden", *hidden, "Hidden sizes, comma separated");
      cmd->add_option("--lr", cfg->learning_rate, "Learning rate");
      cmd->add_option("--epochs", cfg->epochs, "Epochs");
      cmd->add_option("--batch", cfg->batch_size, "Batch size");
      cmd->add_option("--l2", cfg->l2, "L2 strength");
      cmd->add_option("--seed", cfg->rng_seed, "RNG seed");
      cmd->add_option("--exclude-videos", *exclude,
                      "File of video ids to exclude from training");
      cmd->callback([=] {
        LoadedCorpus corpus = read_corpus(*corpus_dir);
        cfg->hidden_sizes.clear();
        for (const std::string& tok : split(*hidden, ',')) {
          if (!trim(tok).empty()) cfg->hidden_sizes.push_back(parse_u32(trim(tok), "--hidden"));
        }
        std::vector<VideoRecord> train = std::move(corpus.videos);
        if (!exclude->empty()) {
          const auto excluded = read_id_file(*exclude);
          std::erase_if(train, [&](const VideoRecord& v) {
            return excluded.count(v.video_id) > 0;
          });
        }
        const MlpModel model = train_video_model(train, *cfg, corpus.cfg.classes);
        save_mlp(model, *out);
        std::cout << "trained on " << train.size() << " videos -> " << *out << "\n";
      });
    }

    // -- predict-video ----------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("predict-video",
                                     "Per-video class probabilities (start=0 table)");
      auto corpus_dir = std::make_shared<std::string>();
      auto model_file = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--model", *model_file, "Video model file")->required();
      cmd->add_option("--out", *out, "Output score CSV")->required();
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const MlpModel model = load_mlp(*model_file);
        ScoreTable table;
        table.provenance = "video_model";
        for (const VideoRecord& v : corpus.videos) {
          const std::vector<double> probs = predict_video(model, mean_pool(v));
          for (std::uint32_t c = 0; c < corpus.cfg.classes; ++c) {
            table.entries[{v.video_id, 0, c}] = probs[c];
          }
        }
        write_score_table(table, *out);
      });
    }

    // -- baseline -----------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "baseline", "Broadcast video scores to all segments of each video");
      auto corpus_dir = std::make_shared<std::string>();
      auto video_scores_file = std::make_shared<std::string>();
      auto out_scores = std::make_shared<std::string>();
      auto out_submission = std::make_shared<std::string>();
      auto stride = std::make_shared<std::uint32_t>(5);
      auto k = std::make_shared<std::size_t>(100000);
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--video-scores", *video_scores_file, "Video score CSV")->required();
      cmd->add_option("--out-scores", *out_scores, "Output segment score CSV")->required();
      cmd->add_option("--out-submission", *out_submission, "Optional submission CSV");
      cmd->add_option("--stride", *stride, "Segment enumeration stride");
      cmd->add_option("--k", *k, "Submission truncation K");
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const ScoreTable video_table = read_score_table(*video_scores_file, "video_model");
        const ScoreTable table = baseline_scores(video_table, corpus.videos, *stride);
        write_score_table(table, *out_scores);
        if (!out_submission->empty()) {
          write_submission(to_submission(table, *k, *stride), *out_submission);
        }
      });
    }

    // -- build-frames ---------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "build-frames", "Dump per-class frame datasets (frames_class<k>.csv)");
      auto corpus_dir = std::make_shared<std::string>();
      auto labels_file = std::make_shared<std::string>();
      auto model_file = std::make_shared<std::string>();
      auto out_dir = std::make_shared<std::string>();
      auto classes = std::make_shared<std::string>("all");
      auto n_random_neg = std::make_shared<std::int64_t>(-1);
      auto seed = std::make_shared<std::uint64_t>(31);
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--labels", *labels_file, "Segment labels CSV")->required();
      cmd->add_option("--model", *model_file, "Video model (fl augmentation)")->required();
      cmd->add_option("--out-dir", *out_dir, "Output directory")->required();
      cmd->add_option("--classes", *classes, "all or comma-separated ids");
      cmd->add_option("--n-random-neg", *n_random_neg,
                      "Random negatives (-1: 2x segment rows)");
      cmd->add_option("--seed", *seed, "Sampling seed");
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const auto labels = read_segment_labels(*labels_file);
        const MlpModel model = load_mlp(*model_file);
        fs::create_directories(*out_dir);
        for (const std::uint32_t c : parse_class_list(*classes, corpus.cfg.classes)) {
          const FrameDataset ds = build_frame_dataset(c, labels, corpus.videos, model,
                                                      *n_random_neg, *seed);
          write_frame_dataset_csv(
              ds, fs::path(*out_dir) / ("frames_class" + std::to_string(c) + ".csv"));
          std::cout << "class " << c << ": " << ds.rows() << " rows\n";
        }
      });
    }

    // -- train-gbt --------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "train-gbt", "Train 5-fold GBT ensembles per class on frame datasets");
      auto corpus_dir = std::make_shared<std::string>();
      auto labels_file = std::make_shared<std::string>();
      auto model_file = std::make_shared<std::string>();
      auto out_dir = std::make_shared<std::string>();
      auto classes = std::make_shared<std::string>("all");
      auto n_random_neg = std::make_shared<std::int64_t>(-1);
      auto frames_seed = std::make_shared<std::uint64_t>(31);
      auto jobs = std::make_shared<unsigned>(1);
      auto gbt_cfg = std::make_shared<GbtConfig>();
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--labels", *labels_file, "Segment labels CSV")->required();
      cmd->add_option("--model", *model_file, "Video model (fl augmentation)")->required();
      cmd->add_option("--out-dir", *out_dir, "Output directory")->required();
      cmd->add_option("--classes", *classes, "all or comma-separated ids");
      cmd->add_option("--n-random-neg", *n_random_neg, "Random negatives");
      cmd->add_option("--frames-seed", *frames_seed, "Frame sampling seed");
      cmd->add_option("--n-trees", gbt_cfg->n_trees, "Boosting rounds");
      cmd->add_option("--max-depth", gbt_cfg->max_depth, "Tree depth cap");
      cmd->add_option("--eta", gbt_cfg->learning_rate, "Shrinkage");
      cmd->add_option("--lambda", gbt_cfg->lambda_l2, "Leaf L2");
      cmd->add_option("--min-samples-leaf", gbt_cfg->min_samples_leaf, "Leaf size floor");
      cmd->add_option("--subsample", gbt_cfg->subsample, "Row fraction per round");
      cmd->add_option("--seed", gbt_cfg->rng_seed, "RNG seed");
      cmd->add_option("--jobs", *jobs, "Worker threads");
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const auto labels = read_segment_labels(*labels_file);
        const MlpModel model = load_mlp(*model_file);
        fs::create_directories(*out_dir);
        const auto wanted = parse_class_list(*classes, corpus.cfg.classes);
        std::vector<std::string> status(wanted.size());
        parallel_for(wanted.size(), *jobs, [&](std::size_t i) {
          const std::uint32_t c = wanted[i];
          GbtConfig class_cfg = *gbt_cfg;
          class_cfg.rng_seed = derive_seed(gbt_cfg->rng_seed, 0x636C617373ull + c);
          try {
            const FrameDataset ds = build_frame_dataset(c, labels, corpus.videos,
                                                        model, *n_random_neg,
                                                        *frames_seed);
            const FoldEnsemble ens = fit_cv(ds, class_cfg);
            save_fold_ensemble(
                ens, class_cfg,
                fs::path(*out_dir) / ("class_" + std::to_string(c) + ".bin"));
            status[i] = "ok";
          } catch (const DataError& e) {
            status[i] = std::string("skip: ") + e.what();
          }
        });
        std::string listing;
        for (std::size_t i = 0; i < wanted.size(); ++i) {
          if (status[i] == "ok") {
            listing += std::to_string(wanted[i]) + "\n";
          } else {
            warn("train-gbt: class " + std::to_string(wanted[i]) + " " + status[i]);
          }
        }
        write_text_file(fs::path(*out_dir) / "trained_classes.txt", listing);
      });
    }

    // -- xgb-frame-scores ------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "xgb-frame-scores", "Per-frame fold-averaged GBT probabilities");
      auto corpus_dir = std::make_shared<std::string>();
      auto model_file = std::make_shared<std::string>();
      auto gbt_dir = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto jobs = std::make_shared<unsigned>(1);
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--model", *model_file, "Video model")->required();
      cmd->add_option("--gbt-dir", *gbt_dir, "Directory of class_<c>.bin files")->required();
      cmd->add_option("--out", *out, "Output frame-level score CSV")->required();
      cmd->add_option("--jobs", *jobs, "Worker threads");
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const MlpModel model = load_mlp(*model_file);
        std::vector<std::uint32_t> classes;
        std::istringstream in(read_text_file(fs::path(*gbt_dir) / "trained_classes.txt"));
        std::string line;
        while (std::getline(in, line)) {
          if (!trim(line).empty()) classes.push_back(parse_u32(trim(line), "trained_classes"));
        }
        std::vector<FoldEnsemble> ensembles;
        for (const std::uint32_t c : classes) {
          ensembles.push_back(load_fold_ensemble(
              fs::path(*gbt_dir) / ("class_" + std::to_string(c) + ".bin")));
        }
        using Entry = std::pair<ScoreKey, double>;
        std::vector<std::vector<Entry>> per_video(corpus.videos.size());
        parallel_for(corpus.videos.size(), *jobs, [&](std::size_t i) {
          const VideoRecord& v = corpus.videos[i];
          std::vector<double> augmented(v.dim + model.output_dim);
          for (std::uint32_t t = 0; t < v.frames; ++t) {
            const float* raw = v.frame(t);
            for (std::uint32_t d = 0; d < v.dim; ++d) augmented[d] = raw[d];
            const std::vector<double> fl = predict_frame(model, raw, v.dim);
            std::copy(fl.begin(), fl.end(), augmented.begin() + v.dim);
            for (std::size_t e = 0; e < ensembles.size(); ++e) {
              per_video[i].push_back(
                  {{v.video_id, t, classes[e]}, predict_cv(ensembles[e], augmented)});
            }
          }
        });
        ScoreTable table;
        table.provenance = "xgb_frames";
        for (auto& entries : per_video) {
          for (auto& [key, score] : entries) table.entries[std::move(key)] = score;
        }
        write_score_table(table, *out);
      });
    }

    // -- compose -----------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "compose", "Bayes composition: mean(xgb^p over 5 frames) * video prior");
      auto frame_scores = std::make_shared<std::string>();
      auto video_scores_file = std::make_shared<std::string>();
      auto out_scores = std::make_shared<std::string>();
      auto out_submission = std::make_shared<std::string>();
      auto p = std::make_shared<double>(4.0);
      auto stride = std::make_shared<std::uint32_t>(5);
      auto k = std::make_shared<std::size_t>(100000);
      cmd->add_option("--frame-scores", *frame_scores, "Frame-level GBT score CSV")->required();
      cmd->add_option("--video-scores", *video_scores_file, "Video score CSV")->required();
      cmd->add_option("--out-scores", *out_scores, "Output segment score CSV")->required();
      cmd->add_option("--out-submission", *out_submission, "Optional submission CSV");
      cmd->add_option("--p", *p, "Exponent weighting toward the frame model");
      cmd->add_option("--stride", *stride, "Segment enumeration stride");
      cmd->add_option("--k", *k, "Submission truncation K");
      cmd->callback([=] {
        const ScoreTable frame_table = read_score_table(*frame_scores, "xgb_frames");
        const ScoreTable video_table = read_score_table(*video_scores_file, "video_model");

        struct Window {
          std::vector<double> probs;
        };
        std::map<std::pair<std::string, std::uint32_t>, Window> grouped;
        std::map<std::string, std::uint32_t> frames_of;
        for (const auto& [key, score] : frame_table.entries) {
          auto& w = grouped[{key.video_id, key.class_id}];
          if (w.probs.size() <= key.start) w.probs.resize(key.start + 1, -1.0);
          w.probs[key.start] = score;
          frames_of[key.video_id] = std::max(frames_of[key.video_id], key.start + 1);
        }
        ScoreTable out_table;
        out_table.provenance = "composed";
        std::vector<double> window;
        for (auto& [vc, w] : grouped) {
          const std::uint32_t frames = frames_of[vc.first];
          w.probs.resize(frames, -1.0);
          const auto vl = video_table.entries.find({vc.first, 0, vc.second});
          if (vl == video_table.entries.end()) {
            throw DataError("compose: video table missing ('" + vc.first +
                            "', class " + std::to_string(vc.second) + ")");
          }
          for (const std::uint32_t start : segment_starts(frames, *stride)) {
            const std::uint32_t end =
                std::min<std::uint32_t>(start + kSegmentLen, frames);
            window.clear();
            for (std::uint32_t t = start; t < end; ++t) {
              if (w.probs[t] < 0.0) {
                throw DataError("compose: missing frame score ('" + vc.first +
                                "', frame " + std::to_string(t) + ")");
              }
              window.push_back(w.probs[t]);
            }
            out_table.entries[{vc.first, start, vc.second}] =
                segment_score(window, vl->second, *p);
          }
        }
        write_score_table(out_table, *out_scores);
        if (!out_submission->empty()) {
          write_submission(to_submission(out_table, *k, *stride), *out_submission);
        }
      });
    }

    // -- train-localizer ------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "train-localizer", "Train the bidirectional recurrent localization network");
      auto corpus_dir = std::make_shared<std::string>();
      auto labels_file = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto embed = std::make_shared<std::uint32_t>(32);
      auto hidden = std::make_shared<std::uint32_t>(64);
      auto cfg = std::make_shared<TrainConfig>(TrainConfig{0.02, 1, 12, {64}, 0.0, 51});
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--labels", *labels_file, "Segment labels CSV")->required();
      cmd->add_option("--out", *out, "Output model file")->required();
      cmd->add_option("--embed", *embed, "Class embedding dim");
      cmd->add_option("--hidden", *hidden, "Recurrent hidden size");
      cmd->add_option("--lr", cfg->learning_rate, "Learning rate");
      cmd->add_option("--epochs", cfg->epochs, "Epochs");
      cmd->add_option("--l2", cfg->l2, "Weight decay");
      cmd->add_option("--seed", cfg->rng_seed, "RNG seed");
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const auto labels = read_segment_labels(*labels_file);
        cfg->hidden_sizes = {*hidden};
        const LocalizerModel model = train_localizer(corpus.videos, labels, *cfg,
                                                     corpus.cfg.classes, *embed);
        save_localizer(model, *out);
      });
    }

    // -- localizer-scores -------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("localizer-scores",
                                     "Per-segment localizer probabilities");
      auto corpus_dir = std::make_shared<std::string>();
      auto model_file = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto stride = std::make_shared<std::uint32_t>(5);
      auto classes = std::make_shared<std::string>("from-labels");
      auto labels_file = std::make_shared<std::string>();
      auto jobs = std::make_shared<unsigned>(1);
      cmd->add_option("--corpus", *corpus_dir, "Corpus directory")->required();
      cmd->add_option("--model", *model_file, "Localizer model file")->required();
      cmd->add_option("--out", *out, "Output score CSV")->required();
      cmd->add_option("--stride", *stride, "Segment enumeration stride");
      cmd->add_option("--classes", *classes,
                      "all, comma-separated ids, or from-labels (default)");
      cmd->add_option("--labels", *labels_file, "Labels CSV for from-labels");
      cmd->add_option("--jobs", *jobs, "Worker threads");
      cmd->callback([=] {
        const LoadedCorpus corpus = read_corpus(*corpus_dir);
        const LocalizerModel model = load_localizer(*model_file);
        std::vector<std::uint32_t> class_list;
        if (*classes == "from-labels") {
          if (labels_file->empty()) {
            throw ConfigError("localizer-scores: --labels required for from-labels");
          }
          std::set<std::uint32_t> ids;
          for (const SegmentLabel& l : read_segment_labels(*labels_file)) {
            ids.insert(l.class_id);
          }
          class_list.assign(ids.begin(), ids.end());
        } else {
          class_list = parse_class_list(*classes, corpus.cfg.classes);
        }
        const ScoreTable table =
            localizer_scores(model, corpus.videos, *stride, class_list, *jobs);
        write_score_table(table, *out);
      });
    }

    // -- combine ------------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "combine", "Geometric (default) or arithmetic combination of score tables");
      auto spec_file = std::make_shared<std::string>();
      auto out_scores = std::make_shared<std::string>();
      auto out_submission = std::make_shared<std::string>();
      auto arithmetic = std::make_shared<bool>(false);
      auto stride = std::make_shared<std::uint32_t>(5);
      auto k = std::make_shared<std::size_t>(100000);
      cmd->add_option("--spec", *spec_file,
                      "Spec file: one '<score-csv> <exponent>' per line")->required();
      cmd->add_option("--out-scores", *out_scores, "Output score CSV")->required();
      cmd->add_option("--out-submission", *out_submission, "Optional submission CSV");
      cmd->add_flag("--arithmetic", *arithmetic, "Weighted mean instead of product");
      cmd->add_option("--stride", *stride, "Submission stride");
      cmd->add_option("--k", *k, "Submission truncation K");
      cmd->callback([=] {
        const CombinerSpecFile spec = parse_combiner_spec(*spec_file);
        std::vector<ScoreTable> tables;
        tables.reserve(spec.parts.size());
        for (const auto& [path, exponent] : spec.parts) {
          tables.push_back(read_score_table(path, path.string()));
        }
        std::vector<CombinerPart> parts;
        for (std::size_t i = 0; i < tables.size(); ++i) {
          parts.push_back({&tables[i], spec.parts[i].second});
        }
        const ScoreTable combined =
            *arithmetic ? arithmetic_combine(parts) : geometric_combine(parts);
        write_score_table(combined, *out_scores);
        if (!out_submission->empty()) {
          write_submission(to_submission(combined, *k, *stride), *out_submission);
        }
      });
    }

    // -- rank-average ----------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("rank-average",
                                     "Meta-ensemble by mean per-class rank");
      auto table_files = std::make_shared<std::vector<std::string>>();
      auto out = std::make_shared<std::string>();
      auto k = std::make_shared<std::size_t>(100000);
      cmd->add_option("tables", *table_files, "Score CSVs (>= 2)")->required()
          ->expected(-2);
      cmd->add_option("--out", *out, "Output submission CSV")->required();
      cmd->add_option("--k", *k, "Truncation K");
      cmd->callback([=] {
        std::vector<ScoreTable> tables;
        tables.reserve(table_files->size());
        for (const std::string& f : *table_files) {
          tables.push_back(read_score_table(f, f));
        }
        std::vector<const ScoreTable*> refs;
        for (const ScoreTable& t : tables) refs.push_back(&t);
        write_submission(rank_average(refs, *k), *out);
      });
    }

    // -- to-submission ----------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("to-submission",
                                     "Rank a score table into a submission CSV");
      auto scores = std::make_shared<std::string>();
      auto out = std::make_shared<std::string>();
      auto k = std::make_shared<std::size_t>(100000);
      auto stride = std::make_shared<std::uint32_t>(5);
      cmd->add_option("--scores", *scores, "Score CSV")->required();
      cmd->add_option("--out", *out, "Output submission CSV")->required();
      cmd->add_option("--k", *k, "Truncation K");
      cmd->add_option("--stride", *stride, "Keep starts that are multiples of this");
      cmd->callback([=] {
        const ScoreTable table = read_score_table(*scores, *scores);
        write_submission(to_submission(table, *k, *stride), *out);
      });
    }

    // -- evaluate ------------------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("evaluate", "MAP@K of a submission against labels");
      auto submission_file = std::make_shared<std::string>();
      auto labels_file = std::make_shared<std::string>();
      auto k = std::make_shared<std::size_t>(100000);
      auto out_metrics = std::make_shared<std::string>();
      auto out_report = std::make_shared<std::string>();
      cmd->add_option("--submission", *submission_file, "Submission CSV")->required();
      cmd->add_option("--labels", *labels_file, "Segment labels CSV")->required();
      cmd->add_option("--k", *k, "Truncation K");
      cmd->add_option("--out-metrics", *out_metrics, "metrics.csv path");
      cmd->add_option("--out-report", *out_report, "Text report path");
      cmd->callback([=] {
        const RankedSubmission submission = read_submission(*submission_file);
        const GroundTruth truth =
            GroundTruth::from_labels(read_segment_labels(*labels_file));
        const MapResult result = map_at_k(submission, truth, *k);
        const std::string report = evaluation_report_text(result, *k);
        std::cout << report;
        if (!out_metrics->empty()) {
          write_text_file(*out_metrics, metrics_csv_text(result));
        }
        if (!out_report->empty()) write_text_file(*out_report, report);
      });
    }

    // -- grid-p ---------------------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand(
          "grid-p", "Re-rank composed artifacts over a grid of exponents");
      auto config_file = std::make_shared<std::string>();
      auto overrides = std::make_shared<std::vector<std::string>>();
      auto out_dir = std::make_shared<std::string>();
      auto p_values = std::make_shared<std::string>("1,4");
      cmd->add_option("--config", *config_file, "Pipeline config file");
      cmd->add_option("--set", *overrides, "Config override key=value")->take_all();
      cmd->add_option("--out", *out_dir, "Pipeline output directory");
      cmd->add_option("--p-values", *p_values, "Comma-separated exponents");
      cmd->callback([=] {
        const PipelineConfig cfg =
            pipeline_config_from(*config_file, *overrides, *out_dir, false, 0);
        for (const GridPoint& point :
             grid_search_p(cfg, parse_double_list(*p_values, "--p-values"))) {
          std::printf("p=%-8g map=%.6f\n", point.p, point.map);
        }
      });
    }

    // -- run-all ---------------------------------------------------------------------------------
    {
      auto* cmd = app.add_subcommand("run-all", "Run the full pipeline");
      auto config_file = std::make_shared<std::string>();
      auto overrides = std::make_shared<std::vector<std::string>>();
      auto out_dir = std::make_shared<std::string>();
      auto resume = std::make_shared<bool>(false);
      auto jobs = std::make_shared<unsigned>(0);
      cmd->add_option("--config", *config_file, "Pipeline config file");
      cmd->add_option("--set", *overrides, "Config override key=value")->take_all();
      cmd->add_option("--out", *out_dir, "Output directory (overrides out_dir)");
      cmd->add_flag("--resume", *resume, "Skip stages whose artifacts exist");
      cmd->add_option("--jobs", *jobs, "Worker thread cap");
      cmd->callback([=] {
        const PipelineConfig cfg =
            pipeline_config_from(*config_file, *overrides, *out_dir, *resume, *jobs);
        const RunReport report = run_all(cfg);
        for (const auto& [name, map] : report.maps) {
          std::printf("%-22s %.6f\n", name.c_str(), map);
        }
        std::cout << "report: " << report.report_file.string() << "\n";
      });
    }

    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
