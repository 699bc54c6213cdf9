#include "segloc/composition.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "segloc/corpus.hpp"
#include "segloc/util.hpp"

namespace segloc {

namespace {

double floored(double score) { return std::max(score, kScoreFloor); }

void check_score(double score, const ScoreKey& key) {
  if (!std::isfinite(score) || score < 0.0) {
    throw DataError("score table: entry ('" + key.video_id + "'," +
                    std::to_string(key.start) + "," + std::to_string(key.class_id) +
                    ") has invalid score " + std::to_string(score));
  }
}

// Shared key set of all parts; warns when tables disagree.
std::vector<ScoreKey> common_keys(const std::vector<CombinerPart>& parts) {
  if (parts.empty()) throw ConfigError("combiner: at least one table required");
  for (const CombinerPart& p : parts) {
    if (p.table == nullptr) throw ConfigError("combiner: null table");
    if (!std::isfinite(p.exponent)) throw ConfigError("combiner: non-finite exponent");
  }
  std::vector<ScoreKey> keys;
  for (const auto& [key, score] : parts[0].table->entries) keys.push_back(key);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    std::vector<ScoreKey> kept;
    for (ScoreKey& key : keys) {
      if (parts[i].table->entries.count(key)) kept.push_back(std::move(key));
    }
    keys = std::move(kept);
  }
  bool mismatch = false;
  for (const CombinerPart& p : parts) {
    if (p.table->entries.size() != keys.size()) mismatch = true;
  }
  if (mismatch) {
    warn("combiner: tables do not share a key set; using the intersection (" +
         std::to_string(keys.size()) + " keys)");
  }
  return keys;
}

}  // namespace

ScoreTable baseline_scores(const ScoreTable& video_table,
                           const std::vector<VideoRecord>& corpus,
                           std::uint32_t stride) {
  // Group the video table's class scores per video id.
  std::map<std::string, std::vector<std::pair<std::uint32_t, double>>> per_video;
  for (const auto& [key, score] : video_table.entries) {
    per_video[key.video_id].emplace_back(key.class_id, score);
  }

  std::string missing;
  for (const VideoRecord& v : corpus) {
    if (!per_video.count(v.video_id)) {
      missing += missing.empty() ? "" : ", ";
      missing += "'" + v.video_id + "'";
    }
  }
  if (!missing.empty()) {
    throw DataError("baseline_scores: video table has no entries for: " + missing);
  }

  ScoreTable out;
  out.provenance = "baseline(" + video_table.provenance + ")";
  for (const VideoRecord& v : corpus) {
    const auto& class_scores = per_video[v.video_id];
    for (const std::uint32_t start : segment_starts(v.frames, stride)) {
      for (const auto& [class_id, score] : class_scores) {
        out.entries[{v.video_id, start, class_id}] = score;
      }
    }
  }
  return out;
}

double compose_frame_score(double xgb_p, double vl_p, double exponent) {
  if (!(exponent > 0.0)) throw ConfigError("compose: exponent p must be > 0");
  return std::pow(floored(xgb_p), exponent) * floored(vl_p);
}

double segment_score(std::span<const double> frame_xgb, double vl_p, double exponent) {
  if (!(exponent > 0.0)) throw ConfigError("compose: exponent p must be > 0");
  if (frame_xgb.empty()) throw DataError("segment_score: no frame probabilities");
  double sum = 0.0;
  for (const double p : frame_xgb) sum += std::pow(floored(p), exponent);
  return sum / double(frame_xgb.size()) * floored(vl_p);
}

ScoreTable geometric_combine(const std::vector<CombinerPart>& parts) {
  ScoreTable out;
  out.provenance = "geometric";
  for (const ScoreKey& key : common_keys(parts)) {
    double score = 1.0;
    for (const CombinerPart& p : parts) {
      score *= std::pow(floored(p.table->entries.at(key)), p.exponent);
    }
    out.entries[key] = score;
  }
  return out;
}

ScoreTable arithmetic_combine(const std::vector<CombinerPart>& parts) {
  double weight_sum = 0.0;
  for (const CombinerPart& p : parts) weight_sum += p.exponent;
  if (weight_sum <= 0.0) throw ConfigError("arithmetic combiner: weights must sum > 0");

  ScoreTable out;
  out.provenance = "arithmetic";
  for (const ScoreKey& key : common_keys(parts)) {
    double score = 0.0;
    for (const CombinerPart& p : parts) {
      score += p.exponent * p.table->entries.at(key);
    }
    out.entries[key] = score / weight_sum;
  }
  return out;
}

namespace {

// Per-class list in descending score order with key-ascending tie-breaks.
std::vector<SegmentKey> class_order(const ScoreTable& table, std::uint32_t class_id) {
  std::vector<std::pair<double, SegmentKey>> scored;
  for (const auto& [key, score] : table.entries) {
    if (key.class_id != class_id) continue;
    check_score(score, key);
    scored.emplace_back(score, SegmentKey{key.video_id, key.start});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<SegmentKey> out;
  out.reserve(scored.size());
  for (auto& [score, key] : scored) out.push_back(std::move(key));
  return out;
}

}  // namespace

RankedSubmission rank_average(const std::vector<const ScoreTable*>& tables,
                              std::size_t k_limit) {
  if (tables.size() < 2) throw ConfigError("rank_average: need at least 2 tables");
  for (const ScoreTable* t : tables) {
    if (t == nullptr || t->entries.empty()) {
      throw DataError("rank_average: empty score table");
    }
  }

  std::set<std::uint32_t> classes;
  for (const ScoreTable* t : tables) {
    for (const auto& [key, score] : t->entries) classes.insert(key.class_id);
  }

  RankedSubmission out;
  for (const std::uint32_t class_id : classes) {
    // Union of segment keys plus each table's rank map.
    std::set<SegmentKey> all_keys;
    std::vector<std::map<SegmentKey, std::size_t>> ranks(tables.size());
    std::vector<std::size_t> list_len(tables.size());
    for (std::size_t m = 0; m < tables.size(); ++m) {
      const std::vector<SegmentKey> order = class_order(*tables[m], class_id);
      list_len[m] = order.size();
      for (std::size_t i = 0; i < order.size(); ++i) {
        ranks[m][order[i]] = i + 1;
        all_keys.insert(order[i]);
      }
    }

    std::vector<std::pair<double, SegmentKey>> averaged;
    for (const SegmentKey& key : all_keys) {
      double sum = 0.0;
      for (std::size_t m = 0; m < tables.size(); ++m) {
        const auto it = ranks[m].find(key);
        sum += it == ranks[m].end() ? double(list_len[m] + 1) : double(it->second);
      }
      averaged.emplace_back(sum / double(tables.size()), key);
    }
    std::sort(averaged.begin(), averaged.end());  // mean rank asc, key asc
    std::vector<SegmentKey>& list = out.classes[class_id];
    for (std::size_t i = 0; i < averaged.size() && i < k_limit; ++i) {
      list.push_back(std::move(averaged[i].second));
    }
  }
  return out;
}

RankedSubmission to_submission(const ScoreTable& table, std::size_t k_limit,
                               std::uint32_t stride) {
  if (stride == 0) throw ConfigError("to_submission: stride must be >= 1");
  std::set<std::uint32_t> classes;
  for (const auto& [key, score] : table.entries) classes.insert(key.class_id);

  RankedSubmission out;
  for (const std::uint32_t class_id : classes) {
    std::vector<std::pair<double, SegmentKey>> scored;
    for (const auto& [key, score] : table.entries) {
      if (key.class_id != class_id || key.start % stride != 0) continue;
      check_score(score, key);
      scored.emplace_back(score, SegmentKey{key.video_id, key.start});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<SegmentKey>& list = out.classes[class_id];
    for (std::size_t i = 0; i < scored.size() && i < k_limit; ++i) {
      list.push_back(std::move(scored[i].second));
    }
  }
  return out;
}

void write_score_table(const ScoreTable& table, const std::filesystem::path& file) {
  std::string csv = "video_id,start,class_id,score\n";
  for (const auto& [key, score] : table.entries) {
    csv += key.video_id + "," + std::to_string(key.start) + "," +
           std::to_string(key.class_id) + "," + format_double(score) + "\n";
  }
  write_text_file(file, csv);
}

ScoreTable read_score_table(const std::filesystem::path& file,
                            const std::string& provenance) {
  ScoreTable out;
  out.provenance = provenance;
  std::istringstream in(read_text_file(file));
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(file.string() + ": empty score file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "video_id,start,class_id,score") {
    throw FormatError(file.string() + ": bad header '" + line + "'");
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto parts = split(line, ',');
    if (parts.size() != 4) {
      throw FormatError(file.string() + ": expected 4 fields, got '" + line + "'");
    }
    ScoreKey key{parts[0], parse_u32(parts[1], file.string() + ": start"),
                 parse_u32(parts[2], file.string() + ": class_id")};
    const double score = parse_double(parts[3], file.string() + ": score");
    check_score(score, key);
    if (!out.entries.emplace(std::move(key), score).second) {
      throw DataError(file.string() + ": duplicate key in line '" + line + "'");
    }
  }
  return out;
}

void write_submission(const RankedSubmission& submission,
                      const std::filesystem::path& file) {
  std::string csv = "Class,Segments\n";
  for (const auto& [class_id, keys] : submission.classes) {
    csv += std::to_string(class_id) + ",";
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (i > 0) csv += ' ';
      csv += keys[i].video_id + ":" + std::to_string(keys[i].start);
    }
    csv += "\n";
  }
  write_text_file(file, csv);
}

RankedSubmission read_submission(const std::filesystem::path& file) {
  RankedSubmission out;
  std::istringstream in(read_text_file(file));
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(file.string() + ": empty submission file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "Class,Segments") {
    throw FormatError(file.string() + ": bad header '" + line +
                      "', expected 'Class,Segments'");
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError(file.string() + ": expected '<class>,<segments>', got '" +
                        line + "'");
    }
    const std::uint32_t class_id =
        parse_u32(line.substr(0, comma), file.string() + ": class id");
    if (out.classes.count(class_id)) {
      throw DataError(file.string() + ": duplicate class " + std::to_string(class_id));
    }
    std::vector<SegmentKey>& list = out.classes[class_id];
    std::set<SegmentKey> seen;
    for (const std::string& token : split(line.substr(comma + 1), ' ')) {
      if (token.empty()) continue;
      const std::size_t colon = token.rfind(':');
      if (colon == std::string::npos || colon == 0) {
        throw FormatError(file.string() + ": expected 'videoId:start', got '" +
                          token + "'");
      }
      SegmentKey key{token.substr(0, colon),
                     parse_u32(token.substr(colon + 1), file.string() + ": start")};
      if (!seen.insert(key).second) {
        throw DataError(file.string() + ": duplicate segment '" + token +
                        "' in class " + std::to_string(class_id));
      }
      list.push_back(std::move(key));
    }
  }
  return out;
}

CombinerSpecFile parse_combiner_spec(const std::filesystem::path& file) {
  CombinerSpecFile out;
  std::istringstream in(read_text_file(file));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t ws = t.find_last_of(" \t");
    if (ws == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                        ": expected '<path> <exponent>'");
    }
    const std::string path = trim(t.substr(0, ws));
    const double exponent =
        parse_double(trim(t.substr(ws + 1)), file.string() + ": exponent");
    if (path.empty()) {
      throw ConfigError(file.string() + ":" + std::to_string(line_no) +
                        ": empty table path");
    }
    out.parts.emplace_back(path, exponent);
  }
  if (out.parts.empty()) {
    throw ConfigError(file.string() + ": combiner spec lists no tables");
  }
  return out;
}

}  // namespace segloc
