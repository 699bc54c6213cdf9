#include "segloc/corpus_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "segloc/corpus.hpp"
#include "segloc/util.hpp"

namespace segloc {

namespace {

constexpr char kFeaturesMagic[4] = {'S', 'G', 'F', '1'};

// Little-endian binary writer with explicit byte order.
class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& path)
      : path_(path.string()), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot open for writing: " + path_);
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw DataError("write failed: " + path_);
  }

  void u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    bytes(b, 4);
  }

  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

// Reader that tracks the byte offset so format errors can name it.
class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& path)
      : path_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open: " + path_);
  }

  std::size_t offset() const { return offset_; }

  bool at_eof() {
    return in_.peek() == std::ifstream::traits_type::eof();
  }

  void bytes(void* p, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_ + ": unexpected end of file at offset " +
                        std::to_string(offset_ + std::size_t(in_.gcount())) +
                        ": expected " + what);
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
           std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

std::string classes_field(const std::set<std::uint32_t>& classes) {
  std::string out;
  for (const std::uint32_t c : classes) {
    if (!out.empty()) out += ' ';
    out += std::to_string(c);
  }
  return out;
}

// Reads a CSV file, checks the exact header, returns data lines.
std::vector<std::string> csv_lines(const std::filesystem::path& file,
                                   const std::string& header) {
  std::istringstream in(read_text_file(file));
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(file.string() + ": empty file, expected header '" + header + "'");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw FormatError(file.string() + ": bad header '" + line + "', expected '" +
                      header + "'");
  }
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

void write_corpus(const std::vector<VideoRecord>& videos,
                  const std::vector<SegmentLabel>& labels,
                  const CorpusConfig& cfg,
                  const std::filesystem::path& dir) {
  validate_corpus(videos, labels, cfg);
  std::filesystem::create_directories(dir);

  {
    std::string meta;
    meta += "format_version=1\n";
    meta += "D=" + std::to_string(cfg.dim) + "\n";
    meta += "C=" + std::to_string(cfg.classes) + "\n";
    meta += "n_videos=" + std::to_string(videos.size()) + "\n";
    meta += "seed=" + std::to_string(cfg.rng_seed) + "\n";
    write_text_file(dir / "corpus.meta", meta);
  }

  {
    BinWriter out(dir / "features.bin");
    out.bytes(kFeaturesMagic, 4);
    for (const VideoRecord& v : videos) {
      out.u32(static_cast<std::uint32_t>(v.video_id.size()));
      out.bytes(v.video_id.data(), v.video_id.size());
      out.u32(v.frames);
      out.u32(v.dim);
      for (const float x : v.features) out.f32(x);
    }
  }

  {
    std::string csv = "video_id,classes\n";
    for (const VideoRecord& v : videos) {
      csv += v.video_id + "," + classes_field(v.video_labels) + "\n";
    }
    write_text_file(dir / "video_labels.csv", csv);
  }

  write_segment_labels(labels, dir / "segment_labels.csv");
}

LoadedCorpus read_corpus(const std::filesystem::path& dir) {
  LoadedCorpus out;

  // corpus.meta
  {
    const auto path = dir / "corpus.meta";
    std::istringstream in(read_text_file(path));
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw FormatError(path.string() + ": expected key=value, got '" + line + "'");
      }
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"format_version", "D", "C", "n_videos", "seed"}) {
      if (!kv.count(key)) {
        throw FormatError(path.string() + ": missing key '" + std::string(key) + "'");
      }
    }
    if (kv["format_version"] != "1") {
      throw FormatError(path.string() + ": unsupported format_version '" +
                        kv["format_version"] + "'");
    }
    out.cfg.dim = parse_u32(kv["D"], path.string() + ": D");
    out.cfg.classes = parse_u32(kv["C"], path.string() + ": C");
    out.cfg.rng_seed = parse_u64(kv["seed"], path.string() + ": seed");
  }
  const std::uint64_t n_videos_meta = [&] {
    std::istringstream in(read_text_file(dir / "corpus.meta"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("n_videos=", 0) == 0) {
        return parse_u64(line.substr(9), "corpus.meta: n_videos");
      }
    }
    return std::uint64_t(0);
  }();

  // features.bin
  {
    BinReader in(dir / "features.bin");
    char magic[4];
    in.bytes(magic, 4, "magic 'SGF1'");
    if (std::memcmp(magic, kFeaturesMagic, 4) != 0) {
      throw FormatError(in.path() + ": bad magic at offset 0: expected 'SGF1'");
    }
    while (!in.at_eof()) {
      VideoRecord v;
      const std::uint32_t id_len = in.u32("video id length");
      v.video_id.resize(id_len);
      in.bytes(v.video_id.data(), id_len, "video id bytes");
      v.frames = in.u32("frame count T");
      v.dim = in.u32("feature dim D");
      if (v.dim != out.cfg.dim) {
        throw FormatError(in.path() + ": video '" + v.video_id + "' at offset " +
                          std::to_string(in.offset() - 4) + " declares D=" +
                          std::to_string(v.dim) + ", corpus.meta says D=" +
                          std::to_string(out.cfg.dim));
      }
      v.features.resize(std::size_t(v.frames) * v.dim);
      for (float& x : v.features) x = in.f32("feature value");
      out.videos.push_back(std::move(v));
    }
  }
  if (out.videos.size() != n_videos_meta) {
    throw FormatError(dir.string() + ": features.bin holds " +
                      std::to_string(out.videos.size()) +
                      " videos, corpus.meta says " + std::to_string(n_videos_meta));
  }

  // video_labels.csv
  {
    const auto path = dir / "video_labels.csv";
    std::map<std::string, VideoRecord*> by_id;
    for (VideoRecord& v : out.videos) by_id[v.video_id] = &v;
    for (const std::string& line : csv_lines(path, "video_id,classes")) {
      const std::size_t comma = line.find(',');
      if (comma == std::string::npos) {
        throw FormatError(path.string() + ": expected 'video_id,classes', got '" +
                          line + "'");
      }
      const std::string id = line.substr(0, comma);
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw FormatError(path.string() + ": unknown video id '" + id + "'");
      }
      for (const std::string& tok : split(line.substr(comma + 1), ' ')) {
        if (tok.empty()) continue;
        it->second->video_labels.insert(parse_u32(tok, path.string() + ": class id"));
      }
    }
  }

  out.labels = read_segment_labels(dir / "segment_labels.csv");
  validate_corpus(out.videos, out.labels, out.cfg);
  return out;
}

void write_truth(const std::vector<TruthEntry>& truth, const std::filesystem::path& file) {
  std::string csv = "video_id,frame,class_id\n";
  for (const TruthEntry& t : truth) {
    csv += t.video_id + "," + std::to_string(t.frame) + "," +
           std::to_string(t.class_id) + "\n";
  }
  write_text_file(file, csv);
}

std::vector<TruthEntry> read_truth(const std::filesystem::path& file) {
  std::vector<TruthEntry> out;
  for (const std::string& line : csv_lines(file, "video_id,frame,class_id")) {
    const auto parts = split(line, ',');
    if (parts.size() != 3) {
      throw FormatError(file.string() + ": expected 3 fields, got '" + line + "'");
    }
    out.push_back({parts[0], parse_u32(parts[1], file.string() + ": frame"),
                   parse_u32(parts[2], file.string() + ": class_id")});
  }
  return out;
}

void write_segment_labels(const std::vector<SegmentLabel>& labels,
                          const std::filesystem::path& file) {
  std::string csv = "video_id,start,class_id,polarity\n";
  for (const SegmentLabel& l : labels) {
    csv += l.video_id + "," + std::to_string(l.start) + "," +
           std::to_string(l.class_id) + "," +
           (l.polarity == Polarity::positive ? "1" : "0") + "\n";
  }
  write_text_file(file, csv);
}

std::vector<SegmentLabel> read_segment_labels(const std::filesystem::path& file) {
  std::vector<SegmentLabel> out;
  for (const std::string& line : csv_lines(file, "video_id,start,class_id,polarity")) {
    const auto parts = split(line, ',');
    if (parts.size() != 4) {
      throw FormatError(file.string() + ": expected 4 fields, got '" + line + "'");
    }
    SegmentLabel l;
    l.video_id = parts[0];
    l.start = parse_u32(parts[1], file.string() + ": start");
    l.class_id = parse_u32(parts[2], file.string() + ": class_id");
    if (parts[3] == "1") {
      l.polarity = Polarity::positive;
    } else if (parts[3] == "0") {
      l.polarity = Polarity::negative;
    } else {
      throw FormatError(file.string() + ": polarity must be 0 or 1, got '" +
                        parts[3] + "'");
    }
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace segloc
