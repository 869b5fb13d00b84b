#include "tavg/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "byte_io.hpp"
#include "tavg/errors.hpp"
#include "tavg/resample.hpp"

namespace tavg::data {
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestMagic = "# tavg-dataset";
constexpr const char* kColumns = "index\taudio\tframes\tcrc32";

std::uint32_t crc_update(std::uint32_t crc, const std::vector<std::uint8_t>& bytes) {
  return static_cast<std::uint32_t>(::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

int parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError("corrupt manifest: bad " + what + " '" + text + "'");
  }
}

std::vector<std::uint8_t> encode_audio(const std::vector<float>& audio) {
  detail::ByteWriter w;
  for (float a : audio) w.f32(a);
  return std::move(w.bytes());
}

std::vector<std::uint8_t> read_required(const fs::path& dir, const std::string& rel) {
  const fs::path p = dir / rel;
  if (!fs::exists(p)) throw DataError("missing dataset file: " + p.string());
  return media::read_file(p);
}

}  // namespace

std::string to_string(DatasetMode mode) { return mode == DatasetMode::triplet ? "triplet" : "baseline"; }

DatasetMode parse_dataset_mode(const std::string& text) {
  if (text == "triplet") return DatasetMode::triplet;
  if (text == "baseline") return DatasetMode::baseline;
  throw ConfigError("unknown dataset mode '" + text + "' (expected triplet or baseline)");
}

std::pair<media::FrameSequence, media::AudioTrack> ingest_video(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("cannot read video file " + path.string());
  auto contents = media::read_avi(path);
  if (contents.video.frames.empty()) throw DataError("missing video stream in " + path.string());
  if (contents.audio.frame_count() == 0) throw DataError("missing audio stream in " + path.string());
  const auto& first = contents.video.frames.front();
  for (const auto& f : contents.video.frames) {
    if (f.width != first.width || f.height != first.height) throw DataError("frames differ in size in " + path.string());
  }
  return {std::move(contents.video), media::to_mono(contents.audio)};
}

std::vector<CandidateGroup> make_candidate_pairs(const media::FrameSequence& frames, const media::AudioTrack& audio) {
  if (audio.sample_rate != kTargetSampleRate) {
    throw ConfigError("pairing requires 16000 Hz audio, got " + std::to_string(audio.sample_rate));
  }
  if (std::lround(frames.fps) != kVideoFps || std::abs(frames.fps - kVideoFps) > 1e-6) {
    throw ConfigError("pairing requires 30 fps video, got " + std::to_string(frames.fps));
  }
  const std::size_t count = std::min(audio.samples.size() / kSegmentSamples, frames.frames.size() / kFramesPerSegment);
  std::vector<CandidateGroup> groups(count);
  for (std::size_t k = 0; k < count; ++k) {
    auto& g = groups[k];
    g.index = static_cast<int>(k);
    g.audio_begin = k * kSegmentSamples;
    g.audio_end = g.audio_begin + kSegmentSamples;
    for (int t = 0; t < kFramesPerSegment; ++t) g.frame_indices.push_back(static_cast<int>(k) * kFramesPerSegment + t);
  }
  return groups;
}

std::vector<float> peak_normalize(const std::vector<Real>& segment) {
  Real peak = 0.0;
  for (Real a : segment) peak = std::max(peak, std::abs(a));
  const Real denom = std::max(peak, kPeakFloor);
  std::vector<float> out(segment.size());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(segment[i] / denom, -1.0, 1.0));
  }
  return out;
}

std::vector<Sample> filter_and_build(const std::vector<CandidateGroup>& candidates, const media::FrameSequence& frames,
                                     const media::AudioTrack& audio, const FaceDetector& detector, int image_size) {
  std::vector<Sample> out;
  for (const auto& g : candidates) {
    if (g.audio_end > audio.samples.size()) throw ConfigError("candidate group exceeds audio length");
    Sample s;
    s.index = g.index;
    bool complete = true;
    for (int f : g.frame_indices) {
      if (f < 0 || static_cast<std::size_t>(f) >= frames.frames.size()) {
        throw ConfigError("candidate group references frame " + std::to_string(f) + " beyond the clip");
      }
      auto crop = detect_and_crop(frames.frames[static_cast<std::size_t>(f)], f, detector, image_size);
      if (!crop) {
        complete = false;
        break;
      }
      s.frames.push_back(std::move(*crop));
    }
    if (!complete) continue;
    s.audio = peak_normalize({audio.samples.begin() + static_cast<std::ptrdiff_t>(g.audio_begin),
                              audio.samples.begin() + static_cast<std::ptrdiff_t>(g.audio_end)});
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> make_baseline_pairs(const media::FrameSequence& frames, const media::AudioTrack& audio,
                                        const FaceDetector& detector, int image_size) {
  if (audio.sample_rate != kTargetSampleRate) {
    throw ConfigError("pairing requires 16000 Hz audio, got " + std::to_string(audio.sample_rate));
  }
  std::vector<CandidateGroup> seconds;
  const std::size_t count = audio.samples.size() / kBaselineSamples;
  for (std::size_t s = 0; s < count; ++s) {
    const int frame = static_cast<int>(s) * kVideoFps + kVideoFps / 2;
    if (static_cast<std::size_t>(frame) >= frames.frames.size()) break;
    seconds.push_back({static_cast<int>(s), s * kBaselineSamples, (s + 1) * kBaselineSamples, {frame}});
  }
  return filter_and_build(seconds, frames, audio, detector, image_size);
}

Dataset build_dataset(const media::FrameSequence& frames, const media::AudioTrack& source_audio,
                      const FaceDetector& detector, DatasetMode mode, const std::string& source_id,
                      BuildReport* report) {
  const auto audio = resample_audio(source_audio, kTargetSampleRate);
  Dataset ds;
  std::size_t candidates = 0;
  if (mode == DatasetMode::triplet) {
    const auto groups = make_candidate_pairs(frames, audio);
    candidates = groups.size();
    ds.samples = filter_and_build(groups, frames, audio, detector, kImageSize);
  } else {
    if (std::abs(frames.fps - kVideoFps) > 1e-6) {
      throw ConfigError("pairing requires 30 fps video, got " + std::to_string(frames.fps));
    }
    candidates = std::min(audio.samples.size() / kBaselineSamples,
                          frames.frames.size() >= kVideoFps / 2 + 1
                              ? (frames.frames.size() - kVideoFps / 2 - 1) / kVideoFps + 1
                              : std::size_t{0});
    ds.samples = make_baseline_pairs(frames, audio, detector, kImageSize);
  }
  ds.manifest.mode = mode;
  ds.manifest.sample_count = ds.samples.size();
  ds.manifest.source_id = source_id;
  ds.manifest.image_size = kImageSize;
  ds.manifest.sample_rate = kTargetSampleRate;
  if (report) *report = {candidates, ds.samples.size()};
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& out_dir) {
  const auto& m = dataset.manifest;
  if (m.sample_count != dataset.samples.size()) throw ConfigError("manifest sample_count does not match samples");
  if (m.source_id.find_first_of("\t\n") != std::string::npos) throw ConfigError("source id may not contain tabs or newlines");
  const std::size_t expected_frames = m.mode == DatasetMode::triplet ? kFramesPerSegment : 1;
  const std::size_t expected_audio = m.mode == DatasetMode::triplet ? kSegmentSamples : kBaselineSamples;

  fs::create_directories(out_dir / "audio");
  fs::create_directories(out_dir / "frames");
  std::ostringstream manifest;
  manifest << kManifestMagic << "\tmode=" << to_string(m.mode) << "\tsample_count=" << m.sample_count
           << "\tsource_id=" << m.source_id << "\timage_size=" << m.image_size << "\tsample_rate=" << m.sample_rate
           << '\n'
           << kColumns << '\n';
  for (const auto& s : dataset.samples) {
    if (s.audio.size() != expected_audio || s.frames.size() != expected_frames) {
      throw ConfigError("sample " + std::to_string(s.index) + " does not match dataset mode " + to_string(m.mode));
    }
    const std::string audio_rel = "audio/" + std::to_string(s.index) + ".f32";
    const auto audio_bytes = encode_audio(s.audio);
    media::write_file(out_dir / audio_rel, audio_bytes);
    std::uint32_t crc = crc_update(0, audio_bytes);
    std::string frame_list;
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      if (s.frames[t].size != m.image_size) throw ConfigError("frame size does not match manifest image_size");
      const std::string rel = "frames/" + std::to_string(s.index) + "_" + std::to_string(t) + ".png";
      media::write_png(out_dir / rel, s.frames[t].to_rgb());
      crc = crc_update(crc, media::read_file(out_dir / rel));
      if (!frame_list.empty()) frame_list += ',';
      frame_list += rel;
    }
    manifest << s.index << '\t' << audio_rel << '\t' << frame_list << '\t' << hex32(crc) << '\n';
  }
  std::ofstream out(out_dir / "manifest.tsv", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + (out_dir / "manifest.tsv").string());
  out << manifest.str();
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.tsv";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset manifest " + manifest_path.string());
  std::string header, columns;
  if (!std::getline(in, header) || !std::getline(in, columns)) throw DataError("corrupt manifest: missing header");
  auto fields = split(header, '\t');
  if (fields.empty() || fields[0] != kManifestMagic) throw DataError("corrupt manifest: bad header line");
  if (columns != kColumns) throw DataError("corrupt manifest: bad column line");

  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto eq = fields[i].find('=');
    if (eq == std::string::npos) throw DataError("corrupt manifest: bad header field '" + fields[i] + "'");
    kv[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
  }
  for (const char* key : {"mode", "sample_count", "source_id", "image_size", "sample_rate"}) {
    if (!kv.count(key)) throw DataError(std::string("corrupt manifest: missing ") + key);
  }
  Dataset ds;
  auto& m = ds.manifest;
  try {
    m.mode = parse_dataset_mode(kv["mode"]);
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt manifest: ") + e.what());
  }
  const int count = parse_int(kv["sample_count"], "sample_count");
  m.source_id = kv["source_id"];
  m.image_size = parse_int(kv["image_size"], "image_size");
  m.sample_rate = parse_int(kv["sample_rate"], "sample_rate");
  if (count < 0 || m.image_size <= 0 || m.sample_rate <= 0) throw DataError("corrupt manifest: invalid header values");
  m.sample_count = static_cast<std::size_t>(count);
  const std::size_t expected_frames = m.mode == DatasetMode::triplet ? kFramesPerSegment : 1;
  const std::size_t expected_audio = m.mode == DatasetMode::triplet ? kSegmentSamples : kBaselineSamples;

  std::string line;
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    const auto cols = split(line, '\t');
    if (cols.size() != 4) throw DataError("corrupt manifest: expected 4 columns at " + where);
    Sample s;
    s.index = parse_int(cols[0], "index");
    const auto audio_bytes = read_required(dir, cols[1]);
    if (audio_bytes.size() != expected_audio * 4) throw DataError("audio file has wrong length: " + (dir / cols[1]).string());
    detail::ByteReader r(audio_bytes.data(), audio_bytes.size(), cols[1]);
    s.audio.resize(expected_audio);
    for (auto& a : s.audio) a = r.f32();
    std::uint32_t crc = crc_update(0, audio_bytes);
    const auto frame_files = split(cols[2], ',');
    if (frame_files.size() != expected_frames) throw DataError("corrupt manifest: wrong frame count at " + where);
    for (const auto& rel : frame_files) {
      const auto bytes = read_required(dir, rel);
      crc = crc_update(crc, bytes);
      auto img = media::read_png(dir / rel);
      if (img.width != m.image_size || img.height != m.image_size) {
        throw DataError("frame has wrong size: " + (dir / rel).string());
      }
      s.frames.push_back(FaceImage::from_rgb(img));
    }
    if (hex32(crc) != cols[3]) throw DataError("checksum mismatch for sample " + cols[0] + " at " + where);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != m.sample_count) {
    throw DataError("corrupt manifest: sample_count " + std::to_string(m.sample_count) + " but " +
                    std::to_string(ds.samples.size()) + " rows");
  }
  return ds;
}

}  // namespace tavg::data
