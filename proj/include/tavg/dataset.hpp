#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tavg/face.hpp"
#include "tavg/media.hpp"

namespace tavg::data {

inline constexpr int kVideoFps = 30;
inline constexpr int kSegmentSamples = 1600;
inline constexpr int kFramesPerSegment = 3;
inline constexpr int kBaselineSamples = 16000;
inline constexpr int kImageSize = 64;
inline constexpr Real kPeakFloor = 1e-8;

enum class DatasetMode { triplet, baseline };

std::string to_string(DatasetMode mode);
DatasetMode parse_dataset_mode(const std::string& text);

/// One training example. Triplet mode: 1600 samples and 3 crops. Baseline
/// mode: 16000 samples and 1 crop. `index` is the segment (or second) ordinal
/// in the source clip, so it keeps gaps left by excluded groups.
struct Sample {
  int index = 0;
  std::vector<float> audio;
  std::vector<FaceImage> frames;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetManifest {
  DatasetMode mode = DatasetMode::triplet;
  std::size_t sample_count = 0;
  std::string source_id;
  int image_size = kImageSize;
  int sample_rate = 16000;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

/// Frames in presentation order plus mono audio at the source rate.
std::pair<media::FrameSequence, media::AudioTrack> ingest_video(const std::filesystem::path& path);

struct CandidateGroup {
  int index = 0;
  std::size_t audio_begin = 0;
  std::size_t audio_end = 0;
  std::vector<int> frame_indices;
};

/// Group k covers audio [1600k, 1600(k+1)) and frames 3k..3k+2.
std::vector<CandidateGroup> make_candidate_pairs(const media::FrameSequence& frames, const media::AudioTrack& audio);

/// Divides by max(|a|, 1e-8).
std::vector<float> peak_normalize(const std::vector<Real>& segment);

/// Keeps a group only if every one of its frames yields a face crop.
std::vector<Sample> filter_and_build(const std::vector<CandidateGroup>& candidates, const media::FrameSequence& frames,
                                     const media::AudioTrack& audio, const FaceDetector& detector,
                                     int image_size = kImageSize);

/// Second s: audio [16000s, 16000(s+1)) and frame 30s+15.
std::vector<Sample> make_baseline_pairs(const media::FrameSequence& frames, const media::AudioTrack& audio,
                                        const FaceDetector& detector, int image_size = kImageSize);

struct BuildReport {
  std::size_t candidates = 0;
  std::size_t retained = 0;
  std::size_t excluded() const { return candidates - retained; }
};

/// Full pipeline from decoded media: resample to 16 kHz, pair, crop, filter.
Dataset build_dataset(const media::FrameSequence& frames, const media::AudioTrack& audio,
                      const FaceDetector& detector, DatasetMode mode, const std::string& source_id,
                      BuildReport* report = nullptr);

void write_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace tavg::data
