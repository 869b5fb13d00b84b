#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "support/temp_dir.hpp"
#include "tavg/dataset.hpp"
#include "tavg/errors.hpp"
#include "tavg/resample.hpp"
#include "tavg/synth.hpp"

namespace fs = std::filesystem;
using namespace tavg;
using namespace tavg::data;

namespace {

media::FrameSequence blank_frames(int n, int w = 16, int h = 16) {
  media::FrameSequence seq;
  seq.fps = 30;
  for (int i = 0; i < n; ++i) seq.frames.emplace_back(w, h);
  return seq;
}

media::AudioTrack silence(std::size_t n, int rate = 16000) { return {rate, std::vector<Real>(n, 0.0)}; }

// Every frame has one box covering a 64x64 region.
SidecarDetector all_faces(int n, FaceBox box = {0, 0, 64, 64}) {
  std::map<int, std::vector<FaceBox>> m;
  for (int i = 0; i < n; ++i) m[i] = {box};
  return SidecarDetector(m);
}

// Frame t is filled with gray level t so crops reveal their source frame.
media::FrameSequence indexed_frames(int n) {
  media::FrameSequence seq;
  seq.fps = 30;
  for (int i = 0; i < n; ++i) {
    media::RgbFrame f(64, 64);
    std::fill(f.rgb.begin(), f.rgb.end(), static_cast<std::uint8_t>(i));
    seq.frames.push_back(f);
  }
  return seq;
}

std::vector<std::uint8_t> dir_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, dir).string();
    all.insert(all.end(), rel.begin(), rel.end());
    const auto b = media::read_file(f);
    all.insert(all.end(), b.begin(), b.end());
  }
  return all;
}

}  // namespace

TEST(Resample, LengthFollowsRatio) {
  EXPECT_EQ(resample_audio(silence(48000, 48000)).samples.size(), 16000u);
  EXPECT_EQ(resample_audio(silence(44100, 44100)).samples.size(), 16000u);
  EXPECT_EQ(resample_audio(silence(1001, 8000)).samples.size(), 2002u);
}

TEST(Resample, IdentityAtTargetRate) {
  media::AudioTrack t{16000, {0.1, -0.2, 0.3}};
  const auto out = resample_audio(t);
  EXPECT_EQ(out.sample_rate, 16000);
  EXPECT_EQ(out.samples, t.samples);
}

TEST(Resample, SineMatchesAnalytic) {
  media::AudioTrack in{48000, {}};
  for (int i = 0; i < 48000; ++i) in.samples.push_back(0.8 * std::sin(2 * std::numbers::pi * 400.0 * i / 48000.0));
  const auto out = resample_audio(in);
  ASSERT_EQ(out.samples.size(), 16000u);
  double worst = 0;
  for (int i = 0; i < 16000; ++i) {
    worst = std::max(worst, std::abs(out.samples[i] - 0.8 * std::sin(2 * std::numbers::pi * 400.0 * i / 16000.0)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Resample, ClipsAndRejectsBadRate) {
  media::AudioTrack in{48000, std::vector<Real>(300, 1.0)};
  for (Real v : resample_audio(in).samples) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_THROW(resample_audio(in, 0), ConfigError);
  EXPECT_THROW(resample_audio(in, -5), ConfigError);
}

TEST(Ingest, SyntheticClipRoundTrip) {
  test::TempDir tmp;
  SynthClipOptions o;
  const auto clip = make_synth_clip(o);
  write_synth_clip(clip, tmp / "clip.avi", tmp / "clip.faces");
  auto [frames, audio] = ingest_video(tmp / "clip.avi");
  EXPECT_EQ(frames.frames.size(), 90u);
  EXPECT_DOUBLE_EQ(frames.fps, 30.0);
  EXPECT_EQ(audio.sample_rate, 48000);
  EXPECT_EQ(audio.samples.size(), 144000u);
  EXPECT_EQ(frames.frames[17], clip.video.frames[17]);
  // Stereo is averaged to mono.
  EXPECT_DOUBLE_EQ(audio.samples[1234], (clip.audio.interleaved[2468] + clip.audio.interleaved[2469]) / 2.0 / 32768.0);
}

TEST(Ingest, RejectsMissingStreams) {
  test::TempDir tmp;
  media::PcmAudio pcm{16000, 1, std::vector<std::int16_t>(1600, 0)};
  media::write_avi(tmp / "empty.avi", media::FrameSequence{30, {}}, 30, pcm);
  try {
    ingest_video(tmp / "empty.avi");
    FAIL() << "expected error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("missing video stream"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ingest_video(tmp / "nope.avi"), DataError);
  media::write_file(tmp / "junk.avi", {1, 2, 3, 4, 5});
  EXPECT_THROW(ingest_video(tmp / "junk.avi"), DataError);
}

TEST(Pairing, GroupCounts) {
  EXPECT_EQ(make_candidate_pairs(blank_frames(90), silence(48000)).size(), 30u);
  EXPECT_EQ(make_candidate_pairs(blank_frames(61), silence(32800)).size(), 20u);
  EXPECT_EQ(make_candidate_pairs(blank_frames(2), silence(1600)).size(), 0u);
  EXPECT_EQ(make_candidate_pairs(blank_frames(0), silence(0)).size(), 0u);
}

TEST(Pairing, GroupArithmetic) {
  const auto groups = make_candidate_pairs(blank_frames(61), silence(32800));
  for (std::size_t k = 0; k < groups.size(); ++k) {
    EXPECT_EQ(groups[k].audio_begin, 1600 * k);
    EXPECT_EQ(groups[k].audio_end, 1600 * (k + 1));
    EXPECT_EQ(groups[k].frame_indices, (std::vector<int>{int(3 * k), int(3 * k + 1), int(3 * k + 2)}));
  }
}

TEST(Pairing, RequiresConformingRates) {
  EXPECT_THROW(make_candidate_pairs(blank_frames(9), silence(4800, 48000)), ConfigError);
  auto f = blank_frames(9);
  f.fps = 25;
  EXPECT_THROW(make_candidate_pairs(f, silence(4800)), ConfigError);
}

TEST(Crop, SingleBoxGivesUnitRangeCrop) {
  SynthClipOptions o;
  o.seconds = 0.1;
  const auto clip = make_synth_clip(o);
  SidecarDetector det(clip.boxes);
  const auto crop = detect_and_crop(clip.video.frames[0], 0, det);
  ASSERT_TRUE(crop.has_value());
  EXPECT_EQ(crop->size, 64);
  const auto t = crop->to_tensor();
  EXPECT_EQ(t.shape(), (std::vector<int>{3, 64, 64}));
  for (Real v : t.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  // Box is 64x64 so the resize is the identity.
  const FaceBox b = synth_face_box(o);
  EXPECT_EQ(crop->levels[(1 * 64 + 20) * 64 + 30], clip.video.frames[0].at(b.x + 30, b.y + 20, 1));
}

TEST(Crop, NoFaceGivesNone) {
  SidecarDetector none({});
  EXPECT_FALSE(detect_and_crop(media::RgbFrame(32, 32), 0, none).has_value());
}

TEST(Crop, LargestBoxWins) {
  media::RgbFrame f(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) f.at(x, y, 0) = x < 20 ? 10 : 200;
  SidecarDetector det({{0, {{0, 0, 10, 10}, {30, 30, 20, 20}}}});
  const auto crop = detect_and_crop(f, 0, det, 8);
  ASSERT_TRUE(crop.has_value());
  for (int i = 0; i < 64; ++i) EXPECT_EQ(crop->levels[i], 200);
  EXPECT_EQ(select_face({{0, 0, 10, 10}, {30, 30, 20, 20}}, 64, 64), (FaceBox{30, 30, 20, 20}));
}

TEST(Crop, TiesGoToTopLeft) {
  EXPECT_EQ(select_face({{20, 5, 10, 10}, {5, 20, 10, 10}, {2, 5, 10, 10}}, 64, 64), (FaceBox{2, 5, 10, 10}));
  // Clipping happens before comparing areas.
  EXPECT_EQ(select_face({{60, 0, 30, 30}, {0, 0, 12, 12}}, 64, 64), (FaceBox{0, 0, 12, 12}));
  EXPECT_FALSE(select_face({{100, 100, 5, 5}}, 64, 64).has_value());
}

TEST(Crop, BilinearMatchesDirectFormula) {
  media::RgbFrame f(10, 10);
  std::mt19937 rng(3);
  for (auto& v : f.rgb) v = static_cast<std::uint8_t>(rng() % 256);
  SidecarDetector det({{0, {{1, 2, 7, 5}}}});
  const auto crop = detect_and_crop(f, 0, det, 4);
  ASSERT_TRUE(crop);
  // Output pixel (ox=1, oy=2) samples box position ((1.5*7/4)-0.5, (2.5*5/4)-0.5) = (2.125, 2.625).
  for (int c = 0; c < 3; ++c) {
    auto px = [&](int x, int y) { return static_cast<double>(f.at(1 + x, 2 + y, c)); };
    const double v = (1 - 0.625) * ((1 - 0.125) * px(2, 2) + 0.125 * px(3, 2)) +
                     0.625 * ((1 - 0.125) * px(2, 3) + 0.125 * px(3, 3));
    EXPECT_EQ(crop->levels[(c * 4 + 2) * 4 + 1], static_cast<int>(std::lround(v)));
  }
}

TEST(Filter, AllFacesKeepsEveryGroup) {
  const auto frames = indexed_frames(90);
  const auto audio = silence(48000);
  const auto samples = filter_and_build(make_candidate_pairs(frames, audio), frames, audio, all_faces(90));
  ASSERT_EQ(samples.size(), 30u);
  for (std::size_t k = 0; k < 30; ++k) {
    EXPECT_EQ(samples[k].index, static_cast<int>(k));
    ASSERT_EQ(samples[k].frames.size(), 3u);
    for (int t = 0; t < 3; ++t) EXPECT_EQ(samples[k].frames[t].levels[0], 3 * k + t);
  }
}

TEST(Filter, MissingMiddleFaceDropsGroup) {
  const auto frames = indexed_frames(9);
  const auto audio = silence(4800);
  std::map<int, std::vector<FaceBox>> m;
  for (int i = 0; i < 9; ++i)
    if (i != 4) m[i] = {{0, 0, 64, 64}};
  const auto samples = filter_and_build(make_candidate_pairs(frames, audio), frames, audio, SidecarDetector(m));
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].index, 0);
  EXPECT_EQ(samples[1].index, 2);
}

TEST(Filter, PeakNormalization) {
  EXPECT_EQ(peak_normalize(std::vector<Real>(1600, 0.0)), std::vector<float>(1600, 0.0f));
  const auto n = peak_normalize({0.1, -0.4, 0.2});
  EXPECT_FLOAT_EQ(n[0], 0.25f);
  EXPECT_FLOAT_EQ(n[1], -1.0f);
  EXPECT_FLOAT_EQ(n[2], 0.5f);
  const auto tiny = peak_normalize({1e-12, -1e-12});
  EXPECT_FLOAT_EQ(tiny[0], 1e-4f);
}

TEST(Baseline, MiddleFrameOfEachSecond) {
  const auto frames = indexed_frames(90);
  const auto samples = make_baseline_pairs(frames, silence(48000), all_faces(90));
  ASSERT_EQ(samples.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    EXPECT_EQ(samples[s].index, s);
    EXPECT_EQ(samples[s].audio.size(), 16000u);
    ASSERT_EQ(samples[s].frames.size(), 1u);
    EXPECT_EQ(samples[s].frames[0].levels[0], 30 * s + 15);
  }
}

TEST(Baseline, ShortClipAndExclusion) {
  EXPECT_TRUE(make_baseline_pairs(indexed_frames(27), silence(14400), all_faces(27)).empty());
  std::map<int, std::vector<FaceBox>> m;
  for (int i = 0; i < 90; ++i)
    if (i != 45) m[i] = {{0, 0, 64, 64}};
  const auto samples = make_baseline_pairs(indexed_frames(90), silence(48000), SidecarDetector(m));
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].index, 0);
  EXPECT_EQ(samples[1].index, 2);
}

TEST(Dataset, WatermarkAlignment) {
  SynthClipOptions o;
  o.watermark = true;
  o.seed = 9;
  const auto clip = make_synth_clip(o);
  BuildReport rep;
  const auto ds = build_dataset(clip.video, media::to_mono(clip.audio), SidecarDetector(clip.boxes),
                                DatasetMode::triplet, "wm", &rep);
  EXPECT_EQ(rep.candidates, 30u);
  EXPECT_EQ(rep.retained, 30u);
  for (const auto& s : ds.samples) {
    for (int t = 0; t < 3; ++t) EXPECT_EQ(s.frames[t].levels[0], 3 * s.index + t);
    const auto peak = std::max_element(s.audio.begin(), s.audio.end(),
                                       [](float a, float b) { return std::abs(a) < std::abs(b); });
    EXPECT_EQ(peak - s.audio.begin(), watermark_offset(s.index));
    EXPECT_FLOAT_EQ(std::abs(*peak), 1.0f);
  }
}

TEST(Dataset, CountLawUnderExclusions) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    SynthClipOptions o;
    o.seconds = 1.0 + (rng() % 20) / 10.0;
    o.seed = trial;
    for (int i = 0; i < 4; ++i) o.faceless_frames.insert(static_cast<int>(rng() % 60));
    const auto clip = make_synth_clip(o);
    const auto audio = resample_audio(media::to_mono(clip.audio));
    BuildReport rep;
    const auto ds = build_dataset(clip.video, media::to_mono(clip.audio), SidecarDetector(clip.boxes),
                                  DatasetMode::triplet, "c", &rep);
    const std::size_t bound = std::min(audio.samples.size() / 1600, clip.video.frames.size() / 3);
    EXPECT_EQ(rep.candidates, bound);
    std::set<int> hit;
    for (int f : o.faceless_frames)
      if (static_cast<std::size_t>(f / 3) < bound) hit.insert(f / 3);
    EXPECT_EQ(ds.samples.size(), bound - hit.size());
    for (const auto& s : ds.samples) {
      for (float a : s.audio) EXPECT_LE(std::abs(a), 1.0f);
      EXPECT_EQ(hit.count(s.index), 0u);
    }
  }
}

TEST(Dataset, WriteLoadRoundTrip) {
  test::TempDir tmp;
  const auto clip = make_synth_clip({});
  const auto ds = build_dataset(clip.video, media::to_mono(clip.audio), SidecarDetector(clip.boxes),
                                DatasetMode::triplet, "synthetic");
  ASSERT_EQ(ds.samples.size(), 30u);
  write_dataset(ds, tmp / "ds");
  const auto back = load_dataset(tmp / "ds");
  EXPECT_EQ(back.manifest.mode, DatasetMode::triplet);
  EXPECT_EQ(back.manifest.sample_count, 30u);
  EXPECT_EQ(back.manifest.source_id, "synthetic");
  EXPECT_EQ(back.manifest.image_size, 64);
  EXPECT_EQ(back.manifest.sample_rate, 16000);
  EXPECT_EQ(back.samples, ds.samples);
}

TEST(Dataset, BaselineRoundTrip) {
  test::TempDir tmp;
  const auto clip = make_synth_clip({});
  const auto ds = build_dataset(clip.video, media::to_mono(clip.audio), SidecarDetector(clip.boxes),
                                DatasetMode::baseline, "b");
  ASSERT_EQ(ds.samples.size(), 3u);
  write_dataset(ds, tmp / "ds");
  EXPECT_EQ(load_dataset(tmp / "ds").samples, ds.samples);
}

TEST(Dataset, EmptyDataset) {
  test::TempDir tmp;
  Dataset ds;
  ds.manifest.source_id = "none";
  write_dataset(ds, tmp / "ds");
  const auto back = load_dataset(tmp / "ds");
  EXPECT_EQ(back.manifest.sample_count, 0u);
  EXPECT_TRUE(back.samples.empty());
}

TEST(Dataset, LoadErrors) {
  test::TempDir tmp;
  SynthClipOptions o;
  o.seconds = 0.5;
  const auto clip = make_synth_clip(o);
  const auto ds = build_dataset(clip.video, media::to_mono(clip.audio), SidecarDetector(clip.boxes),
                                DatasetMode::triplet, "x");
  write_dataset(ds, tmp / "ds");

  fs::copy(tmp / "ds", tmp / "missing", fs::copy_options::recursive);
  fs::remove(tmp / "missing" / "audio" / "2.f32");
  try {
    load_dataset(tmp / "missing");
    FAIL() << "expected error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("2.f32"), std::string::npos) << e.what();
  }

  fs::copy(tmp / "ds", tmp / "tampered", fs::copy_options::recursive);
  auto bytes = media::read_file(tmp / "tampered" / "audio" / "1.f32");
  bytes[100] ^= 1;
  media::write_file(tmp / "tampered" / "audio" / "1.f32", bytes);
  EXPECT_THROW(load_dataset(tmp / "tampered"), DataError);

  fs::copy(tmp / "ds", tmp / "corrupt", fs::copy_options::recursive);
  std::ofstream(tmp / "corrupt" / "manifest.tsv") << "hello\n";
  EXPECT_THROW(load_dataset(tmp / "corrupt"), DataError);
  EXPECT_THROW(load_dataset(tmp / "absent"), DataError);
}

TEST(Dataset, DeterministicBuild) {
  test::TempDir tmp;
  for (const char* name : {"a", "b"}) {
    SynthClipOptions o;
    o.seed = 4;
    const auto clip = make_synth_clip(o);
    write_synth_clip(clip, tmp / (std::string(name) + ".avi"), tmp / (std::string(name) + ".faces"));
    auto [frames, audio] = ingest_video(tmp / (std::string(name) + ".avi"));
    const auto det = SidecarDetector::load(tmp / (std::string(name) + ".faces"));
    write_dataset(build_dataset(frames, audio, det, DatasetMode::triplet, "clip"), tmp / name);
  }
  EXPECT_EQ(dir_bytes(tmp / "a"), dir_bytes(tmp / "b"));
}

TEST(Sidecar, LoadSaveAndErrors) {
  test::TempDir tmp;
  std::map<int, std::vector<FaceBox>> boxes{{0, {{1, 2, 3, 4}}}, {5, {{0, 0, 9, 9}, {2, 2, 3, 3}}}};
  SidecarDetector::save(tmp / "f.faces", boxes);
  const auto det = SidecarDetector::load(tmp / "f.faces");
  media::RgbFrame f(16, 16);
  EXPECT_EQ(det.detect(f, 5), boxes[5]);
  EXPECT_TRUE(det.detect(f, 3).empty());
  std::ofstream(tmp / "bad.faces") << "# ok\n0 1 2 3\n";
  try {
    SidecarDetector::load(tmp / "bad.faces");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Media, PngRoundTrip) {
  test::TempDir tmp;
  media::RgbFrame f(7, 5);
  std::mt19937 rng(1);
  for (auto& v : f.rgb) v = static_cast<std::uint8_t>(rng());
  media::write_png(tmp / "a.png", f);
  EXPECT_EQ(media::read_png(tmp / "a.png"), f);
}

TEST(Media, WavRoundTrip) {
  test::TempDir tmp;
  media::PcmAudio pcm{22050, 2, {1, -2, 300, -32768, 32767, 0}};
  media::write_wav(tmp / "a.wav", pcm);
  const auto back = media::read_wav(tmp / "a.wav");
  EXPECT_EQ(back.sample_rate, 22050);
  EXPECT_EQ(back.channels, 2);
  EXPECT_EQ(back.interleaved, pcm.interleaved);
}

TEST(HaarDetector, RejectsMissingAndCorruptModels) {
  test::TempDir tmp;
  std::ofstream(tmp / "bad.xml") << "<not a cascade>";
  if (HaarCascadeDetector::available()) {
    EXPECT_THROW(HaarCascadeDetector(tmp / "missing.xml"), DataError);
    EXPECT_THROW(HaarCascadeDetector(tmp / "bad.xml"), DataError);
  } else {
    EXPECT_THROW(HaarCascadeDetector(tmp / "bad.xml"), ConfigError);
  }
}
