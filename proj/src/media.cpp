#include "tavg/media.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>

#include "byte_io.hpp"
#include "tavg/errors.hpp"

namespace tavg::media {
namespace {

using detail::ByteReader;
using detail::ByteWriter;

std::size_t dib_row_bytes(int width) { return (static_cast<std::size_t>(width) * 3 + 3) & ~std::size_t{3}; }

void begin_chunk(ByteWriter& w, std::string_view id, std::size_t& size_pos) {
  w.tag(id);
  size_pos = w.size();
  w.u32(0);
}

void end_chunk(ByteWriter& w, std::size_t size_pos) {
  const std::size_t payload = w.size() - size_pos - 4;
  w.patch_u32(size_pos, static_cast<std::uint32_t>(payload));
  if (payload & 1) w.u8(0);
}

void write_pcm_bytes(ByteWriter& w, const PcmAudio& audio, std::size_t first_frame, std::size_t frames) {
  const std::size_t begin = first_frame * audio.channels;
  const std::size_t end = begin + frames * audio.channels;
  for (std::size_t i = begin; i < end; ++i) w.i16(audio.interleaved[i]);
}

struct Chunk {
  std::string id;
  std::size_t data_offset;
  std::size_t size;
};

// Visits every chunk in [begin, end); LIST chunks are passed with their list
// type appended to the id ("LIST" + "movi").
void walk_chunks(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end,
                 const std::string& context, const std::function<void(const Chunk&)>& visit) {
  std::size_t pos = begin;
  while (pos + 8 <= end) {
    ByteReader r(bytes.data() + pos, end - pos, context);
    std::string id = r.tag();
    const std::size_t size = r.u32();
    std::size_t data = pos + 8;
    if (data + size > end) throw DataError(context + ": chunk '" + id + "' extends past end of file");
    if (id == "LIST") {
      if (size < 4) throw DataError(context + ": malformed LIST chunk");
      ByteReader lr(bytes.data() + data, 4, context);
      id += lr.tag();
      visit({id, data + 4, size - 4});
    } else {
      visit({id, data, size});
    }
    pos = data + size + (size & 1);
  }
}

}  // namespace

AudioTrack to_mono(const PcmAudio& pcm) {
  if (pcm.channels <= 0) throw DataError("audio has no channels");
  AudioTrack out;
  out.sample_rate = pcm.sample_rate;
  const std::size_t frames = pcm.frame_count();
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    Real acc = 0;
    for (int c = 0; c < pcm.channels; ++c) acc += pcm.interleaved[i * pcm.channels + c];
    out.samples[i] = acc / (32768.0 * pcm.channels);
  }
  return out;
}

PcmAudio to_pcm(const AudioTrack& track) {
  PcmAudio out;
  out.sample_rate = track.sample_rate;
  out.channels = 1;
  out.interleaved.reserve(track.samples.size());
  for (Real v : track.samples) {
    const Real s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
    out.interleaved.push_back(static_cast<std::int16_t>(s));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void ensure_parent(const std::filesystem::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_avi(const std::filesystem::path& path, const FrameSequence& video, int fps, const PcmAudio& audio) {
  if (fps <= 0) throw ConfigError("write_avi: fps must be positive");
  if (audio.channels <= 0 || audio.sample_rate <= 0) throw ConfigError("write_avi: invalid audio format");
  // Without frames the file carries only the audio stream.
  const bool has_video = !video.frames.empty();
  const std::string audio_id = has_video ? "01wb" : "00wb";
  const int width = has_video ? video.frames.front().width : 0;
  const int height = has_video ? video.frames.front().height : 0;
  for (const auto& f : video.frames) {
    if (f.width != width || f.height != height) throw ConfigError("write_avi: frames differ in size");
  }
  const std::size_t row_bytes = dib_row_bytes(width);
  const std::size_t frame_bytes = row_bytes * height;
  const std::uint32_t block_align = static_cast<std::uint32_t>(audio.channels) * 2;
  const std::size_t total_audio = audio.frame_count();
  const auto frame_count = static_cast<std::uint32_t>(video.frames.size());

  ByteWriter w;
  std::size_t riff_pos, hdrl_pos, strl_pos, chunk_pos, movi_pos, idx_pos;
  begin_chunk(w, "RIFF", riff_pos);
  w.tag("AVI ");

  begin_chunk(w, "LIST", hdrl_pos);
  w.tag("hdrl");
  begin_chunk(w, "avih", chunk_pos);
  w.u32(static_cast<std::uint32_t>(1000000 / fps));
  w.u32(static_cast<std::uint32_t>(frame_bytes * fps + audio.sample_rate * block_align));
  w.u32(0);
  w.u32(0x10);  // AVIF_HASINDEX
  w.u32(frame_count);
  w.u32(0);
  w.u32(has_video ? 2 : 1);
  w.u32(static_cast<std::uint32_t>(frame_bytes));
  w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(height));
  for (int i = 0; i < 4; ++i) w.u32(0);
  end_chunk(w, chunk_pos);

  if (has_video) {
    begin_chunk(w, "LIST", strl_pos);
    w.tag("strl");
    begin_chunk(w, "strh", chunk_pos);
    w.tag("vids");
    w.tag("DIB ");
    w.u32(0);
    w.u16(0);
    w.u16(0);
    w.u32(0);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(fps));
    w.u32(0);
    w.u32(frame_count);
    w.u32(static_cast<std::uint32_t>(frame_bytes));
    w.u32(0xFFFFFFFFu);
    w.u32(0);
    w.i16(0);
    w.i16(0);
    w.i16(static_cast<std::int16_t>(width));
    w.i16(static_cast<std::int16_t>(height));
    end_chunk(w, chunk_pos);
    begin_chunk(w, "strf", chunk_pos);
    w.u32(40);
    w.i32(width);
    w.i32(height);  // positive: bottom-up rows
    w.u16(1);
    w.u16(24);
    w.u32(0);  // BI_RGB
    w.u32(static_cast<std::uint32_t>(frame_bytes));
    w.i32(0);
    w.i32(0);
    w.u32(0);
    w.u32(0);
    end_chunk(w, chunk_pos);
    end_chunk(w, strl_pos);
  }

  begin_chunk(w, "LIST", strl_pos);
  w.tag("strl");
  begin_chunk(w, "strh", chunk_pos);
  w.tag("auds");
  w.u32(0);
  w.u32(0);
  w.u16(0);
  w.u16(0);
  w.u32(0);
  w.u32(block_align);
  w.u32(static_cast<std::uint32_t>(audio.sample_rate) * block_align);
  w.u32(0);
  w.u32(static_cast<std::uint32_t>(total_audio));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate) * block_align);
  w.u32(0xFFFFFFFFu);
  w.u32(block_align);
  for (int i = 0; i < 4; ++i) w.i16(0);
  end_chunk(w, chunk_pos);
  begin_chunk(w, "strf", chunk_pos);
  w.u16(1);  // WAVE_FORMAT_PCM
  w.u16(static_cast<std::uint16_t>(audio.channels));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate) * block_align);
  w.u16(static_cast<std::uint16_t>(block_align));
  w.u16(16);
  w.u16(0);
  end_chunk(w, chunk_pos);
  end_chunk(w, strl_pos);
  end_chunk(w, hdrl_pos);

  struct IndexEntry {
    std::string id;
    std::uint32_t offset, size;
  };
  std::vector<IndexEntry> index;
  begin_chunk(w, "LIST", movi_pos);
  const std::size_t movi_tag = w.size();
  w.tag("movi");
  auto audio_boundary = [&](std::size_t frame) {
    const std::uint64_t b = static_cast<std::uint64_t>(frame) * audio.sample_rate / fps;
    return std::min<std::size_t>(b, total_audio);
  };
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    const RgbFrame& f = video.frames[i];
    index.push_back({"00db", static_cast<std::uint32_t>(w.size() - movi_tag), static_cast<std::uint32_t>(frame_bytes)});
    begin_chunk(w, "00db", chunk_pos);
    for (int y = height - 1; y >= 0; --y) {
      std::size_t written = 0;
      for (int x = 0; x < width; ++x) {
        w.u8(f.at(x, y, 2));
        w.u8(f.at(x, y, 1));
        w.u8(f.at(x, y, 0));
        written += 3;
      }
      for (; written < row_bytes; ++written) w.u8(0);
    }
    end_chunk(w, chunk_pos);

    const std::size_t a0 = audio_boundary(i);
    const std::size_t a1 = i + 1 == video.frames.size() ? total_audio : audio_boundary(i + 1);
    if (a1 > a0) {
      index.push_back({audio_id, static_cast<std::uint32_t>(w.size() - movi_tag),
                       static_cast<std::uint32_t>((a1 - a0) * block_align)});
      begin_chunk(w, audio_id, chunk_pos);
      write_pcm_bytes(w, audio, a0, a1 - a0);
      end_chunk(w, chunk_pos);
    }
  }
  if (!has_video && total_audio > 0) {
    index.push_back({audio_id, static_cast<std::uint32_t>(w.size() - movi_tag),
                     static_cast<std::uint32_t>(total_audio * block_align)});
    begin_chunk(w, audio_id, chunk_pos);
    write_pcm_bytes(w, audio, 0, total_audio);
    end_chunk(w, chunk_pos);
  }
  end_chunk(w, movi_pos);

  begin_chunk(w, "idx1", idx_pos);
  for (const auto& e : index) {
    w.tag(e.id);
    w.u32(0x10);  // AVIIF_KEYFRAME
    w.u32(e.offset);
    w.u32(e.size);
  }
  end_chunk(w, idx_pos);
  end_chunk(w, riff_pos);
  write_file(path, w.bytes());
}

AviContents read_avi(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const std::string ctx = path.string();
  ByteReader head(bytes.data(), bytes.size(), ctx);
  if (bytes.size() < 12 || head.tag() != "RIFF") throw DataError(ctx + ": not a RIFF container");
  const std::size_t riff_end = std::min<std::size_t>(bytes.size(), 8 + static_cast<std::size_t>(head.u32()));
  if (head.tag() != "AVI ") throw DataError(ctx + ": not an AVI file");

  struct Stream {
    std::string type;
    std::uint32_t scale = 0, rate = 0;
    std::optional<Chunk> format;
  };
  std::vector<Stream> streams;
  AviContents out;
  int video_stream = -1, audio_stream = -1;
  int width = 0, height = 0;
  bool top_down = false;

  auto stream_number = [&](const std::string& id) -> int {
    if (id.size() != 4 || !std::isdigit(static_cast<unsigned char>(id[0])) ||
        !std::isdigit(static_cast<unsigned char>(id[1]))) {
      return -1;
    }
    return (id[0] - '0') * 10 + (id[1] - '0');
  };

  auto resolve_streams = [&] {
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const Stream& s = streams[i];
      if (!s.format) continue;
      ByteReader f(bytes.data() + s.format->data_offset, s.format->size, ctx);
      if (s.type == "vids" && video_stream < 0) {
        f.skip(4);
        width = f.i32();
        const int h = f.i32();
        f.skip(2);
        const int bits = f.u16();
        const std::uint32_t compression = f.u32();
        if (compression != 0 || bits != 24) {
          throw DataError(ctx + ": unsupported video codec (only uncompressed 24-bit RGB is decoded)");
        }
        top_down = h < 0;
        height = std::abs(h);
        if (width <= 0 || height <= 0) throw DataError(ctx + ": invalid frame size");
        if (s.scale == 0 || s.rate == 0) throw DataError(ctx + ": video stream has no frame rate");
        out.video.fps = static_cast<double>(s.rate) / s.scale;
        video_stream = static_cast<int>(i);
      } else if (s.type == "auds" && audio_stream < 0) {
        const int tag = f.u16();
        const int channels = f.u16();
        const int rate = static_cast<int>(f.u32());
        f.skip(6);
        const int bits = f.u16();
        if (tag != 1 || bits != 16) throw DataError(ctx + ": unsupported audio codec (only 16-bit PCM)");
        if (channels <= 0 || rate <= 0) throw DataError(ctx + ": invalid audio format");
        out.audio.channels = channels;
        out.audio.sample_rate = rate;
        audio_stream = static_cast<int>(i);
      }
    }
  };

  std::function<void(const Chunk&)> visit_movi = [&](const Chunk& c) {
    if (c.id == "LISTrec ") {
      walk_chunks(bytes, c.data_offset, c.data_offset + c.size, ctx, visit_movi);
      return;
    }
    const int sn = stream_number(c.id);
    if (sn < 0) return;
    if (sn == video_stream && (c.id.substr(2) == "db" || c.id.substr(2) == "dc")) {
      if (c.size == 0) {
        throw DataError(ctx + ": variable frame rate (dropped-frame chunk at frame " +
                        std::to_string(out.video.frames.size()) + ") is not supported");
      }
      const std::size_t row_bytes = dib_row_bytes(width);
      if (c.size < row_bytes * height) throw DataError(ctx + ": truncated video frame");
      RgbFrame frame(width, height);
      const std::uint8_t* p = bytes.data() + c.data_offset;
      for (int r = 0; r < height; ++r) {
        const int y = top_down ? r : height - 1 - r;
        const std::uint8_t* row = p + static_cast<std::size_t>(r) * row_bytes;
        for (int x = 0; x < width; ++x) {
          frame.at(x, y, 0) = row[x * 3 + 2];
          frame.at(x, y, 1) = row[x * 3 + 1];
          frame.at(x, y, 2) = row[x * 3 + 0];
        }
      }
      out.video.frames.push_back(std::move(frame));
    } else if (sn == audio_stream && c.id.substr(2) == "wb") {
      ByteReader a(bytes.data() + c.data_offset, c.size, ctx);
      while (a.remaining() >= 2) out.audio.interleaved.push_back(a.i16());
    }
  };

  std::function<void(const Chunk&)> visit = [&](const Chunk& c) {
    if (c.id == "LISThdrl" || c.id == "LISTstrl") {
      walk_chunks(bytes, c.data_offset, c.data_offset + c.size, ctx, visit);
    } else if (c.id == "strh") {
      if (c.size < 28) throw DataError(ctx + ": malformed stream header");
      ByteReader r(bytes.data() + c.data_offset, c.size, ctx);
      Stream s;
      s.type = r.tag();
      r.skip(16);
      s.scale = r.u32();
      s.rate = r.u32();
      streams.push_back(s);
    } else if (c.id == "strf") {
      if (!streams.empty()) streams.back().format = c;
    } else if (c.id == "LISTmovi") {
      resolve_streams();
      if (video_stream < 0) throw DataError(ctx + ": missing video stream");
      if (audio_stream < 0) throw DataError(ctx + ": missing audio stream");
      walk_chunks(bytes, c.data_offset, c.data_offset + c.size, ctx, visit_movi);
    }
  };
  walk_chunks(bytes, 12, riff_end, ctx, visit);

  if (video_stream < 0) resolve_streams();
  if (video_stream < 0 || out.video.frames.empty()) throw DataError(ctx + ": missing video stream");
  if (audio_stream < 0) throw DataError(ctx + ": missing audio stream");
  return out;
}

PcmAudio read_wav(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const std::string ctx = path.string();
  ByteReader head(bytes.data(), bytes.size(), ctx);
  if (bytes.size() < 12 || head.tag() != "RIFF") throw DataError(ctx + ": not a RIFF container");
  const std::size_t riff_end = std::min<std::size_t>(bytes.size(), 8 + static_cast<std::size_t>(head.u32()));
  if (head.tag() != "WAVE") throw DataError(ctx + ": not a WAV file");
  PcmAudio out;
  bool have_format = false, have_data = false;
  walk_chunks(bytes, 12, riff_end, ctx, [&](const Chunk& c) {
    if (c.id == "fmt ") {
      ByteReader f(bytes.data() + c.data_offset, c.size, ctx);
      const int tag = f.u16();
      out.channels = f.u16();
      out.sample_rate = static_cast<int>(f.u32());
      f.skip(6);
      const int bits = f.u16();
      if (tag != 1 || bits != 16) throw DataError(ctx + ": only 16-bit PCM WAV is supported");
      if (out.channels <= 0 || out.sample_rate <= 0) throw DataError(ctx + ": invalid audio format");
      have_format = true;
    } else if (c.id == "data") {
      if (!have_format) throw DataError(ctx + ": data chunk before fmt chunk");
      ByteReader a(bytes.data() + c.data_offset, c.size, ctx);
      while (a.remaining() >= 2) out.interleaved.push_back(a.i16());
      have_data = true;
    }
  });
  if (!have_format || !have_data) throw DataError(ctx + ": missing fmt or data chunk");
  return out;
}

void write_wav(const std::filesystem::path& path, const PcmAudio& audio) {
  if (audio.channels <= 0 || audio.sample_rate <= 0) throw ConfigError("write_wav: invalid audio format");
  ByteWriter w;
  std::size_t riff_pos, chunk_pos;
  begin_chunk(w, "RIFF", riff_pos);
  w.tag("WAVE");
  begin_chunk(w, "fmt ", chunk_pos);
  w.u16(1);
  w.u16(static_cast<std::uint16_t>(audio.channels));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate));
  w.u32(static_cast<std::uint32_t>(audio.sample_rate * audio.channels * 2));
  w.u16(static_cast<std::uint16_t>(audio.channels * 2));
  w.u16(16);
  end_chunk(w, chunk_pos);
  begin_chunk(w, "data", chunk_pos);
  for (auto s : audio.interleaved) w.i16(s);
  end_chunk(w, chunk_pos);
  end_chunk(w, riff_pos);
  write_file(path, w.bytes());
}

RgbFrame read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbFrame frame(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, frame.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return frame;
}

void write_png(const std::filesystem::path& path, const RgbFrame& frame) {
  if (frame.width <= 0 || frame.height <= 0 ||
      frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3) {
    throw ConfigError("write_png: malformed image");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, frame.rgb.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace tavg::media
