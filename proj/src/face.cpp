#include "tavg/face.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tavg/errors.hpp"

namespace tavg::data {

SidecarDetector SidecarDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read annotation file " + path.string());
  std::map<int, std::vector<FaceBox>> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    int frame;
    FaceBox b;
    if (!(fields >> frame)) continue;
    std::string extra;
    if (!(fields >> b.x >> b.y >> b.w >> b.h) || (fields >> extra)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'frame x y w h'");
    }
    if (frame < 0 || b.w <= 0 || b.h <= 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": invalid face box");
    }
    boxes[frame].push_back(b);
  }
  return SidecarDetector(std::move(boxes));
}

void SidecarDetector::save(const std::filesystem::path& path, const std::map<int, std::vector<FaceBox>>& boxes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write annotation file " + path.string());
  out << "# frame x y w h\n";
  for (const auto& [frame, list] : boxes) {
    for (const auto& b : list) out << frame << ' ' << b.x << ' ' << b.y << ' ' << b.w << ' ' << b.h << '\n';
  }
}

std::vector<FaceBox> SidecarDetector::detect(const media::RgbFrame&, int frame_index) const {
  const auto it = boxes_.find(frame_index);
  return it == boxes_.end() ? std::vector<FaceBox>{} : it->second;
}

std::uint8_t FaceImage::to_level(Real value) {
  const Real q = std::round((std::clamp(value, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(q);
}

Tensor FaceImage::to_tensor() const {
  Tensor t({3, size, size});
  for (std::size_t i = 0; i < levels.size(); ++i) t[i] = to_unit(levels[i]);
  return t;
}

FaceImage FaceImage::from_tensor(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3 || chw.dim(1) != chw.dim(2)) {
    throw ConfigError("face image tensor must be [3, S, S], got " + shape_string(chw.shape()));
  }
  FaceImage img;
  img.size = chw.dim(1);
  img.levels.resize(chw.size());
  for (std::size_t i = 0; i < chw.size(); ++i) img.levels[i] = to_level(chw[i]);
  return img;
}

media::RgbFrame FaceImage::to_rgb() const {
  media::RgbFrame f(size, size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) f.at(x, y, c) = levels[(static_cast<std::size_t>(c) * size + y) * size + x];
  return f;
}

FaceImage FaceImage::from_rgb(const media::RgbFrame& frame) {
  if (frame.width != frame.height) throw DataError("face image must be square");
  FaceImage img;
  img.size = frame.width;
  img.levels.resize(static_cast<std::size_t>(3) * img.size * img.size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.size; ++y)
      for (int x = 0; x < img.size; ++x)
        img.levels[(static_cast<std::size_t>(c) * img.size + y) * img.size + x] = frame.at(x, y, c);
  return img;
}

std::optional<FaceBox> select_face(std::vector<FaceBox> boxes, int frame_width, int frame_height) {
  std::optional<FaceBox> best;
  for (FaceBox b : boxes) {
    // Clip to the frame; boxes that vanish are ignored.
    const int x0 = std::max(b.x, 0), y0 = std::max(b.y, 0);
    const int x1 = std::min(b.x + b.w, frame_width), y1 = std::min(b.y + b.h, frame_height);
    if (x1 <= x0 || y1 <= y0) continue;
    b = {x0, y0, x1 - x0, y1 - y0};
    if (!best || b.area() > best->area() ||
        (b.area() == best->area() && (b.y < best->y || (b.y == best->y && b.x < best->x)))) {
      best = b;
    }
  }
  return best;
}

std::optional<FaceImage> detect_and_crop(const media::RgbFrame& frame, int frame_index,
                                         const FaceDetector& detector, int out_size) {
  if (out_size <= 0) throw ConfigError("crop size must be positive");
  const auto box = select_face(detector.detect(frame, frame_index), frame.width, frame.height);
  if (!box) return std::nullopt;

  FaceImage img;
  img.size = out_size;
  img.levels.resize(static_cast<std::size_t>(3) * out_size * out_size);
  const Real sx = static_cast<Real>(box->w) / out_size;
  const Real sy = static_cast<Real>(box->h) / out_size;
  for (int oy = 0; oy < out_size; ++oy) {
    // Half-pixel centers, clamped to the box.
    const Real fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<Real>(box->h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, box->h - 1);
    const Real wy = fy - y0;
    for (int ox = 0; ox < out_size; ++ox) {
      const Real fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<Real>(box->w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, box->w - 1);
      const Real wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const Real top = (1 - wx) * frame.at(box->x + x0, box->y + y0, c) + wx * frame.at(box->x + x1, box->y + y0, c);
        const Real bot = (1 - wx) * frame.at(box->x + x0, box->y + y1, c) + wx * frame.at(box->x + x1, box->y + y1, c);
        const Real v = (1 - wy) * top + wy * bot;
        img.levels[(static_cast<std::size_t>(c) * out_size + oy) * out_size + ox] =
            static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace tavg::data
