#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "tavg/media.hpp"

namespace tavg::data {

struct FaceBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const { return static_cast<long long>(w) * h; }
  friend bool operator==(const FaceBox&, const FaceBox&) = default;
};

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  /// Zero or more candidate boxes for the frame at `frame_index`.
  virtual std::vector<FaceBox> detect(const media::RgbFrame& frame, int frame_index) const = 0;
};

/// Reads boxes from an annotation file: one `frame x y w h` line per box,
/// `#` starts a comment. Frames without lines have no face.
class SidecarDetector final : public FaceDetector {
 public:
  explicit SidecarDetector(std::map<int, std::vector<FaceBox>> boxes) : boxes_(std::move(boxes)) {}
  static SidecarDetector load(const std::filesystem::path& path);
  static void save(const std::filesystem::path& path, const std::map<int, std::vector<FaceBox>>& boxes);

  std::vector<FaceBox> detect(const media::RgbFrame& frame, int frame_index) const override;

 private:
  std::map<int, std::vector<FaceBox>> boxes_;
};

/// Haar-cascade detector backed by an external cascade model file. Only
/// available when built with OpenCV; otherwise construction throws.
class HaarCascadeDetector final : public FaceDetector {
 public:
  explicit HaarCascadeDetector(const std::filesystem::path& model_file);
  ~HaarCascadeDetector() override;
  HaarCascadeDetector(HaarCascadeDetector&&) noexcept;
  HaarCascadeDetector& operator=(HaarCascadeDetector&&) noexcept;

  std::vector<FaceBox> detect(const media::RgbFrame& frame, int frame_index) const override;
  static bool available();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Square RGB face crop stored as 8-bit levels in CHW order. A level q maps
/// linearly to q / 127.5 - 1 in [-1, 1], the same mapping used for PNG files.
struct FaceImage {
  int size = 0;
  std::vector<std::uint8_t> levels;

  static Real to_unit(std::uint8_t level) { return static_cast<Real>(level) / 127.5 - 1.0; }
  static std::uint8_t to_level(Real value);

  Real value(int c, int y, int x) const {
    return to_unit(levels[(static_cast<std::size_t>(c) * size + y) * size + x]);
  }
  /// [3, size, size] tensor in [-1, 1].
  Tensor to_tensor() const;
  static FaceImage from_tensor(const Tensor& chw);
  media::RgbFrame to_rgb() const;
  static FaceImage from_rgb(const media::RgbFrame& frame);

  friend bool operator==(const FaceImage&, const FaceImage&) = default;
};

/// Largest-area box wins; ties go to the top-most, then left-most box.
std::optional<FaceBox> select_face(std::vector<FaceBox> boxes, int frame_width, int frame_height);

/// Crops the selected face, resizes bilinearly to out_size x out_size and
/// quantizes to 8-bit levels. Returns nullopt when no face is found.
std::optional<FaceImage> detect_and_crop(const media::RgbFrame& frame, int frame_index,
                                         const FaceDetector& detector, int out_size = 64);

}  // namespace tavg::data
