#include "tavg/errors.hpp"
#include "tavg/face.hpp"

#ifdef TAVG_HAVE_OPENCV
#include <opencv2/imgproc.hpp>
#include <opencv2/objdetect.hpp>
#endif

namespace tavg::data {

#ifdef TAVG_HAVE_OPENCV

struct HaarCascadeDetector::Impl {
  mutable cv::CascadeClassifier cascade;
};

HaarCascadeDetector::HaarCascadeDetector(const std::filesystem::path& model_file)
    : impl_(std::make_unique<Impl>()) {
  if (!std::filesystem::exists(model_file)) {
    throw DataError("Haar cascade model not found: " + model_file.string());
  }
  bool loaded = false;
  try {
    loaded = impl_->cascade.load(model_file.string());
  } catch (const cv::Exception& e) {
    throw DataError("cannot load Haar cascade model " + model_file.string() + ": " + e.what());
  }
  if (!loaded) throw DataError("cannot load Haar cascade model " + model_file.string());
}

std::vector<FaceBox> HaarCascadeDetector::detect(const media::RgbFrame& frame, int) const {
  cv::Mat rgb(frame.height, frame.width, CV_8UC3, const_cast<std::uint8_t*>(frame.rgb.data()));
  cv::Mat gray;
  cv::cvtColor(rgb, gray, cv::COLOR_RGB2GRAY);
  cv::equalizeHist(gray, gray);
  std::vector<cv::Rect> found;
  impl_->cascade.detectMultiScale(gray, found, 1.1, 3, 0, cv::Size(24, 24));
  std::vector<FaceBox> out;
  for (const auto& r : found) out.push_back({r.x, r.y, r.width, r.height});
  return out;
}

bool HaarCascadeDetector::available() { return true; }

#else

struct HaarCascadeDetector::Impl {};

HaarCascadeDetector::HaarCascadeDetector(const std::filesystem::path&) {
  throw ConfigError("Haar cascade detection requires a build with OpenCV");
}

std::vector<FaceBox> HaarCascadeDetector::detect(const media::RgbFrame&, int) const { return {}; }

bool HaarCascadeDetector::available() { return false; }

#endif

HaarCascadeDetector::~HaarCascadeDetector() = default;
HaarCascadeDetector::HaarCascadeDetector(HaarCascadeDetector&&) noexcept = default;
HaarCascadeDetector& HaarCascadeDetector::operator=(HaarCascadeDetector&&) noexcept = default;

}  // namespace tavg::data
