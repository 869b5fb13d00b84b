#include "tavg/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tavg/errors.hpp"

namespace tavg::data {
namespace {

constexpr Real kKaiserBeta = 9.0;
constexpr int kHalfTaps = 48;       // zero crossings of the kernel on each side, at the lower rate
constexpr Real kRolloff = 0.94;     // cutoff as a fraction of the lower Nyquist frequency

Real bessel_i0(Real x) {
  Real sum = 1.0, term = 1.0;
  const Real q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<Real>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

Real sinc(Real x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const Real px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Sample with odd reflection about both end points.
Real extended(const std::vector<Real>& x, long long i) {
  const long long n = static_cast<long long>(x.size());
  if (i < 0) {
    const long long m = std::min(-i, n - 1);
    return 2.0 * x[0] - x[static_cast<std::size_t>(m)];
  }
  if (i >= n) {
    const long long m = std::max(n - 1 - (i - (n - 1)), 0LL);
    return 2.0 * x[static_cast<std::size_t>(n - 1)] - x[static_cast<std::size_t>(m)];
  }
  return x[static_cast<std::size_t>(i)];
}

}  // namespace

media::AudioTrack resample_audio(const media::AudioTrack& track, int target_rate) {
  if (target_rate <= 0) throw ConfigError("resample: target_rate must be positive");
  if (track.sample_rate <= 0) throw ConfigError("resample: source sample_rate must be positive");
  if (track.sample_rate == target_rate) return track;

  media::AudioTrack out;
  out.sample_rate = target_rate;
  const auto src_len = static_cast<long long>(track.samples.size());
  const Real ratio = static_cast<Real>(target_rate) / track.sample_rate;
  const auto out_len = static_cast<long long>(std::llround(static_cast<Real>(src_len) * ratio));
  out.samples.resize(static_cast<std::size_t>(out_len));
  if (src_len == 0) return out;

  // Cutoff in cycles per source sample; kernel support in source samples.
  const Real cutoff = 0.5 * std::min(1.0, ratio) * kRolloff;
  const Real half_width = kHalfTaps / std::min(1.0, ratio);
  const Real i0_beta = bessel_i0(kKaiserBeta);

  for (long long i = 0; i < out_len; ++i) {
    const Real t = static_cast<Real>(i) / ratio;
    const auto lo = static_cast<long long>(std::ceil(t - half_width));
    const auto hi = static_cast<long long>(std::floor(t + half_width));
    Real acc = 0.0;
    for (long long j = lo; j <= hi; ++j) {
      const Real d = t - static_cast<Real>(j);
      const Real r = d / half_width;
      if (std::abs(r) > 1.0) continue;
      const Real window = bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      acc += extended(track.samples, j) * 2.0 * cutoff * sinc(2.0 * cutoff * d) * window;
    }
    out.samples[static_cast<std::size_t>(i)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

}  // namespace tavg::data
