#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "s2v/common.hpp"
#include "s2v/tensor.hpp"

namespace s2v {

// RGB (or single-channel) image with float values in [0, 1], HWC row-major.
// Conversion to 8-bit happens only at file boundaries, round-half-up.
class Image {
public:
  Image() = default;
  Image(int h, int w, int c) : h_(h), w_(w), c_(c), data_(size_t(h) * w * c, 0.f) {}

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[(size_t(y) * w_ + x) * c_ + c]; }
  const float& at(int y, int x, int c) const { return data_[(size_t(y) * w_ + x) * c_ + c]; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor to_tensor() const {
    Tensor t({h_, w_, c_});
    std::copy(data_.begin(), data_.end(), t.data());
    return t;
  }

  static Image from_tensor(const Tensor& t) {
    if (t.rank() != 3) throw DataError("Image::from_tensor expects a rank-3 tensor");
    Image img(int(t.dim(0)), int(t.dim(1)), int(t.dim(2)));
    std::copy(t.data(), t.data() + t.numel(), img.data());
    return img;
  }

  // Bilinear sample at real-valued (x, y); coordinates outside the image
  // contribute zeros.
  float sample_bilinear(double x, double y, int c) const {
    const int x0 = int(std::floor(x));
    const int y0 = int(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    auto tap = [&](int yy, int xx) -> double {
      if (yy < 0 || yy >= h_ || xx < 0 || xx >= w_) return 0.0;
      return at(yy, xx, c);
    };
    const double v0 = tap(y0, x0) * (1 - fx) + tap(y0, x0 + 1) * fx;
    const double v1 = tap(y0 + 1, x0) * (1 - fx) + tap(y0 + 1, x0 + 1) * fx;
    return float(v0 * (1 - fy) + v1 * fy);
  }

  void clamp01() {
    for (float& v : data_) v = std::clamp(v, 0.f, 1.f);
  }

private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<float> data_;
};

inline uint8_t to_u8(float v) {
  const double scaled = std::clamp(double(v), 0.0, 1.0) * 255.0;
  return uint8_t(std::floor(scaled + 0.5));
}

inline float from_u8(uint8_t v) { return float(v) / 255.f; }

inline double mean_abs_diff(const Image& a, const Image& b) {
  if (a.size() != b.size()) throw DataError("mean_abs_diff: size mismatch");
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(double(a.vec()[i]) - b.vec()[i]);
  return a.size() ? s / double(a.size()) : 0.0;
}

// PSNR in dB for images in [0, 1].
inline double psnr(const Image& a, const Image& b) {
  if (a.size() != b.size()) throw DataError("psnr: size mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a.vec()[i]) - b.vec()[i];
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse <= 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace s2v
