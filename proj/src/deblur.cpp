#include "s2v/deblur.hpp"

#include <cmath>

namespace s2v::deblur {

namespace {

// reflect-101 index (mirror about the edge sample)
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

Image synth_blur(const Image& img, double sigma) {
  if (sigma < 0) throw DataError("synth_blur: sigma must be non-negative");
  if (sigma == 0) return img;

  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[size_t(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[size_t(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  const int h = img.height(), w = img.width(), c = img.channels();
  Image tmp(h, w, c), out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[size_t(i + radius)] * img.at(y, reflect(x + i, w), ch);
        tmp.at(y, x, ch) = float(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[size_t(i + radius)] * tmp.at(reflect(y + i, h), x, ch);
        out.at(y, x, ch) = float(acc);
      }
  return out;
}

}  // namespace s2v::deblur
