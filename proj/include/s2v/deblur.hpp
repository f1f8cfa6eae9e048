#pragma once

#include "s2v/image.hpp"
#include "s2v/layers.hpp"

namespace s2v::deblur {

struct DeblurConfig {
  int hidden_channels = 64;
  static constexpr int kConvLayers = 10;  // 9 hidden 3x3 + final 3-channel projection
};

// Gaussian blur, std `sigma`, kernel truncated at 3*sigma, reflect padding.
// sigma == 0 returns the image unchanged.
Image synth_blur(const Image& img, double sigma);

// Residual sharpening stack: out = clamp(x + residual(x), 0, 1). The final
// projection starts at zero, so a fresh net is an exact pass-through.
template <class T>
class DeblurNet {
public:
  explicit DeblurNet(const DeblurConfig& cfg = {}) : cfg_(cfg) {
    const int c = cfg.hidden_channels;
    seq_.template add<net::Conv2d<T>>("conv1", 3, c, 3, 3, 1, 1, 1, 1);
    seq_.template add<net::ReLU<T>>("relu1");
    for (int i = 2; i <= 9; ++i) {
      seq_.template add<net::Conv2d<T>>("conv" + std::to_string(i), c, c, 3, 3, 1, 1, 1, 1);
      seq_.template add<net::ReLU<T>>("relu" + std::to_string(i));
    }
    final_ = seq_.template add<net::Conv2d<T>>("conv10", c, 3, 3, 3, 1, 1, 1, 1);
  }

  const DeblurConfig& config() const { return cfg_; }
  static constexpr int conv_layer_count() { return DeblurConfig::kConvLayers; }

  TensorT<T> forward(const TensorT<T>& x, net::RunMode mode) {
    if (x.rank() != 4 || x.dim(3) != 3)
      throw DataError("deblur: expected (N,H,W,3), got " + x.shape_str());
    TensorT<T> res = seq_.forward(x, mode);
    TensorT<T> y(x.shape());
    pass_.assign(size_t(x.numel()), uint8_t(0));
    for (int64_t i = 0; i < x.numel(); ++i) {
      const T pre = x[i] + res[i];
      const T clamped = std::clamp(pre, T(0), T(1));
      y[i] = clamped;
      pass_[size_t(i)] = (pre >= T(0) && pre <= T(1)) ? 1 : 0;
    }
    return y;
  }

  // Returns the gradient w.r.t. the input (residual plus identity path).
  TensorT<T> backward(const TensorT<T>& gy) {
    TensorT<T> g(gy.shape());
    for (int64_t i = 0; i < gy.numel(); ++i)
      g[i] = pass_[size_t(i)] ? gy[i] : T(0);
    TensorT<T> gx = seq_.backward(g);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g[i];
    return gx;
  }

  void visit_params(const net::ParamVisitor<T>& v) { seq_.visit_params("", v); }

  std::vector<uint64_t> branch_signature() const {
    std::vector<uint64_t> sig;
    seq_.append_branch_signature(sig);
    sig.push_back(fnv1a64(pass_.data(), pass_.size()));  // clamp corners
    return sig;
  }

  void zero_grads() {
    visit_params([](const net::ParamRef<T>& p) {
      if (p.grad) std::fill(p.grad->vec().begin(), p.grad->vec().end(), T(0));
    });
  }

  void init(uint64_t seed) {
    Rng rng(seed);
    seq_.init_params(rng);
    // zero residual head: a freshly initialized net must be the identity
    std::fill(final_->weight().vec().begin(), final_->weight().vec().end(), T(0));
    std::fill(final_->bias().vec().begin(), final_->bias().vec().end(), T(0));
  }

  net::NamedTensorMap<T> export_params() {
    net::NamedTensorMap<T> out;
    visit_params([&](const net::ParamRef<T>& p) { out[p.name] = *p.value; });
    return out;
  }

  void import_params(const net::NamedTensorMap<T>& params) {
    visit_params([&](const net::ParamRef<T>& p) {
      auto it = params.find(p.name);
      if (it == params.end()) throw DataError("deblur checkpoint missing " + p.name);
      if (it->second.shape() != p.value->shape())
        throw DataError("deblur parameter shape mismatch for " + p.name);
      *p.value = it->second;
    });
  }

private:
  DeblurConfig cfg_;
  net::Seq<T> seq_;
  net::Conv2d<T>* final_ = nullptr;
  std::vector<uint8_t> pass_;
};

// Convenience single-image entry point.
template <class T>
Image deblur_image(const Image& img, DeblurNet<T>& net) {
  if (img.channels() != 3) throw DataError("deblur: expected a 3-channel image");
  TensorT<T> x({1, img.height(), img.width(), 3});
  for (size_t i = 0; i < img.size(); ++i) x[int64_t(i)] = T(img.vec()[i]);
  TensorT<T> y = net.forward(x, net::RunMode::Eval);
  Image out(img.height(), img.width(), 3);
  for (size_t i = 0; i < out.size(); ++i) out.vec()[i] = float(y[int64_t(i)]);
  return out;
}

}  // namespace s2v::deblur
