#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "s2v/common.hpp"
#include "s2v/tensor.hpp"

namespace s2v::net {

enum class RunMode { Train, Eval };

template <class T>
struct ParamRef {
  std::string name;
  TensorT<T>* value = nullptr;
  TensorT<T>* grad = nullptr;  // null for non-trainable buffers
  bool trainable = true;
};

template <class T>
using ParamVisitor = std::function<void(const ParamRef<T>&)>;

template <class T>
using NamedTensorMap = std::map<std::string, TensorT<T>>;

template <class T>
using TraceFn = std::function<void(const std::string&, const TensorT<T>&)>;

// Patch-gather geometry shared by convolution and its transpose: `img` is the
// dense side, `grid` the patch-center side.
struct ConvGeom {
  int img_h = 0, img_w = 0, ch = 0;
  int grid_h = 0, grid_w = 0;
  int kh = 0, kw = 0, sh = 1, sw = 1, ph = 0, pw = 0;

  int patch() const { return kh * kw * ch; }

  static ConvGeom make(int img_h, int img_w, int ch, int kh, int kw, int sh, int sw,
                       int ph, int pw) {
    ConvGeom g;
    g.img_h = img_h;
    g.img_w = img_w;
    g.ch = ch;
    g.kh = kh;
    g.kw = kw;
    g.sh = sh;
    g.sw = sw;
    g.ph = ph;
    g.pw = pw;
    g.grid_h = (img_h + 2 * ph - kh) / sh + 1;
    g.grid_w = (img_w + 2 * pw - kw) / sw + 1;
    if (g.grid_h < 1 || g.grid_w < 1) throw DataError("conv geometry collapses to zero");
    return g;
  }
};

// Gathers patches of img samples [n0, n1) into cols ((n1-n0)*grid, patch).
template <class T>
void im2col(const TensorT<T>& img, const ConvGeom& g, int64_t n0, int64_t n1,
            TensorT<T>& cols) {
  const int64_t grid = int64_t(g.grid_h) * g.grid_w;
  cols = TensorT<T>({(n1 - n0) * grid, g.patch()});
  T* out = cols.data();
  const T* base = img.data();
  const int64_t img_row = int64_t(g.img_w) * g.ch;
  const int64_t img_plane = int64_t(g.img_h) * img_row;
  for (int64_t n = n0; n < n1; ++n) {
    const T* im = base + n * img_plane;
    for (int gy = 0; gy < g.grid_h; ++gy) {
      for (int gx = 0; gx < g.grid_w; ++gx) {
        const int iy0 = gy * g.sh - g.ph;
        const int ix0 = gx * g.sw - g.pw;
        for (int dy = 0; dy < g.kh; ++dy) {
          const int iy = iy0 + dy;
          T* dst = out + int64_t(dy) * g.kw * g.ch;
          if (iy < 0 || iy >= g.img_h) {
            std::fill(dst, dst + int64_t(g.kw) * g.ch, T(0));
            continue;
          }
          const int dx_lo = std::max(0, -ix0);
          const int dx_hi = std::min(g.kw, g.img_w - ix0);
          if (dx_lo > 0) std::fill(dst, dst + int64_t(dx_lo) * g.ch, T(0));
          if (dx_hi < g.kw)
            std::fill(dst + int64_t(dx_hi) * g.ch, dst + int64_t(g.kw) * g.ch, T(0));
          if (dx_lo < dx_hi) {
            const T* src = im + int64_t(iy) * img_row + int64_t(ix0 + dx_lo) * g.ch;
            std::copy(src, src + int64_t(dx_hi - dx_lo) * g.ch, dst + int64_t(dx_lo) * g.ch);
          }
        }
        out += g.patch();
      }
    }
  }
}

// Adjoint of im2col: scatter-adds cols back into img samples [n0, n1).
template <class T>
void col2im_add(const TensorT<T>& cols, const ConvGeom& g, int64_t n0, int64_t n1,
                TensorT<T>& img) {
  const T* in = cols.data();
  T* base = img.data();
  const int64_t img_row = int64_t(g.img_w) * g.ch;
  const int64_t img_plane = int64_t(g.img_h) * img_row;
  for (int64_t n = n0; n < n1; ++n) {
    T* im = base + n * img_plane;
    for (int gy = 0; gy < g.grid_h; ++gy) {
      for (int gx = 0; gx < g.grid_w; ++gx) {
        const int iy0 = gy * g.sh - g.ph;
        const int ix0 = gx * g.sw - g.pw;
        for (int dy = 0; dy < g.kh; ++dy) {
          const int iy = iy0 + dy;
          if (iy < 0 || iy >= g.img_h) continue;
          const int dx_lo = std::max(0, -ix0);
          const int dx_hi = std::min(g.kw, g.img_w - ix0);
          const T* src = in + (int64_t(dy) * g.kw + dx_lo) * g.ch;
          T* dst = im + int64_t(iy) * img_row + int64_t(ix0 + dx_lo) * g.ch;
          for (int64_t i = 0; i < int64_t(dx_hi - dx_lo) * g.ch; ++i) dst[i] += src[i];
        }
        in += g.patch();
      }
    }
  }
}

template <class T>
class Layer {
public:
  virtual ~Layer() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, RunMode mode) = 0;
  virtual TensorT<T> backward(const TensorT<T>& gy) = 0;
  virtual void visit_params(const std::string& prefix, const ParamVisitor<T>& v) {}
  virtual void commit_running_stats() {}
  virtual void init_params(Rng& rng) {}
  // Hash of the piecewise-linear branch taken by the last forward (ReLU sign
  // patterns, pool argmax choices). Finite-difference probes compare these to
  // reject samples that straddle a kink.
  virtual void append_branch_signature(std::vector<uint64_t>& sig) const {}
};

template <class T>
void he_fill(TensorT<T>& w, int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / double(fan_in));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = T(rng.normal() * std);
}

namespace detail {
// im2col buffers are capped at ~32 MB; larger batches run in sample chunks.
inline constexpr int64_t kMaxColsFloats = int64_t(8) * 1024 * 1024;

inline int64_t chunk_samples(int64_t rows_per_sample, int64_t patch) {
  const int64_t per_sample = rows_per_sample * patch;
  return std::max<int64_t>(1, kMaxColsFloats / std::max<int64_t>(1, per_sample));
}
}  // namespace detail

template <class T>
class Conv2d : public Layer<T> {
public:
  Conv2d(int in_ch, int out_ch, int kh, int kw, int sh = 1, int sw = 1, int ph = 0,
         int pw = 0)
      : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(ph), pw_(pw) {
    w_ = TensorT<T>({out_ch, kh, kw, in_ch});
    b_ = TensorT<T>({out_ch});
    gw_ = TensorT<T>(w_.shape());
    gb_ = TensorT<T>(b_.shape());
  }

  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    if (x.rank() != 4 || x.dim(3) != in_ch_)
      throw DataError("conv: expected input with " + std::to_string(in_ch_) + " channels, got " +
                      x.shape_str());
    x_ = x;
    const auto g = geom(x);
    const int64_t n = x.dim(0);
    const int64_t grid = int64_t(g.grid_h) * g.grid_w;
    TensorT<T> y({n, g.grid_h, g.grid_w, out_ch_});
    auto wm = w_.as_matrix(out_ch_, g.patch());
    auto bm = b_.as_matrix(1, out_ch_);
    const int64_t step = detail::chunk_samples(grid, g.patch());
    TensorT<T> cols;
    for (int64_t n0 = 0; n0 < n; n0 += step) {
      const int64_t n1 = std::min(n, n0 + step);
      im2col(x, g, n0, n1, cols);
      auto cm = cols.as_matrix((n1 - n0) * grid, g.patch());
      typename TensorT<T>::MatrixMap ym(y.data() + n0 * grid * out_ch_, (n1 - n0) * grid,
                                        out_ch_);
      ym.noalias() = cm * wm.transpose();
      ym.rowwise() += bm.row(0);
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) override {
    const auto g = geom(x_);
    const int64_t n = x_.dim(0);
    const int64_t grid = int64_t(g.grid_h) * g.grid_w;
    TensorT<T> gx(x_.shape());
    auto wm = w_.as_matrix(out_ch_, g.patch());
    auto gwm = gw_.as_matrix(out_ch_, g.patch());
    auto gbm = gb_.as_matrix(1, out_ch_);
    const int64_t step = detail::chunk_samples(grid, g.patch());
    TensorT<T> cols, dcols({1, 1});
    for (int64_t n0 = 0; n0 < n; n0 += step) {
      const int64_t n1 = std::min(n, n0 + step);
      im2col(x_, g, n0, n1, cols);
      auto cm = cols.as_matrix((n1 - n0) * grid, g.patch());
      typename TensorT<T>::ConstMatrixMap gym(gy.data() + n0 * grid * out_ch_,
                                              (n1 - n0) * grid, out_ch_);
      gwm.noalias() += gym.transpose() * cm;
      gbm.row(0) += gym.colwise().sum();
      dcols = TensorT<T>({(n1 - n0) * grid, g.patch()});
      auto dcm = dcols.as_matrix((n1 - n0) * grid, g.patch());
      dcm.noalias() = gym * wm;
      col2im_add(dcols, g, n0, n1, gx);
    }
    return gx;
  }

  void visit_params(const std::string& prefix, const ParamVisitor<T>& v) override {
    v({prefix + ".w", &w_, &gw_, true});
    v({prefix + ".b", &b_, &gb_, true});
  }

  void init_params(Rng& rng) override {
    he_fill(w_, int64_t(kh_) * kw_ * in_ch_, rng);
    std::fill(b_.vec().begin(), b_.vec().end(), T(0));
  }

  TensorT<T>& weight() { return w_; }
  TensorT<T>& bias() { return b_; }
  int in_channels() const { return in_ch_; }

private:
  ConvGeom geom(const TensorT<T>& x) const {
    return ConvGeom::make(int(x.dim(1)), int(x.dim(2)), in_ch_, kh_, kw_, sh_, sw_, ph_, pw_);
  }

  int in_ch_, out_ch_, kh_, kw_, sh_, sw_, ph_, pw_;
  TensorT<T> w_, b_, gw_, gb_, x_;
};

template <class T>
class ConvTranspose2d : public Layer<T> {
public:
  ConvTranspose2d(int in_ch, int out_ch, int kh, int kw, int sh = 1, int sw = 1, int ph = 0,
                  int pw = 0)
      : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(ph), pw_(pw) {
    w_ = TensorT<T>({in_ch, kh, kw, out_ch});
    b_ = TensorT<T>({out_ch});
    gw_ = TensorT<T>(w_.shape());
    gb_ = TensorT<T>(b_.shape());
  }

  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    if (x.rank() != 4 || x.dim(3) != in_ch_)
      throw DataError("tconv: expected input with " + std::to_string(in_ch_) +
                      " channels, got " + x.shape_str());
    x_ = x;
    const int64_t n = x.dim(0);
    const int oh = int(x.dim(1) - 1) * sh_ + kh_ - 2 * ph_;
    const int ow = int(x.dim(2) - 1) * sw_ + kw_ - 2 * pw_;
    const auto g = ConvGeom::make(oh, ow, out_ch_, kh_, kw_, sh_, sw_, ph_, pw_);
    const int64_t grid = int64_t(g.grid_h) * g.grid_w;  // == input spatial size
    TensorT<T> y({n, oh, ow, out_ch_});
    auto wm = w_.as_matrix(in_ch_, g.patch());
    const int64_t step = detail::chunk_samples(grid, g.patch());
    TensorT<T> cols;
    for (int64_t n0 = 0; n0 < n; n0 += step) {
      const int64_t n1 = std::min(n, n0 + step);
      typename TensorT<T>::ConstMatrixMap xm(x.data() + n0 * grid * in_ch_, (n1 - n0) * grid,
                                             in_ch_);
      cols = TensorT<T>({(n1 - n0) * grid, g.patch()});
      auto cm = cols.as_matrix((n1 - n0) * grid, g.patch());
      cm.noalias() = xm * wm;
      col2im_add(cols, g, n0, n1, y);
    }
    auto bm = b_.as_matrix(1, out_ch_);
    auto ym = y.as_matrix(n * oh * ow, out_ch_);
    ym.rowwise() += bm.row(0);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) override {
    const int64_t n = x_.dim(0);
    const auto g = ConvGeom::make(int(gy.dim(1)), int(gy.dim(2)), out_ch_, kh_, kw_, sh_, sw_,
                                  ph_, pw_);
    const int64_t grid = int64_t(g.grid_h) * g.grid_w;
    TensorT<T> gx(x_.shape());
    auto wm = w_.as_matrix(in_ch_, g.patch());
    auto gwm = gw_.as_matrix(in_ch_, g.patch());
    auto gbm = gb_.as_matrix(1, out_ch_);
    {
      auto gym = gy.as_matrix(n * gy.dim(1) * gy.dim(2), out_ch_);
      gbm.row(0) += gym.colwise().sum();
    }
    const int64_t step = detail::chunk_samples(grid, g.patch());
    TensorT<T> dcols;
    for (int64_t n0 = 0; n0 < n; n0 += step) {
      const int64_t n1 = std::min(n, n0 + step);
      im2col(gy, g, n0, n1, dcols);
      auto dcm = dcols.as_matrix((n1 - n0) * grid, g.patch());
      typename TensorT<T>::ConstMatrixMap xm(x_.data() + n0 * grid * in_ch_, (n1 - n0) * grid,
                                             in_ch_);
      typename TensorT<T>::MatrixMap gxm(gx.data() + n0 * grid * in_ch_, (n1 - n0) * grid,
                                         in_ch_);
      gwm.noalias() += xm.transpose() * dcm;
      gxm.noalias() = dcm * wm.transpose();
    }
    return gx;
  }

  void visit_params(const std::string& prefix, const ParamVisitor<T>& v) override {
    v({prefix + ".w", &w_, &gw_, true});
    v({prefix + ".b", &b_, &gb_, true});
  }

  void init_params(Rng& rng) override {
    he_fill(w_, int64_t(kh_) * kw_ * in_ch_, rng);
    std::fill(b_.vec().begin(), b_.vec().end(), T(0));
  }

private:
  int in_ch_, out_ch_, kh_, kw_, sh_, sw_, ph_, pw_;
  TensorT<T> w_, b_, gw_, gb_, x_;
};

// Max pooling with explicit per-side padding; padded taps never win.
template <class T>
class MaxPool2d : public Layer<T> {
public:
  MaxPool2d(int kh, int kw, int sh, int sw, int ph0 = 0, int ph1 = 0, int pw0 = 0, int pw1 = 0)
      : kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph0_(ph0), ph1_(ph1), pw0_(pw0), pw1_(pw1) {}

  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    in_shape_ = x.shape();
    const int64_t n = x.dim(0), ih = x.dim(1), iw = x.dim(2), c = x.dim(3);
    const int oh = int(ih + ph0_ + ph1_ - kh_) / sh_ + 1;
    const int ow = int(iw + pw0_ + pw1_ - kw_) / sw_ + 1;
    TensorT<T> y({n, oh, ow, c});
    argmax_.assign(size_t(y.numel()), -1);
    for (int64_t nn = 0; nn < n; ++nn)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int64_t cc = 0; cc < c; ++cc) {
            T best = std::numeric_limits<T>::lowest();
            int64_t best_idx = -1;
            for (int dy = 0; dy < kh_; ++dy) {
              const int iy = oy * sh_ - ph0_ + dy;
              if (iy < 0 || iy >= ih) continue;
              for (int dx = 0; dx < kw_; ++dx) {
                const int ix = ox * sw_ - pw0_ + dx;
                if (ix < 0 || ix >= iw) continue;
                const T v = x.at(nn, iy, ix, cc);
                if (v > best) {
                  best = v;
                  best_idx = ((nn * ih + iy) * iw + ix) * c + cc;
                }
              }
            }
            y.at(nn, oy, ox, cc) = best_idx >= 0 ? best : T(0);
            argmax_[size_t(((nn * oh + oy) * ow + ox) * c + cc)] = best_idx;
          }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) override {
    TensorT<T> gx(in_shape_);
    for (int64_t i = 0; i < gy.numel(); ++i) {
      const int64_t src = argmax_[size_t(i)];
      if (src >= 0) gx[src] += gy[i];
    }
    return gx;
  }

  void append_branch_signature(std::vector<uint64_t>& sig) const override {
    sig.push_back(fnv1a64(argmax_.data(), argmax_.size() * sizeof(int64_t)));
  }

private:
  int kh_, kw_, sh_, sw_, ph0_, ph1_, pw0_, pw1_;
  std::vector<int64_t> argmax_;
  std::vector<int64_t> in_shape_;
};

// Per-channel batch normalization over all leading axes. Batch statistics
// drive training-mode normalization; running statistics are folded in only
// when commit_running_stats() is called, so a forward pass alone never
// mutates state.
template <class T>
class BatchNorm : public Layer<T> {
public:
  explicit BatchNorm(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(T(eps)), momentum_(T(momentum)) {
    gamma_ = TensorT<T>::full({channels}, T(1));
    beta_ = TensorT<T>({channels});
    g_gamma_ = TensorT<T>({channels});
    g_beta_ = TensorT<T>({channels});
    run_mean_ = TensorT<T>({channels});
    run_var_ = TensorT<T>::full({channels}, T(1));
  }

  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    if (x.dim(x.rank() - 1) != c_) throw DataError("batchnorm: channel mismatch");
    const int64_t rows = x.numel() / c_;
    TensorT<T> y(x.shape());
    auto xm = x.as_matrix(rows, c_);
    auto ym = y.as_matrix(rows, c_);
    if (mode == RunMode::Train) {
      mean_ = TensorT<T>({c_});
      invstd_ = TensorT<T>({c_});
      batch_var_ = TensorT<T>({c_});
      auto mm = mean_.as_matrix(1, c_);
      auto vm = batch_var_.as_matrix(1, c_);
      mm.row(0) = xm.colwise().mean();
      vm.row(0) = (xm.rowwise() - mm.row(0)).array().square().colwise().mean();
      for (int64_t i = 0; i < c_; ++i)
        invstd_[i] = T(1) / std::sqrt(batch_var_[i] + eps_);
      xhat_ = TensorT<T>(x.shape());
      auto hm = xhat_.as_matrix(rows, c_);
      auto ivm = invstd_.as_matrix(1, c_);
      hm = (xm.rowwise() - mm.row(0)).array().rowwise() * ivm.row(0).array();
      auto gm = gamma_.as_matrix(1, c_);
      auto bm = beta_.as_matrix(1, c_);
      ym = (hm.array().rowwise() * gm.row(0).array()).rowwise() + bm.row(0).array();
      pending_update_ = true;
    } else {
      xhat_ = TensorT<T>(x.shape());
      invstd_ = TensorT<T>({c_});
      for (int64_t i = 0; i < c_; ++i) invstd_[i] = T(1) / std::sqrt(run_var_[i] + eps_);
      auto hm = xhat_.as_matrix(rows, c_);
      for (int64_t i = 0; i < c_; ++i) {
        const T inv = invstd_[i];
        const T scale = gamma_[i] * inv;
        const T shift = beta_[i] - scale * run_mean_[i];
        for (int64_t r = 0; r < rows; ++r) {
          hm(r, i) = (xm(r, i) - run_mean_[i]) * inv;
          ym(r, i) = xm(r, i) * scale + shift;
        }
      }
    }
    mode_was_train_ = (mode == RunMode::Train);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) override {
    const int64_t rows = gy.numel() / c_;
    if (xhat_.numel() != gy.numel()) throw DataError("batchnorm: backward without a forward");
    TensorT<T> gx(gy.shape());
    auto gym = gy.as_matrix(rows, c_);
    auto hm = xhat_.as_matrix(rows, c_);
    auto gxm = gx.as_matrix(rows, c_);
    using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
    const RowVec sum_gy = gym.colwise().sum();
    const RowVec sum_gy_h = (gym.array() * hm.array()).colwise().sum();
    auto ggm = g_gamma_.as_matrix(1, c_);
    auto gbm = g_beta_.as_matrix(1, c_);
    ggm.row(0) += sum_gy_h;
    gbm.row(0) += sum_gy;
    auto gm = gamma_.as_matrix(1, c_);
    auto ivm = invstd_.as_matrix(1, c_);
    if (mode_was_train_) {
      const T inv_rows = T(1) / T(rows);
      // dx = gamma*invstd/R * (R*gy - sum(gy) - xhat*sum(gy*xhat))
      gxm = ((gym * T(rows)).rowwise() - sum_gy).array() -
            hm.array().rowwise() * sum_gy_h.array();
      gxm = gxm.array().rowwise() * (gm.row(0).array() * ivm.row(0).array() * inv_rows);
    } else {
      // running statistics are constants in eval mode
      gxm = gym.array().rowwise() * (gm.row(0).array() * ivm.row(0).array());
    }
    return gx;
  }

  void commit_running_stats() override {
    if (!pending_update_) return;
    for (int64_t i = 0; i < c_; ++i) {
      run_mean_[i] = (T(1) - momentum_) * run_mean_[i] + momentum_ * mean_[i];
      run_var_[i] = (T(1) - momentum_) * run_var_[i] + momentum_ * batch_var_[i];
    }
    pending_update_ = false;
  }

  void visit_params(const std::string& prefix, const ParamVisitor<T>& v) override {
    v({prefix + ".gamma", &gamma_, &g_gamma_, true});
    v({prefix + ".beta", &beta_, &g_beta_, true});
    v({prefix + ".running_mean", &run_mean_, nullptr, false});
    v({prefix + ".running_var", &run_var_, nullptr, false});
  }

  void init_params(Rng& rng) override {
    std::fill(gamma_.vec().begin(), gamma_.vec().end(), T(1));
    std::fill(beta_.vec().begin(), beta_.vec().end(), T(0));
    std::fill(run_mean_.vec().begin(), run_mean_.vec().end(), T(0));
    std::fill(run_var_.vec().begin(), run_var_.vec().end(), T(1));
    pending_update_ = false;
  }

private:
  int64_t c_;
  T eps_, momentum_;
  TensorT<T> gamma_, beta_, g_gamma_, g_beta_, run_mean_, run_var_;
  TensorT<T> mean_, batch_var_, invstd_, xhat_;
  bool pending_update_ = false;
  bool mode_was_train_ = false;
};

template <class T>
class ReLU : public Layer<T> {
public:
  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    y_ = x;
    for (int64_t i = 0; i < y_.numel(); ++i)
      if (y_[i] < T(0)) y_[i] = T(0);
    return y_;
  }
  TensorT<T> backward(const TensorT<T>& gy) override {
    TensorT<T> gx(gy.shape());
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = y_[i] > T(0) ? gy[i] : T(0);
    return gx;
  }

  void append_branch_signature(std::vector<uint64_t>& sig) const override {
    uint64_t h = 0xCBF29CE484222325ull;
    for (int64_t i = 0; i < y_.numel(); ++i) {
      h ^= uint64_t(y_[i] > T(0));
      h *= 0x100000001B3ull;
    }
    sig.push_back(h);
  }

private:
  TensorT<T> y_;
};

template <class T>
class Sigmoid : public Layer<T> {
public:
  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    y_ = TensorT<T>(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y_[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y_;
  }
  TensorT<T> backward(const TensorT<T>& gy) override {
    TensorT<T> gx(gy.shape());
    for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * y_[i] * (T(1) - y_[i]);
    return gx;
  }

private:
  TensorT<T> y_;
};

template <class T>
class Linear : public Layer<T> {
public:
  Linear(int in, int out) : in_(in), out_(out) {
    w_ = TensorT<T>({out, in});
    b_ = TensorT<T>({out});
    gw_ = TensorT<T>(w_.shape());
    gb_ = TensorT<T>(b_.shape());
  }

  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw DataError("linear: expected (N," + std::to_string(in_) + "), got " + x.shape_str());
    x_ = x;
    const int64_t n = x.dim(0);
    TensorT<T> y({n, out_});
    auto ym = y.as_matrix(n, out_);
    ym.noalias() = x.as_matrix(n, in_) * w_.as_matrix(out_, in_).transpose();
    ym.rowwise() += b_.as_matrix(1, out_).row(0);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) override {
    const int64_t n = x_.dim(0);
    auto gym = gy.as_matrix(n, out_);
    gw_.as_matrix(out_, in_).noalias() += gym.transpose() * x_.as_matrix(n, in_);
    gb_.as_matrix(1, out_).row(0) += gym.colwise().sum();
    TensorT<T> gx(x_.shape());
    gx.as_matrix(n, in_).noalias() = gym * w_.as_matrix(out_, in_);
    return gx;
  }

  void visit_params(const std::string& prefix, const ParamVisitor<T>& v) override {
    v({prefix + ".w", &w_, &gw_, true});
    v({prefix + ".b", &b_, &gb_, true});
  }

  void init_params(Rng& rng) override {
    he_fill(w_, in_, rng);
    std::fill(b_.vec().begin(), b_.vec().end(), T(0));
  }

private:
  int64_t in_, out_;
  TensorT<T> w_, b_, gw_, gb_, x_;
};

template <class T>
class Flatten : public Layer<T> {
public:
  TensorT<T> forward(const TensorT<T>& x, RunMode mode) override {
    in_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.numel() / x.dim(0)});
  }
  TensorT<T> backward(const TensorT<T>& gy) override { return gy.reshaped(in_shape_); }

private:
  std::vector<int64_t> in_shape_;
};

// Named layer pipeline.
template <class T>
class Seq {
public:
  template <class L, class... Args>
  L* add(const std::string& name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    names_.push_back(name);
    layers_.push_back(std::move(layer));
    return raw;
  }

  TensorT<T> forward(const TensorT<T>& x, RunMode mode, const TraceFn<T>& trace = {}) {
    TensorT<T> cur = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
      cur = layers_[i]->forward(cur, mode);
      if (trace) trace(names_[i], cur);
      S2V_CHECK_FINITE(cur, names_[i]);
    }
    return cur;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    TensorT<T> cur = gy;
    for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
    return cur;
  }

  void visit_params(const std::string& prefix, const ParamVisitor<T>& v) {
    for (size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->visit_params(prefix + names_[i], v);
  }

  void commit_running_stats() {
    for (auto& l : layers_) l->commit_running_stats();
  }

  void init_params(Rng& rng) {
    for (auto& l : layers_) l->init_params(rng);
  }

  void append_branch_signature(std::vector<uint64_t>& sig) const {
    for (const auto& l : layers_) l->append_branch_signature(sig);
  }

private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// Channel concatenation (last axis) used at the decoder skip junctions.
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != b.rank()) throw DataError("concat: rank mismatch");
  for (size_t i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i)) throw DataError("concat: shape mismatch at skip junction");
  auto shape = a.shape();
  const int64_t ca = a.dim(a.rank() - 1), cb = b.dim(b.rank() - 1);
  shape.back() = ca + cb;
  TensorT<T> out(shape);
  const int64_t rows = a.numel() / ca;
  for (int64_t r = 0; r < rows; ++r) {
    std::copy(a.data() + r * ca, a.data() + (r + 1) * ca, out.data() + r * (ca + cb));
    std::copy(b.data() + r * cb, b.data() + (r + 1) * cb, out.data() + r * (ca + cb) + ca);
  }
  return out;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& x, int64_t ca) {
  auto sa = x.shape(), sb = x.shape();
  const int64_t c = x.dim(x.rank() - 1);
  sa.back() = ca;
  sb.back() = c - ca;
  TensorT<T> a(sa), b(sb);
  const int64_t rows = x.numel() / c;
  for (int64_t r = 0; r < rows; ++r) {
    std::copy(x.data() + r * c, x.data() + r * c + ca, a.data() + r * ca);
    std::copy(x.data() + r * c + ca, x.data() + (r + 1) * c, b.data() + r * (c - ca));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace s2v::net
