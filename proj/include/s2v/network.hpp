#pragma once

#include <map>
#include <optional>

#include "s2v/layers.hpp"

namespace s2v::net {

struct NetConfig {
  int k_identity = 1;               // still images per identity stack (1 or 5)
  bool skips_enabled = true;        // identity-to-decoder skip connections
  double channel_multiplier = 1.0;  // shrinks hidden widths for desk-scale runs
  int embedding_dim = 256;

  int ch(int base) const {
    return std::max(1, int(std::lround(base * channel_multiplier)));
  }

  void validate() const {
    if (k_identity != 1 && k_identity != 5)
      throw DataError("NetConfig: k_identity must be 1 or 5");
    if (embedding_dim <= 0) throw DataError("NetConfig: embedding_dim must be positive");
    if (channel_multiplier <= 0)
      throw DataError("NetConfig: channel_multiplier must be positive");
  }
};

inline constexpr int kInputImage = 112;
inline constexpr int kAudioFreqBins = 12;
inline constexpr int kAudioTimeSteps = 35;

// 12x35x1 window -> embedding. Pool2 strides only along time, keeping the
// 6-row frequency axis intact.
template <class T>
class AudioEncoder {
public:
  explicit AudioEncoder(const NetConfig& cfg) {
    const int c64 = cfg.ch(64), c128 = cfg.ch(128), c256 = cfg.ch(256), c512 = cfg.ch(512);
    seq_.template add<Conv2d<T>>("conv1", 1, c64, 3, 3, 1, 1, 1, 1);
    seq_.template add<BatchNorm<T>>("bn1", c64);
    seq_.template add<ReLU<T>>("relu1");
    seq_.template add<MaxPool2d<T>>("pool1", 2, 2, 2, 2);  // 12x35 -> 6x17
    seq_.template add<Conv2d<T>>("conv2", c64, c128, 3, 3, 1, 1, 1, 1);
    seq_.template add<BatchNorm<T>>("bn2", c128);
    seq_.template add<ReLU<T>>("relu2");
    // stride 1 in frequency (padded below), stride 2 in time: 6x17 -> 6x8
    seq_.template add<MaxPool2d<T>>("pool2", 2, 2, 1, 2, 0, 1, 0, 0);
    seq_.template add<Conv2d<T>>("conv3", c128, c256, 3, 3, 1, 1, 1, 1);
    seq_.template add<BatchNorm<T>>("bn3", c256);
    seq_.template add<ReLU<T>>("relu3");
    seq_.template add<Conv2d<T>>("conv4", c256, c256, 3, 3, 1, 1, 1, 1);
    seq_.template add<BatchNorm<T>>("bn4", c256);
    seq_.template add<ReLU<T>>("relu4");
    seq_.template add<Conv2d<T>>("conv5", c256, c256, 3, 3, 1, 1, 1, 1);
    seq_.template add<BatchNorm<T>>("bn5", c256);
    seq_.template add<ReLU<T>>("relu5");
    seq_.template add<MaxPool2d<T>>("pool5", 2, 2, 2, 2);  // 6x8 -> 3x4
    seq_.template add<Flatten<T>>("flatten");
    seq_.template add<Linear<T>>("fc6", 3 * 4 * c256, c512);
    seq_.template add<BatchNorm<T>>("bn6", c512);
    seq_.template add<ReLU<T>>("relu6");
    seq_.template add<Linear<T>>("fc7", c512, cfg.embedding_dim);
  }

  TensorT<T> forward(const TensorT<T>& window, RunMode mode, const TraceFn<T>& trace = {}) {
    if (window.rank() != 4 || window.dim(1) != kAudioFreqBins ||
        window.dim(2) != kAudioTimeSteps || window.dim(3) != 1)
      throw DataError("audio encoder expects (N,12,35,1), got " + window.shape_str());
    return seq_.forward(window, mode, trace);
  }

  TensorT<T> backward(const TensorT<T>& d_emb) { return seq_.backward(d_emb); }
  Seq<T>& seq() { return seq_; }

private:
  Seq<T> seq_;
};

// VGG-M style image encoder; exposes the embedding plus two skip taps at
// 28x28 (after conv2) and 14x14 (after conv5).
template <class T>
class IdentityEncoder {
public:
  struct Output {
    TensorT<T> embedding;
    TensorT<T> tap_a;  // 28x28
    TensorT<T> tap_b;  // 14x14
  };

  explicit IdentityEncoder(const NetConfig& cfg) : k_(cfg.k_identity) {
    const int c96 = cfg.ch(96), c256 = cfg.ch(256), c512 = cfg.ch(512);
    stage_a_.template add<Conv2d<T>>("conv1", 3 * k_, c96, 7, 7, 2, 2, 3, 3);  // ->56x56
    stage_a_.template add<BatchNorm<T>>("bn1", c96);
    stage_a_.template add<ReLU<T>>("relu1");
    stage_a_.template add<MaxPool2d<T>>("pool1", 2, 2, 2, 2);  // ->28x28
    stage_a_.template add<Conv2d<T>>("conv2", c96, c256, 5, 5, 1, 1, 2, 2);
    stage_a_.template add<BatchNorm<T>>("bn2", c256);
    stage_a_.template add<ReLU<T>>("relu2");

    stage_b_.template add<MaxPool2d<T>>("pool2", 2, 2, 2, 2);  // ->14x14
    stage_b_.template add<Conv2d<T>>("conv3", c256, c512, 3, 3, 1, 1, 1, 1);
    stage_b_.template add<BatchNorm<T>>("bn3", c512);
    stage_b_.template add<ReLU<T>>("relu3");
    stage_b_.template add<Conv2d<T>>("conv4", c512, c512, 3, 3, 1, 1, 1, 1);
    stage_b_.template add<BatchNorm<T>>("bn4", c512);
    stage_b_.template add<ReLU<T>>("relu4");
    stage_b_.template add<Conv2d<T>>("conv5", c512, c512, 3, 3, 1, 1, 1, 1);
    stage_b_.template add<BatchNorm<T>>("bn5", c512);
    stage_b_.template add<ReLU<T>>("relu5");

    stage_c_.template add<MaxPool2d<T>>("pool5", 2, 2, 2, 2);  // ->7x7
    stage_c_.template add<Flatten<T>>("flatten");
    stage_c_.template add<Linear<T>>("fc6", 7 * 7 * c512, c512);
    stage_c_.template add<BatchNorm<T>>("bn6", c512);
    stage_c_.template add<ReLU<T>>("relu6");
    stage_c_.template add<Linear<T>>("fc7", c512, cfg.embedding_dim);
  }

  Output forward(const TensorT<T>& images, RunMode mode, const TraceFn<T>& trace = {}) {
    if (images.rank() != 4 || images.dim(1) != kInputImage || images.dim(2) != kInputImage ||
        images.dim(3) != 3 * k_)
      throw DataError("identity encoder expects (N,112,112," + std::to_string(3 * k_) +
                      "), got " + images.shape_str());
    Output out;
    out.tap_a = stage_a_.forward(images, mode, trace);
    out.tap_b = stage_b_.forward(out.tap_a, mode, trace);
    out.embedding = stage_c_.forward(out.tap_b, mode, trace);
    return out;
  }

  TensorT<T> backward(const TensorT<T>& d_emb, const TensorT<T>& d_tap_a,
                      const TensorT<T>& d_tap_b) {
    TensorT<T> g = stage_c_.backward(d_emb);
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += d_tap_b[i];
    g = stage_b_.backward(g);
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += d_tap_a[i];
    return stage_a_.backward(g);
  }

  Seq<T>& stage_a() { return stage_a_; }
  Seq<T>& stage_b() { return stage_b_; }
  Seq<T>& stage_c() { return stage_c_; }

private:
  int k_;
  Seq<T> stage_a_, stage_b_, stage_c_;
};

// Transposed-convolution decoder growing 1x1x(2*embed) to 112x112x3, with
// optional channel concatenation of the identity taps at 14x14 and 28x28.
template <class T>
class Decoder {
public:
  explicit Decoder(const NetConfig& cfg) : skips_(cfg.skips_enabled) {
    const int c256 = cfg.ch(256), c128 = cfg.ch(128), c64 = cfg.ch(64), c32 = cfg.ch(32);
    const int c512 = cfg.ch(512);
    c_after_t2_ = c256;
    c_after_t3_ = c128;
    head_.template add<ConvTranspose2d<T>>("tconv1", 2 * cfg.embedding_dim, c256, 7, 7, 1, 1,
                                           0, 0);  // 1x1 -> 7x7
    head_.template add<BatchNorm<T>>("bn1", c256);
    head_.template add<ReLU<T>>("relu1");
    head_.template add<ConvTranspose2d<T>>("tconv2", c256, c256, 4, 4, 2, 2, 1, 1);  // ->14
    head_.template add<BatchNorm<T>>("bn2", c256);
    head_.template add<ReLU<T>>("relu2");

    const int t3_in = skips_ ? c256 + c512 : c256;
    mid_.template add<ConvTranspose2d<T>>("tconv3", t3_in, c128, 4, 4, 2, 2, 1, 1);  // ->28
    mid_.template add<BatchNorm<T>>("bn3", c128);
    mid_.template add<ReLU<T>>("relu3");

    const int t4_in = skips_ ? c128 + c256 : c128;
    tail_.template add<ConvTranspose2d<T>>("tconv4", t4_in, c64, 4, 4, 2, 2, 1, 1);  // ->56
    tail_.template add<BatchNorm<T>>("bn4", c64);
    tail_.template add<ReLU<T>>("relu4");
    tail_.template add<ConvTranspose2d<T>>("tconv5", c64, c32, 4, 4, 2, 2, 1, 1);  // ->112
    tail_.template add<BatchNorm<T>>("bn5", c32);
    tail_.template add<ReLU<T>>("relu5");
    tail_.template add<Conv2d<T>>("conv6", c32, 3, 3, 3, 1, 1, 1, 1);
    tail_.template add<Sigmoid<T>>("sigmoid");
  }

  TensorT<T> forward(const TensorT<T>& audio_emb, const TensorT<T>& id_emb,
                     const TensorT<T>& tap_a, const TensorT<T>& tap_b, RunMode mode,
                     const TraceFn<T>& trace = {}) {
    if (audio_emb.rank() != 2 || id_emb.rank() != 2 || audio_emb.dim(1) != id_emb.dim(1))
      throw DataError("decoder: embedding shape mismatch");
    const int64_t n = audio_emb.dim(0);
    TensorT<T> joint = concat_channels(audio_emb, id_emb);
    joint = joint.reshaped({n, 1, 1, joint.dim(1)});
    TensorT<T> h = head_.forward(joint, mode, trace);
    if (skips_) h = concat_channels(h, tap_b);
    h = mid_.forward(h, mode, trace);
    if (skips_) h = concat_channels(h, tap_a);
    return tail_.forward(h, mode, trace);
  }

  struct Grads {
    TensorT<T> d_audio_emb, d_id_emb, d_tap_a, d_tap_b;
  };

  Grads backward(const TensorT<T>& d_img, const std::vector<int64_t>& tap_a_shape,
                 const std::vector<int64_t>& tap_b_shape) {
    Grads g;
    TensorT<T> cur = tail_.backward(d_img);
    if (skips_) {
      auto [d_dec, d_tap] = split_channels(cur, c_after_t3_);
      g.d_tap_a = std::move(d_tap);
      cur = std::move(d_dec);
    } else {
      g.d_tap_a = TensorT<T>(tap_a_shape);
    }
    cur = mid_.backward(cur);
    if (skips_) {
      auto [d_dec, d_tap] = split_channels(cur, c_after_t2_);
      g.d_tap_b = std::move(d_tap);
      cur = std::move(d_dec);
    } else {
      g.d_tap_b = TensorT<T>(tap_b_shape);
    }
    cur = head_.backward(cur);
    cur = cur.reshaped({cur.dim(0), cur.numel() / cur.dim(0)});
    const int64_t half = cur.dim(1) / 2;
    auto [d_audio, d_id] = split_channels(cur, half);
    g.d_audio_emb = std::move(d_audio);
    g.d_id_emb = std::move(d_id);
    return g;
  }

  Seq<T>& head() { return head_; }
  Seq<T>& mid() { return mid_; }
  Seq<T>& tail() { return tail_; }

private:
  bool skips_;
  int c_after_t2_, c_after_t3_;
  Seq<T> head_, mid_, tail_;
};

template <class T>
class Speech2VidNet {
public:
  explicit Speech2VidNet(const NetConfig& cfg)
      : cfg_(cfg), audio_(cfg), identity_(cfg), decoder_(cfg) {
    cfg.validate();
  }

  const NetConfig& config() const { return cfg_; }

  struct IdentityFeatures {
    TensorT<T> embedding, tap_a, tap_b;
  };

  TensorT<T> encode_audio(const TensorT<T>& window, RunMode mode) {
    return audio_.forward(window, mode);
  }

  IdentityFeatures encode_identity(const TensorT<T>& images, RunMode mode) {
    auto out = identity_.forward(images, mode);
    return {std::move(out.embedding), std::move(out.tap_a), std::move(out.tap_b)};
  }

  TensorT<T> decode(const TensorT<T>& audio_emb, const IdentityFeatures& f, RunMode mode) {
    return decoder_.forward(audio_emb, f.embedding, f.tap_a, f.tap_b, mode);
  }

  TensorT<T> forward(const TensorT<T>& window, const TensorT<T>& images, RunMode mode,
                     const TraceFn<T>& trace = {}) {
    TensorT<T> a = audio_.forward(window, mode, trace);
    auto id = identity_.forward(images, mode, trace);
    last_tap_a_shape_ = id.tap_a.shape();
    last_tap_b_shape_ = id.tap_b.shape();
    return decoder_.forward(a, id.embedding, id.tap_a, id.tap_b, mode, trace);
  }

  void backward(const TensorT<T>& d_pred) {
    auto g = decoder_.backward(d_pred, last_tap_a_shape_, last_tap_b_shape_);
    identity_.backward(g.d_id_emb, g.d_tap_a, g.d_tap_b);
    audio_.backward(g.d_audio_emb);
  }

  void visit_params(const ParamVisitor<T>& v) {
    audio_.seq().visit_params("audio.", v);
    identity_.stage_a().visit_params("id.", v);
    identity_.stage_b().visit_params("id.", v);
    identity_.stage_c().visit_params("id.", v);
    decoder_.head().visit_params("dec.", v);
    decoder_.mid().visit_params("dec.", v);
    decoder_.tail().visit_params("dec.", v);
  }

  void zero_grads() {
    visit_params([](const ParamRef<T>& p) {
      if (p.grad) std::fill(p.grad->vec().begin(), p.grad->vec().end(), T(0));
    });
  }

  void commit_running_stats() {
    audio_.seq().commit_running_stats();
    identity_.stage_a().commit_running_stats();
    identity_.stage_b().commit_running_stats();
    identity_.stage_c().commit_running_stats();
    decoder_.head().commit_running_stats();
    decoder_.mid().commit_running_stats();
    decoder_.tail().commit_running_stats();
  }

  std::vector<uint64_t> branch_signature() {
    std::vector<uint64_t> sig;
    audio_.seq().append_branch_signature(sig);
    identity_.stage_a().append_branch_signature(sig);
    identity_.stage_b().append_branch_signature(sig);
    identity_.stage_c().append_branch_signature(sig);
    decoder_.head().append_branch_signature(sig);
    decoder_.mid().append_branch_signature(sig);
    decoder_.tail().append_branch_signature(sig);
    return sig;
  }

  // He initialization, drawn in fixed registration order.
  void init(uint64_t seed) {
    Rng rng(seed);
    audio_.seq().init_params(rng);
    identity_.stage_a().init_params(rng);
    identity_.stage_b().init_params(rng);
    identity_.stage_c().init_params(rng);
    decoder_.head().init_params(rng);
    decoder_.mid().init_params(rng);
    decoder_.tail().init_params(rng);
  }

  NamedTensorMap<T> export_params() {
    NamedTensorMap<T> out;
    visit_params([&](const ParamRef<T>& p) { out[p.name] = *p.value; });
    return out;
  }

  void import_params(const NamedTensorMap<T>& params, bool strict = true) {
    visit_params([&](const ParamRef<T>& p) {
      auto it = params.find(p.name);
      if (it == params.end()) {
        if (strict) throw DataError("missing parameter in checkpoint: " + p.name);
        return;
      }
      if (it->second.shape() != p.value->shape())
        throw DataError("parameter shape mismatch for " + p.name + ": checkpoint " +
                        it->second.shape_str() + " vs model " + p.value->shape_str());
      *p.value = it->second;
    });
  }

private:
  NetConfig cfg_;
  AudioEncoder<T> audio_;
  IdentityEncoder<T> identity_;
  Decoder<T> decoder_;
  std::vector<int64_t> last_tap_a_shape_, last_tap_b_shape_;
};

using ModelParams = NamedTensorMap<float>;

// Spreads a (OC,kh,kw,3) first-conv kernel over a k-image stack: each image
// group gets the original kernel scaled by 1/k, so k identical images
// reproduce the single-image response.
template <class T>
TensorT<T> adapt_first_conv(const TensorT<T>& w, int k) {
  if (w.rank() != 4 || w.dim(3) != 3)
    throw DataError("adapt_first_conv: expected (OC,kh,kw,3) kernel, got " + w.shape_str());
  TensorT<T> out({w.dim(0), w.dim(1), w.dim(2), 3 * k});
  const int64_t spatial = w.dim(0) * w.dim(1) * w.dim(2);
  for (int64_t s = 0; s < spatial; ++s)
    for (int g = 0; g < k; ++g)
      for (int c = 0; c < 3; ++c)
        out[s * 3 * k + g * 3 + c] = w[s * 3 + c] / T(k);
  return out;
}

// Fresh parameters for a NetConfig; optionally seeds the identity-encoder
// convolution stack from an external archive (k=1 kernel shapes). FC layers
// are always freshly initialized.
template <class T>
NamedTensorMap<T> init_net_params(uint64_t seed, const NetConfig& cfg,
                                  const NamedTensorMap<T>* pretrained_identity_conv = nullptr) {
  Speech2VidNet<T> net(cfg);
  net.init(seed);
  auto params = net.export_params();
  if (pretrained_identity_conv) {
    for (int li = 1; li <= 5; ++li) {
      const std::string wname = "id.conv" + std::to_string(li) + ".w";
      const std::string bname = "id.conv" + std::to_string(li) + ".b";
      auto wit = pretrained_identity_conv->find(wname);
      auto bit = pretrained_identity_conv->find(bname);
      if (wit == pretrained_identity_conv->end() || bit == pretrained_identity_conv->end())
        throw DataError("pretrained archive is missing " + wname);
      TensorT<T> w = wit->second;
      if (li == 1 && cfg.k_identity != 1) w = adapt_first_conv(w, cfg.k_identity);
      if (w.shape() != params.at(wname).shape())
        throw DataError("pretrained " + wname + " has shape " + w.shape_str() +
                        ", model expects " + params.at(wname).shape_str());
      if (bit->second.shape() != params.at(bname).shape())
        throw DataError("pretrained " + bname + " shape mismatch");
      params[wname] = std::move(w);
      params[bname] = bit->second;
    }
  }
  return params;
}

}  // namespace s2v::net
