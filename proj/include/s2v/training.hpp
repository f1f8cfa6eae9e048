#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "s2v/checkpoint.hpp"
#include "s2v/dataset.hpp"
#include "s2v/deblur.hpp"
#include "s2v/network.hpp"

namespace s2v::train {

struct TrainConfig {
  double learning_rate = 1e-5;
  double momentum = 0.9;
  int batch_size = 64;
  int max_epochs = 20;
  int patience = 2;  // epochs without validation improvement before stopping
  uint64_t seed = 0;
  bool shuffle = true;
  bool normalize_audio = true;

  void validate() const {
    if (!(learning_rate >= 0)) throw DataError("learning_rate must be >= 0");
    if (max_epochs < 1) throw DataError("max_epochs must be >= 1");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (patience < 1) throw DataError("patience must be >= 1");
  }
};

// Mean absolute difference over all elements (batch-size invariant).
template <class T>
T l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  if (!pred.same_shape(target)) throw DataError("l1_loss: shape mismatch");
  double acc = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) acc += std::abs(double(pred[i]) - target[i]);
  return T(acc / double(pred.numel()));
}

template <class T>
TensorT<T> l1_loss_grad(const TensorT<T>& pred, const TensorT<T>& target) {
  TensorT<T> g(pred.shape());
  const T inv = T(1) / T(pred.numel());
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const T d = pred[i] - target[i];
    g[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
  }
  return g;
}

// Classic SGD with momentum: v <- mu*v - lr*g; theta <- theta + v.
template <class T>
class SgdMomentum {
public:
  void step(const std::function<void(const net::ParamVisitor<T>&)>& visit, double lr,
            double mu) {
    visit([&](const net::ParamRef<T>& p) {
      if (!p.trainable || !p.grad) return;
      auto& v = velocity_[p.name];
      if (v.numel() != p.value->numel()) v = TensorT<T>(p.value->shape());
      for (int64_t i = 0; i < v.numel(); ++i) {
        v[i] = T(mu) * v[i] - T(lr) * (*p.grad)[i];
        (*p.value)[i] += v[i];
      }
    });
  }

  net::NamedTensorMap<T>& buffers() { return velocity_; }
  const net::NamedTensorMap<T>& buffers() const { return velocity_; }

private:
  net::NamedTensorMap<T> velocity_;
};

// Stops after `patience` consecutive epochs without improvement.
class EarlyStopper {
public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  bool update(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      bad_epochs_ = 0;
    } else {
      ++bad_epochs_;
    }
    return bad_epochs_ >= patience_;
  }

  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }

private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

// Mutable training state; serializes to a tensor archive so deterministic
// runs resume bit-identically.
struct TrainState {
  net::NetConfig net_cfg;
  dsp::MfccConfig mfcc_cfg;
  dsp::NormStats norm = dsp::NormStats::identity();
  TrainConfig cfg;
  std::unique_ptr<net::Speech2VidNet<float>> model;
  SgdMomentum<float> opt;
  Rng rng{0};
  int epoch = 0;  // completed epochs
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  static TrainState fresh(const net::NetConfig& net_cfg, const dsp::MfccConfig& mfcc_cfg,
                          const TrainConfig& cfg,
                          const net::ModelParams* pretrained_identity_conv = nullptr);

  void save(const std::filesystem::path& path) const;
  static TrainState load(const std::filesystem::path& path);

  ckpt::GeneratorCheckpoint snapshot() const;
};

// Assembles batch tensors, normalizing MFCC windows with the state's stats.
struct Batch {
  Tensor windows;   // (N,12,35,1)
  Tensor identity;  // (N,112,112,3k)
  Tensor target;    // (N,112,112,3)
};
Batch make_batch(const std::vector<data::TrainingSample>& samples, const dsp::NormStats& norm,
                 bool normalize, int expected_k);

// One optimizer step; returns the pre-update loss. A non-finite loss raises
// NumericError naming the first offending layer.
float train_step(TrainState& state, const Batch& batch);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double wall_seconds = 0;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::vector<EpochLog> log;
  double best_val = 0;
  int epochs_run = 0;
};

// Full training loop: epochs over train_src, validation after each epoch,
// best-checkpoint persistence, CSV log, early stopping per patience and the
// max_epochs cap, whichever hits first.
TrainResult train(const data::SampleSource& train_src, const data::SampleSource& val_src,
                  const net::NetConfig& net_cfg, const dsp::MfccConfig& mfcc_cfg,
                  const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const net::ModelParams* pretrained_identity_conv = nullptr,
                  TrainState* resume_state = nullptr);

double validation_loss(TrainState& state, const data::SampleSource& val_src);

struct DeblurTrainConfig {
  deblur::DeblurConfig net;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 8;
  int epochs = 40;
  int patch = 0;  // 0 trains on full images, otherwise random square crops
  double sigma_min = 0.5;
  double sigma_max = 2.0;
  uint64_t seed = 0;
};

// Trains the sharpening net on artificially blurred copies of `faces`;
// never touches generator parameters.
ckpt::DeblurCheckpoint train_deblur(const std::vector<Image>& faces,
                                    const DeblurTrainConfig& cfg,
                                    std::vector<EpochLog>* log = nullptr);

void write_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace s2v::train
