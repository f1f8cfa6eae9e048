#include "s2v/training.hpp"

#include <chrono>
#include <fstream>

namespace fs = std::filesystem;

namespace s2v::train {

TrainState TrainState::fresh(const net::NetConfig& net_cfg, const dsp::MfccConfig& mfcc_cfg,
                             const TrainConfig& cfg,
                             const net::ModelParams* pretrained_identity_conv) {
  cfg.validate();
  net_cfg.validate();
  TrainState s;
  s.net_cfg = net_cfg;
  s.mfcc_cfg = mfcc_cfg;
  s.cfg = cfg;
  s.model = std::make_unique<net::Speech2VidNet<float>>(net_cfg);
  const auto params = net::init_net_params<float>(cfg.seed, net_cfg, pretrained_identity_conv);
  s.model->import_params(params);
  s.rng = Rng(derive_seed(cfg.seed, "train-loop"));
  return s;
}

void TrainState::save(const fs::path& path) const {
  net::ModelParams tensors = model->export_params();
  for (const auto& [name, v] : opt.buffers()) tensors["opt::" + name] = v;
  ckpt::json header;
  header["type"] = "speech2vid_train_state";
  header["net"] = ckpt::to_json(net_cfg);
  header["mfcc"] = ckpt::to_json(mfcc_cfg);
  header["norm"] = ckpt::to_json(norm);
  header["train"] = {{"learning_rate", cfg.learning_rate}, {"momentum", cfg.momentum},
                     {"batch_size", cfg.batch_size},       {"max_epochs", cfg.max_epochs},
                     {"patience", cfg.patience},           {"seed", cfg.seed},
                     {"shuffle", cfg.shuffle},             {"normalize_audio", cfg.normalize_audio}};
  header["epoch"] = epoch;
  header["best_val"] = best_val;
  header["bad_epochs"] = bad_epochs;
  header["rng"] = rng.save_state();
  ckpt::save_archive(path, tensors, header);
}

TrainState TrainState::load(const fs::path& path) {
  auto [tensors, header] = ckpt::load_archive(path);
  if (header.value("type", "") != "speech2vid_train_state")
    throw FormatError("not a training state archive: " + path.string());
  TrainState s;
  s.net_cfg = ckpt::net_config_from_json(header.at("net"));
  s.mfcc_cfg = ckpt::mfcc_config_from_json(header.at("mfcc"));
  s.norm = ckpt::norm_stats_from_json(header.at("norm"));
  const auto& t = header.at("train");
  s.cfg.learning_rate = t.value("learning_rate", s.cfg.learning_rate);
  s.cfg.momentum = t.value("momentum", s.cfg.momentum);
  s.cfg.batch_size = t.value("batch_size", s.cfg.batch_size);
  s.cfg.max_epochs = t.value("max_epochs", s.cfg.max_epochs);
  s.cfg.patience = t.value("patience", s.cfg.patience);
  s.cfg.seed = t.value("seed", s.cfg.seed);
  s.cfg.shuffle = t.value("shuffle", s.cfg.shuffle);
  s.cfg.normalize_audio = t.value("normalize_audio", s.cfg.normalize_audio);
  s.epoch = header.value("epoch", 0);
  s.best_val = header.value("best_val", std::numeric_limits<double>::infinity());
  s.bad_epochs = header.value("bad_epochs", 0);
  s.rng.load_state(header.at("rng").get<std::string>());
  s.model = std::make_unique<net::Speech2VidNet<float>>(s.net_cfg);
  net::ModelParams params, velocity;
  for (auto& [name, v] : tensors) {
    if (name.rfind("opt::", 0) == 0)
      velocity.emplace(name.substr(5), std::move(v));
    else
      params.emplace(name, std::move(v));
  }
  s.model->import_params(params);
  s.opt.buffers() = std::move(velocity);
  return s;
}

ckpt::GeneratorCheckpoint TrainState::snapshot() const {
  ckpt::GeneratorCheckpoint c;
  c.params = model->export_params();
  c.net_cfg = net_cfg;
  c.mfcc_cfg = mfcc_cfg;
  c.norm = norm;
  c.normalize_audio = cfg.normalize_audio;
  c.extra = {{"epoch", epoch}, {"best_val", best_val}};
  return c;
}

Batch make_batch(const std::vector<data::TrainingSample>& samples, const dsp::NormStats& norm,
                 bool normalize, int expected_k) {
  if (samples.empty()) throw DataError("make_batch: empty batch");
  const auto n = int64_t(samples.size());
  Batch b;
  b.windows = Tensor({n, dsp::kWindowCoeffs, dsp::kWindowSteps, 1});
  b.identity = Tensor({n, net::kInputImage, net::kInputImage, 3 * expected_k});
  b.target = Tensor({n, net::kInputImage, net::kInputImage, 3});
  for (int64_t i = 0; i < n; ++i) {
    const auto& s = samples[size_t(i)];
    if (s.k() != expected_k)
      throw DataError("sample identity stack has k=" + std::to_string(s.k()) +
                      ", model expects k=" + std::to_string(expected_k));
    const dsp::MfccWindow w = normalize ? dsp::normalize_window(s.mfcc, norm) : s.mfcc;
    for (size_t j = 0; j < w.m.size(); ++j)
      b.windows[i * int64_t(w.m.size()) + int64_t(j)] = float(w.m[j]);
    std::copy(s.identity.data(), s.identity.data() + s.identity.numel(),
              b.identity.data() + i * s.identity.numel());
    std::copy(s.target.data(), s.target.data() + s.target.numel(),
              b.target.data() + i * s.target.numel());
  }
  return b;
}

float train_step(TrainState& state, const Batch& batch) {
  auto& model = *state.model;
  model.zero_grads();
  Tensor pred = model.forward(batch.windows, batch.identity, net::RunMode::Train);
  const float loss = l1_loss(pred, batch.target);
  if (!std::isfinite(loss)) {
    // rerun with tracing to name the first layer that went non-finite
    std::string offender = "loss";
    try {
      model.forward(batch.windows, batch.identity, net::RunMode::Train,
                    [&](const std::string& name, const Tensor& t) {
                      if (offender == "loss" && !t.all_finite()) offender = name;
                    });
    } catch (const std::exception&) {
    }
    throw NumericError("non-finite loss (first offending layer: " + offender + ")");
  }
  model.backward(l1_loss_grad(pred, batch.target));
  state.opt.step([&](const net::ParamVisitor<float>& v) { model.visit_params(v); },
                 state.cfg.learning_rate, state.cfg.momentum);
  model.commit_running_stats();
  return loss;
}

double validation_loss(TrainState& state, const data::SampleSource& val_src) {
  if (val_src.size() == 0) throw DataError("validation set is empty");
  auto& model = *state.model;
  double acc = 0;
  int64_t count = 0;
  const size_t bs = size_t(state.cfg.batch_size);
  for (size_t i = 0; i < val_src.size(); i += bs) {
    std::vector<data::TrainingSample> chunk;
    for (size_t j = i; j < std::min(val_src.size(), i + bs); ++j)
      chunk.push_back(val_src.get(j));
    const Batch b =
        make_batch(chunk, state.norm, state.cfg.normalize_audio, state.net_cfg.k_identity);
    Tensor pred = model.forward(b.windows, b.identity, net::RunMode::Eval);
    acc += double(l1_loss(pred, b.target)) * double(chunk.size());
    count += int64_t(chunk.size());
  }
  return acc / double(count);
}

namespace {

dsp::NormStats fit_stats_from_source(const data::SampleSource& src) {
  std::vector<dsp::MfccWindow> windows;
  windows.reserve(src.size());
  for (size_t i = 0; i < src.size(); ++i) windows.push_back(src.get(i).mfcc);
  return dsp::fit_norm_stats(windows, 1e-6);
}

}  // namespace

TrainResult train(const data::SampleSource& train_src, const data::SampleSource& val_src,
                  const net::NetConfig& net_cfg, const dsp::MfccConfig& mfcc_cfg,
                  const TrainConfig& cfg, const fs::path& out_dir,
                  const net::ModelParams* pretrained_identity_conv, TrainState* resume_state) {
  if (train_src.size() == 0) throw DataError("training set is empty");
  if (val_src.size() == 0) throw DataError("validation set is empty");
  fs::create_directories(out_dir);

  TrainState local;
  TrainState* state = resume_state;
  if (!state) {
    local = TrainState::fresh(net_cfg, mfcc_cfg, cfg, pretrained_identity_conv);
    local.norm = cfg.normalize_audio ? fit_stats_from_source(train_src)
                                     : dsp::NormStats::identity();
    state = &local;
  }

  TrainResult result;
  result.best_checkpoint = out_dir / "checkpoint_best.s2v";
  EarlyStopper stopper(state->cfg.patience);
  // re-prime the stopper when resuming
  if (std::isfinite(state->best_val)) stopper.update(state->best_val);
  for (int i = 0; i < state->bad_epochs; ++i) stopper.update(state->best_val + 1.0);

  std::vector<size_t> order(train_src.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  while (state->epoch < state->cfg.max_epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = state->epoch + 1;
    if (state->cfg.shuffle) {
      Rng epoch_rng(derive_seed(state->cfg.seed, "shuffle-" + std::to_string(epoch)));
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[size_t(epoch_rng.uniform_index(i))]);
    }

    double train_acc = 0;
    int64_t seen = 0;
    const size_t bs = size_t(state->cfg.batch_size);
    for (size_t i = 0; i < order.size(); i += bs) {
      std::vector<data::TrainingSample> chunk;
      for (size_t j = i; j < std::min(order.size(), i + bs); ++j)
        chunk.push_back(train_src.get(order[j]));
      const Batch b =
          make_batch(chunk, state->norm, state->cfg.normalize_audio, state->net_cfg.k_identity);
      train_acc += double(train_step(*state, b)) * double(chunk.size());
      seen += int64_t(chunk.size());
    }
    const double train_loss = train_acc / double(seen);
    const double val_loss = validation_loss(*state, val_src);
    state->epoch = epoch;

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train_loss;
    entry.val_loss = val_loss;
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);

    const bool improved = val_loss < stopper.best();
    const bool stop = stopper.update(val_loss);
    state->bad_epochs = stopper.bad_epochs();
    if (improved) {
      state->best_val = val_loss;
      state->snapshot().save(result.best_checkpoint);
    }
    state->save(out_dir / "train_state.s2v");
    write_log_csv(result.log, out_dir / "train_log.csv");
    if (stop) break;
  }

  result.best_val = state->best_val;
  result.epochs_run = state->epoch;
  return result;
}

ckpt::DeblurCheckpoint train_deblur(const std::vector<Image>& faces,
                                    const DeblurTrainConfig& cfg,
                                    std::vector<EpochLog>* log) {
  if (faces.empty()) throw DataError("train_deblur: empty face set");
  deblur::DeblurNet<float> model(cfg.net);
  model.init(derive_seed(cfg.seed, "deblur-init"));
  SgdMomentum<float> opt;
  Rng rng(derive_seed(cfg.seed, "deblur-data"));

  auto crop = [&](const Image& img, int size, int oy, int ox) {
    Image out(size, size, 3);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
    return out;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order(faces.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.uniform_index(i))]);

    double acc = 0;
    int64_t seen = 0;
    for (size_t i0 = 0; i0 < order.size(); i0 += size_t(cfg.batch_size)) {
      std::vector<Image> sharp;
      for (size_t j = i0; j < std::min(order.size(), i0 + size_t(cfg.batch_size)); ++j) {
        Image img = faces[order[j]];
        const double sigma = rng.uniform(cfg.sigma_min, cfg.sigma_max);
        Image blurred = deblur::synth_blur(img, sigma);
        if (cfg.patch > 0 && img.height() > cfg.patch && img.width() > cfg.patch) {
          const int oy = int(rng.uniform_index(uint64_t(img.height() - cfg.patch)));
          const int ox = int(rng.uniform_index(uint64_t(img.width() - cfg.patch)));
          img = crop(img, cfg.patch, oy, ox);
          blurred = crop(blurred, cfg.patch, oy, ox);
        }
        sharp.push_back(img);
        sharp.push_back(blurred);  // interleaved (sharp, blurred)
      }
      const auto nb = int64_t(sharp.size() / 2);
      const int h = sharp[0].height(), w = sharp[0].width();
      Tensor x({nb, h, w, 3}), y({nb, h, w, 3});
      for (int64_t b = 0; b < nb; ++b) {
        std::copy(sharp[size_t(2 * b + 1)].vec().begin(), sharp[size_t(2 * b + 1)].vec().end(),
                  x.data() + b * int64_t(h) * w * 3);
        std::copy(sharp[size_t(2 * b)].vec().begin(), sharp[size_t(2 * b)].vec().end(),
                  y.data() + b * int64_t(h) * w * 3);
      }
      model.zero_grads();
      Tensor pred = model.forward(x, net::RunMode::Train);
      const float loss = l1_loss(pred, y);
      if (!std::isfinite(loss)) throw NumericError("non-finite deblur loss");
      model.backward(l1_loss_grad(pred, y));
      opt.step([&](const net::ParamVisitor<float>& v) { model.visit_params(v); },
               cfg.learning_rate, cfg.momentum);
      acc += double(loss) * double(nb);
      seen += nb;
    }
    if (log) {
      EpochLog e;
      e.epoch = epoch;
      e.train_loss = acc / double(seen);
      e.val_loss = 0;
      e.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log->push_back(e);
    }
  }

  ckpt::DeblurCheckpoint out;
  out.params = model.export_params();
  out.cfg = cfg.net;
  out.extra = {{"epochs", cfg.epochs}, {"sigma_min", cfg.sigma_min},
               {"sigma_max", cfg.sigma_max}};
  return out;
}

void write_log_csv(const std::vector<EpochLog>& log, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path.string());
  out << "epoch,train_loss,val_loss,wall_seconds\n";
  for (const auto& e : log)
    out << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.wall_seconds
        << "\n";
}

}  // namespace s2v::train
