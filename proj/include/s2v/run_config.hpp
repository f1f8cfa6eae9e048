#pragma once

#include <filesystem>

#include "s2v/checkpoint.hpp"
#include "s2v/training.hpp"

namespace s2v::cli {

// Merged configuration for the command-line tools. Defaults < config file <
// explicit flags; the effective result is copied into every run directory.
struct RunConfig {
  uint64_t seed = 0;
  dsp::MfccConfig mfcc;
  net::NetConfig net;
  train::TrainConfig train;
  train::DeblurTrainConfig deblur;

  struct Prep {
    int frame_stride = 5;
    int min_gap_frames = 25;
    double shot_threshold = 0.5;
    double fps = 25.0;
  } prep;

  ckpt::json to_json() const {
    ckpt::json j;
    j["seed"] = seed;
    j["mfcc"] = ckpt::to_json(mfcc);
    j["net"] = ckpt::to_json(net);
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"momentum", train.momentum},
                  {"batch_size", train.batch_size},
                  {"max_epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"shuffle", train.shuffle},
                  {"normalize_audio", train.normalize_audio}};
    j["deblur"] = {{"hidden_channels", deblur.net.hidden_channels},
                   {"learning_rate", deblur.learning_rate},
                   {"momentum", deblur.momentum},
                   {"batch_size", deblur.batch_size},
                   {"epochs", deblur.epochs},
                   {"patch", deblur.patch},
                   {"sigma_min", deblur.sigma_min},
                   {"sigma_max", deblur.sigma_max}};
    j["prep"] = {{"frame_stride", prep.frame_stride},
                 {"min_gap_frames", prep.min_gap_frames},
                 {"shot_threshold", prep.shot_threshold},
                 {"fps", prep.fps}};
    return j;
  }

  static RunConfig from_json(const ckpt::json& j) {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("mfcc")) c.mfcc = ckpt::mfcc_config_from_json(j["mfcc"]);
    if (j.contains("net")) c.net = ckpt::net_config_from_json(j["net"]);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.momentum = t.value("momentum", c.train.momentum);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.shuffle = t.value("shuffle", c.train.shuffle);
      c.train.normalize_audio = t.value("normalize_audio", c.train.normalize_audio);
    }
    if (j.contains("deblur")) {
      const auto& d = j["deblur"];
      c.deblur.net.hidden_channels = d.value("hidden_channels", c.deblur.net.hidden_channels);
      c.deblur.learning_rate = d.value("learning_rate", c.deblur.learning_rate);
      c.deblur.momentum = d.value("momentum", c.deblur.momentum);
      c.deblur.batch_size = d.value("batch_size", c.deblur.batch_size);
      c.deblur.epochs = d.value("epochs", c.deblur.epochs);
      c.deblur.patch = d.value("patch", c.deblur.patch);
      c.deblur.sigma_min = d.value("sigma_min", c.deblur.sigma_min);
      c.deblur.sigma_max = d.value("sigma_max", c.deblur.sigma_max);
    }
    if (j.contains("prep")) {
      const auto& p = j["prep"];
      c.prep.frame_stride = p.value("frame_stride", c.prep.frame_stride);
      c.prep.min_gap_frames = p.value("min_gap_frames", c.prep.min_gap_frames);
      c.prep.shot_threshold = p.value("shot_threshold", c.prep.shot_threshold);
      c.prep.fps = p.value("fps", c.prep.fps);
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace s2v::cli
