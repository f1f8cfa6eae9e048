#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "s2v/checkpoint.hpp"
#include "s2v/deblur.hpp"
#include "s2v/training.hpp"
#include "support/toy.hpp"

using namespace s2v;
using namespace s2v::deblur;

TEST_CASE("sigma zero is a bit-exact identity") {
  const Image img = toy::make_face({}, 0.3);
  const Image out = synth_blur(img, 0.0);
  CHECK(out.vec() == img.vec());
}

TEST_CASE("blurring a constant image changes nothing") {
  Image img(40, 40, 3);
  img.fill(0.62f);
  for (double sigma : {0.5, 1.0, 2.5}) {
    const Image out = synth_blur(img, sigma);
    for (float v : out.vec()) CHECK(v == doctest::Approx(0.62f).epsilon(1e-6));
  }
}

TEST_CASE("impulse response peak equals the analytic separable kernel peak") {
  Image img(41, 41, 1);
  img.at(20, 20, 0) = 1.f;
  const double sigma = 1.0;
  const Image out = synth_blur(img, sigma);
  // analytic normalized 1-D kernel value at 0, truncated at 3 sigma
  const int radius = 3;
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += std::exp(-0.5 * i * i / (sigma * sigma));
  const double k0 = 1.0 / sum;
  CHECK(out.at(20, 20, 0) == doctest::Approx(k0 * k0).epsilon(1e-6));
}

TEST_CASE("negative sigma is rejected") {
  CHECK_THROWS_AS(synth_blur(Image(8, 8, 3), -0.1), DataError);
}

TEST_CASE("fresh net is an exact pass-through (zero residual head)") {
  DeblurNet<float> net({16});
  net.init(5);
  Image img = toy::make_face({}, 0.7);
  const Image out = deblur_image(img, net);
  CHECK(out.vec() == img.vec());
}

TEST_CASE("output shape follows input shape at any resolution") {
  DeblurNet<float> net({8});
  net.init(1);
  for (int size : {16, 48, 112}) {
    TensorT<float> x({1, size, size, 3});
    const auto y = net.forward(x, net::RunMode::Eval);
    CHECK(y.shape() == x.shape());
  }
}

TEST_CASE("the stack holds exactly 10 convolution layers") {
  CHECK(DeblurNet<float>::conv_layer_count() == 10);
  DeblurNet<float> net({4});
  net.init(0);
  int convs = 0;
  net.visit_params([&](const net::ParamRef<float>& p) {
    if (p.name.size() > 2 && p.name.substr(p.name.size() - 2) == ".w") ++convs;
  });
  CHECK(convs == 10);
}

TEST_CASE("deblur checkpoints round-trip") {
  toy::TempDir tmp("deblur_ckpt");
  DeblurNet<float> net({12});
  net.init(3);
  ckpt::DeblurCheckpoint c;
  c.params = net.export_params();
  c.cfg = net.config();
  c.save(tmp.path / "d.s2v");
  const auto back = ckpt::DeblurCheckpoint::load(tmp.path / "d.s2v");
  CHECK(back.cfg.hidden_channels == 12);
  for (const auto& [name, t] : c.params) CHECK(back.params.at(name).vec() == t.vec());
  DeblurNet<float> net2(back.cfg);
  net2.import_params(back.params);
  // generator checkpoints must not load as deblur checkpoints
  CHECK_THROWS_AS(ckpt::GeneratorCheckpoint::load(tmp.path / "d.s2v"), FormatError);
}

TEST_CASE("analytic gradients match finite differences on a smooth probe") {
  // double precision, small net; inputs keep every pre-activation and the
  // clamp away from their kinks so central differences are exact
  DeblurNet<double> net({4});
  net.init(11);
  Rng rng(13);
  // the residual head starts at zero, which would zero every upstream
  // gradient; give it life so the whole stack is exercised
  net.visit_params([&](const net::ParamRef<double>& p) {
    if (p.name == "conv10.w")
      for (int64_t i = 0; i < p.value->numel(); ++i) (*p.value)[i] = 0.1 * rng.normal();
  });
  TensorD x({2, 10, 10, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = 0.3 + 0.4 * rng.uniform();
  TensorD target = TensorD::full(x.shape(), 2.0);  // margin from the L1 kink

  std::vector<uint64_t> sig;
  auto loss = [&]() {
    const double l = double(train::l1_loss(net.forward(x, net::RunMode::Train), target));
    sig = net.branch_signature();
    return l;
  };
  net.zero_grads();
  net.backward(train::l1_loss_grad(net.forward(x, net::RunMode::Train), target));
  const std::vector<uint64_t> base_sig = net.branch_signature();

  std::vector<net::ParamRef<double>> params;
  net.visit_params([&](const net::ParamRef<double>& p) {
    if (p.trainable) params.push_back(p);
  });
  Rng pick(17);
  int checked = 0;
  for (int c = 0; c < 120 && checked < 40; ++c) {
    auto& p = params[size_t(pick.uniform_index(params.size()))];
    const auto i = int64_t(pick.uniform_index(uint64_t(p.value->numel())));
    const double saved = (*p.value)[i];
    const double eps = 1e-5;
    (*p.value)[i] = saved + eps;
    const double lp = loss();
    const bool plus_ok = sig == base_sig;
    (*p.value)[i] = saved - eps;
    const double lm = loss();
    const bool minus_ok = sig == base_sig;
    (*p.value)[i] = saved;
    if (!plus_ok || !minus_ok) continue;  // probe straddles a ReLU/clamp kink
    const double fd = (lp - lm) / (2 * eps);
    const double an = (*p.grad)[i];
    if (std::abs(an) < 1e-9 && std::abs(fd) < 1e-9) continue;  // dead ReLU path
    const double rel = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
    INFO(p.name, "[", i, "] an=", an, " fd=", fd);
    CHECK(rel < 1e-3);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("a short training run on zero blur keeps zero loss") {
  std::vector<Image> faces;
  for (int i = 0; i < 4; ++i) faces.push_back(toy::make_face({}, i / 3.0));
  train::DeblurTrainConfig cfg;
  cfg.net.hidden_channels = 8;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.sigma_min = cfg.sigma_max = 0.0;
  cfg.learning_rate = 0.0;
  std::vector<train::EpochLog> log;
  train_deblur(faces, cfg, &log);
  REQUIRE(log.size() == 1);
  CHECK(log[0].train_loss == doctest::Approx(0.0));
}

TEST_CASE("deblur training is deterministic under a seed") {
  std::vector<Image> faces;
  for (int i = 0; i < 6; ++i) faces.push_back(toy::make_face({}, i / 5.0));
  train::DeblurTrainConfig cfg;
  cfg.net.hidden_channels = 6;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.patch = 24;
  cfg.seed = 77;
  const auto a = train_deblur(faces, cfg);
  const auto b = train_deblur(faces, cfg);
  for (const auto& [name, t] : a.params) CHECK(b.params.at(name).vec() == t.vec());
}
