#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>

#include "doctest.h"
#include "s2v/checkpoint.hpp"
#include "s2v/gradcheck.hpp"
#include "s2v/network.hpp"
#include "support/toy.hpp"

using namespace s2v;
using namespace s2v::net;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, float lo = 0.f,
                     float hi = 1.f) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(lo, hi));
  return t;
}

NetConfig small_cfg(int k = 1, bool skips = true) {
  NetConfig cfg;
  cfg.k_identity = k;
  cfg.skips_enabled = skips;
  cfg.channel_multiplier = 0.0625;
  return cfg;
}

}  // namespace

TEST_CASE("forward maps the paper shapes end to end, output in [0,1]") {
  for (int k : {1, 5}) {
    NetConfig cfg;
    cfg.k_identity = k;
    cfg.channel_multiplier = 0.125;
    Speech2VidNet<float> model(cfg);
    model.init(1);
    const Tensor window = random_tensor({1, 12, 35, 1}, 2, -2.f, 2.f);
    const Tensor identity = random_tensor({1, 112, 112, 3 * k}, 3);
    const Tensor out = model.forward(window, identity, RunMode::Eval);
    CHECK(out.shape() == std::vector<int64_t>({1, 112, 112, 3}));
    for (int64_t i = 0; i < out.numel(); ++i) {
      CHECK(out[i] >= 0.f);
      CHECK(out[i] <= 1.f);
    }
    const Tensor a = model.encode_audio(window, RunMode::Eval);
    CHECK(a.shape() == std::vector<int64_t>({1, 256}));
    const auto f = model.encode_identity(identity, RunMode::Eval);
    CHECK(f.embedding.shape() == std::vector<int64_t>({1, 256}));
    CHECK(f.tap_a.dim(1) == 28);
    CHECK(f.tap_a.dim(2) == 28);
    CHECK(f.tap_b.dim(1) == 14);
    CHECK(f.tap_b.dim(2) == 14);
  }
}

TEST_CASE("audio pool2 halves time and keeps the frequency axis size") {
  AudioEncoder<float> enc(small_cfg());
  Rng rng(4);
  Tensor window({2, 12, 35, 1});
  for (int64_t i = 0; i < window.numel(); ++i) window[i] = float(rng.normal());
  std::map<std::string, std::vector<int64_t>> shapes;
  enc.forward(window, RunMode::Eval,
              [&](const std::string& name, const Tensor& t) { shapes[name] = t.shape(); });
  REQUIRE(shapes.count("pool1"));
  REQUIRE(shapes.count("pool2"));
  CHECK(shapes["pool1"][1] == 6);   // frequency
  CHECK(shapes["pool1"][2] == 17);  // time
  CHECK(shapes["pool2"][1] == 6);   // frequency unchanged
  CHECK(shapes["pool2"][2] == 8);   // time halved
}

TEST_CASE("zero window with fresh parameters encodes to the zero vector") {
  AudioEncoder<float> enc(small_cfg());
  Rng rng(9);
  enc.seq().init_params(rng);  // He conv weights, zero biases, identity BN
  const Tensor zero({1, 12, 35, 1});
  const Tensor emb = enc.forward(zero, RunMode::Eval);
  for (int64_t i = 0; i < emb.numel(); ++i) CHECK(emb[i] == 0.f);
}

TEST_CASE("wrong input shapes are rejected with clear errors") {
  Speech2VidNet<float> model(small_cfg());
  model.init(1);
  CHECK_THROWS_AS(model.forward(random_tensor({1, 12, 34, 1}, 1),
                                random_tensor({1, 112, 112, 3}, 2), RunMode::Eval),
                  DataError);
  CHECK_THROWS_AS(model.forward(random_tensor({1, 12, 35, 1}, 1),
                                random_tensor({1, 112, 112, 15}, 2), RunMode::Eval),
                  DataError);
}

TEST_CASE("same seed gives bit-identical parameters; forward is deterministic") {
  Speech2VidNet<float> a(small_cfg()), b(small_cfg());
  a.init(42);
  b.init(42);
  const auto pa = a.export_params(), pb = b.export_params();
  REQUIRE(pa.size() == pb.size());
  for (const auto& [name, t] : pa) CHECK(t.vec() == pb.at(name).vec());

  const Tensor w = random_tensor({1, 12, 35, 1}, 5, -1.f, 1.f);
  const Tensor img = random_tensor({1, 112, 112, 3}, 6);
  const Tensor o1 = a.forward(w, img, RunMode::Eval);
  const Tensor o2 = a.forward(w, img, RunMode::Eval);
  CHECK(o1.vec() == o2.vec());
}

TEST_CASE("eval-mode forward never mutates parameters or running stats") {
  Speech2VidNet<float> model(small_cfg());
  model.init(7);
  const auto before = model.export_params();
  model.forward(random_tensor({2, 12, 35, 1}, 8, -1.f, 1.f),
                random_tensor({2, 112, 112, 3}, 9), RunMode::Eval);
  const auto after = model.export_params();
  for (const auto& [name, t] : before) CHECK(t.vec() == after.at(name).vec());
}

TEST_CASE("train-mode forward leaves running stats alone until committed") {
  Speech2VidNet<float> model(small_cfg());
  model.init(7);
  const auto before = model.export_params();
  model.forward(random_tensor({2, 12, 35, 1}, 8, -1.f, 1.f),
                random_tensor({2, 112, 112, 3}, 9), RunMode::Train);
  const auto mid = model.export_params();
  for (const auto& [name, t] : before) CHECK(t.vec() == mid.at(name).vec());
  model.commit_running_stats();
  const auto after = model.export_params();
  bool any_changed = false;
  for (const auto& [name, t] : after)
    if (name.find("running_") != std::string::npos && t.vec() != before.at(name).vec())
      any_changed = true;
  CHECK(any_changed);
}

TEST_CASE("with skips disabled the taps cannot influence the output") {
  NetConfig cfg = small_cfg(1, false);
  Speech2VidNet<float> model(cfg);
  model.init(3);
  const Tensor img = random_tensor({1, 112, 112, 3}, 10);
  const Tensor win = random_tensor({1, 12, 35, 1}, 11, -1.f, 1.f);
  const Tensor aemb = model.encode_audio(win, RunMode::Eval);
  auto feats = model.encode_identity(img, RunMode::Eval);
  const Tensor out1 = model.decode(aemb, feats, RunMode::Eval);
  // scribble over the taps; a skip-free decoder must not notice
  for (int64_t i = 0; i < feats.tap_a.numel(); ++i) feats.tap_a[i] += 3.f;
  for (int64_t i = 0; i < feats.tap_b.numel(); ++i) feats.tap_b[i] -= 2.f;
  const Tensor out2 = model.decode(aemb, feats, RunMode::Eval);
  CHECK(out1.vec() == out2.vec());
}

TEST_CASE("with skips enabled a tap perturbation propagates to the output") {
  Speech2VidNet<float> model(small_cfg(1, true));
  model.init(3);
  const Tensor img = random_tensor({1, 112, 112, 3}, 10);
  const Tensor win = random_tensor({1, 12, 35, 1}, 11, -1.f, 1.f);
  const Tensor aemb = model.encode_audio(win, RunMode::Eval);
  auto feats = model.encode_identity(img, RunMode::Eval);
  const Tensor out1 = model.decode(aemb, feats, RunMode::Eval);
  feats.tap_b[42] += 0.5f;
  const Tensor out2 = model.decode(aemb, feats, RunMode::Eval);
  double diff = 0;
  for (int64_t i = 0; i < out1.numel(); ++i) diff += std::abs(double(out1[i]) - out2[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("pretrained identity convolutions load bit-exactly; FC layers stay fresh") {
  NetConfig cfg = small_cfg();
  const auto donor = init_net_params<float>(100, cfg);
  net::ModelParams pretrained;
  for (int li = 1; li <= 5; ++li) {
    pretrained["id.conv" + std::to_string(li) + ".w"] =
        donor.at("id.conv" + std::to_string(li) + ".w");
    pretrained["id.conv" + std::to_string(li) + ".b"] =
        donor.at("id.conv" + std::to_string(li) + ".b");
  }
  // extra tensors in the archive are ignored
  pretrained["id.fc6.w"] = donor.at("id.fc6.w");

  const auto params = init_net_params<float>(200, cfg, &pretrained);
  for (int li = 1; li <= 5; ++li) {
    const std::string w = "id.conv" + std::to_string(li) + ".w";
    CHECK(params.at(w).vec() == pretrained.at(w).vec());
  }
  CHECK(params.at("id.fc6.w").vec() != donor.at("id.fc6.w").vec());

  SUBCASE("shape mismatch is rejected") {
    net::ModelParams bad = pretrained;
    bad["id.conv2.w"] = Tensor({1, 2, 3, 4});
    CHECK_THROWS_AS(init_net_params<float>(1, cfg, &bad), DataError);
  }
}

TEST_CASE("k=5 first-conv adaptation reproduces the k=1 response on stacked inputs") {
  const int out_ch = 6;
  Conv2d<float> conv1(3, out_ch, 7, 7, 2, 2, 3, 3);
  Rng rng(55);
  conv1.init_params(rng);
  Conv2d<float> conv5(15, out_ch, 7, 7, 2, 2, 3, 3);
  conv5.weight() = adapt_first_conv(conv1.weight(), 5);
  conv5.bias() = conv1.bias();

  const Tensor img = random_tensor({1, 112, 112, 3}, 77);
  Tensor stack({1, 112, 112, 15});
  for (int64_t p = 0; p < 112 * 112; ++p)
    for (int g = 0; g < 5; ++g)
      for (int c = 0; c < 3; ++c) stack[p * 15 + g * 3 + c] = img[p * 3 + c];

  const Tensor y1 = conv1.forward(img, RunMode::Eval);
  const Tensor y5 = conv5.forward(stack, RunMode::Eval);
  REQUIRE(y1.shape() == y5.shape());
  double max_abs = 0;
  for (int64_t i = 0; i < y1.numel(); ++i)
    max_abs = std::max(max_abs, std::abs(double(y1[i]) - y5[i]));
  CHECK(max_abs < 1e-5);
}

TEST_CASE("checkpoint archives round-trip bit-exactly") {
  toy::TempDir tmp("ckpt");
  NetConfig cfg = small_cfg(5);
  cfg.skips_enabled = false;
  Speech2VidNet<float> model(cfg);
  model.init(31);

  ckpt::GeneratorCheckpoint c;
  c.params = model.export_params();
  c.net_cfg = cfg;
  c.mfcc_cfg.n_mels = 37;  // non-default to catch config round-trip slips
  c.norm.mean.fill(1.25);
  c.norm.std.fill(0.5);
  c.normalize_audio = false;
  c.save(tmp.path / "m.s2v");

  const auto back = ckpt::GeneratorCheckpoint::load(tmp.path / "m.s2v");
  REQUIRE(back.params.size() == c.params.size());
  for (const auto& [name, t] : c.params) {
    CHECK(back.params.at(name).shape() == t.shape());
    CHECK(back.params.at(name).vec() == t.vec());
  }
  CHECK(back.net_cfg.k_identity == 5);
  CHECK(back.net_cfg.skips_enabled == false);
  CHECK(back.mfcc_cfg.n_mels == 37);
  CHECK(back.norm.mean[0] == doctest::Approx(1.25));
  CHECK(back.normalize_audio == false);

  // a second save of identical content produces identical bytes
  back.save(tmp.path / "m2.s2v");
  std::ifstream f1(tmp.path / "m.s2v", std::ios::binary), f2(tmp.path / "m2.s2v",
                                                             std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("analytic gradients agree with finite differences (double, batched)") {
  NetConfig cfg = small_cfg();
  const auto report = gradient_check_model(cfg, /*batch=*/2, /*per_layer=*/4,
                                           /*eps=*/1e-3, /*seed=*/12345);
  for (const auto& e : report.layers) {
    INFO(e.layer, " rel err ", e.max_rel_err);
    CHECK(e.max_rel_err < 1e-3);
  }
}
