#pragma once

#include <map>
#include <set>

#include "s2v/network.hpp"
#include "s2v/training.hpp"

namespace s2v::net {

struct GradCheckEntry {
  std::string layer;
  double max_rel_err = 0;
  int checked = 0;
  int skipped_kinks = 0;  // probes rejected because +-eps crossed a ReLU/pool branch
};

struct GradCheckReport {
  std::vector<GradCheckEntry> layers;
  double worst_rel_err = 0;

  bool passed(double threshold) const { return worst_rel_err < threshold; }
};

// Central finite differences of the L1 loss against the analytic backward
// pass, on `per_layer` randomly chosen parameters of every layer. Runs in
// double precision so finite-difference noise stays far below the threshold.
// Eval mode keeps batch-norm statistics constant, which keeps the probe off
// the kinks a statistic shift would otherwise drag whole layers across.
inline GradCheckReport gradient_check_model(const NetConfig& cfg, int batch, int per_layer,
                                            double eps, uint64_t seed,
                                            RunMode mode = RunMode::Eval) {
  Speech2VidNet<double> model(cfg);
  model.init(seed);

  Rng rng(derive_seed(seed, "gradcheck-data"));
  TensorD window({batch, kAudioFreqBins, kAudioTimeSteps, 1});
  for (int64_t i = 0; i < window.numel(); ++i) window[i] = rng.normal();
  TensorD identity({batch, kInputImage, kInputImage, 3 * cfg.k_identity});
  for (int64_t i = 0; i < identity.numel(); ++i) identity[i] = rng.uniform();
  // Predictions land in (0,1); a target of 2 keeps every |pred - target| term
  // at least 1 away from its kink, so the central difference never straddles
  // an absolute-value corner and measures the true gradient.
  TensorD target = TensorD::full({batch, kInputImage, kInputImage, 3}, 2.0);

  std::vector<uint64_t> sig;
  auto loss = [&]() -> double {
    TensorD pred = model.forward(window, identity, mode);
    sig = model.branch_signature();
    return double(train::l1_loss(pred, target));
  };

  // analytic gradients, and the branch signature at the probe point
  model.zero_grads();
  std::vector<uint64_t> base_sig;
  {
    TensorD pred = model.forward(window, identity, mode);
    base_sig = model.branch_signature();
    model.backward(train::l1_loss_grad(pred, target));
  }

  // One group per layer of the layer plan (conv1..fc7 and friends). Batch
  // norms are attachments of their conv/fc layer, so bnN params fold into
  // the convN/tconvN/fcN group of the same module.
  std::map<std::string, std::vector<ParamRef<double>>> groups;
  std::vector<ParamRef<double>> all;
  model.visit_params([&](const ParamRef<double>& p) {
    if (p.trainable && p.grad) all.push_back(p);
  });
  std::set<std::string> units;
  for (const auto& p : all) units.insert(p.name.substr(0, p.name.rfind('.')));
  auto host_unit = [&](const std::string& unit) -> std::string {
    const auto dot = unit.rfind('.');
    const std::string module = unit.substr(0, dot + 1);
    const std::string local = unit.substr(dot + 1);
    if (local.rfind("bn", 0) != 0) return unit;
    const std::string num = local.substr(2);
    for (const char* kind : {"conv", "tconv", "fc"})
      if (units.count(module + kind + num)) return module + kind + num;
    return unit;
  };
  for (const auto& p : all)
    groups[host_unit(p.name.substr(0, p.name.rfind('.')))].push_back(p);

  Rng pick(derive_seed(seed, "gradcheck-pick"));
  GradCheckReport report;
  for (auto& [layer, params] : groups) {
    int64_t total = 0;
    double scale = 0;  // typical gradient magnitude of this layer
    for (const auto& p : params) {
      total += p.value->numel();
      for (int64_t i = 0; i < p.grad->numel(); ++i)
        scale = std::max(scale, std::abs((*p.grad)[i]));
    }
    GradCheckEntry entry;
    entry.layer = layer;
    const int n_checks = int(std::min<int64_t>(per_layer, total));
    const int max_attempts = 150 * n_checks;
    int attempts = 0;
    while (entry.checked < n_checks && attempts++ < max_attempts) {
      int64_t flat = int64_t(pick.uniform_index(uint64_t(total)));
      TensorT<double>* value = nullptr;
      TensorT<double>* grad = nullptr;
      for (const auto& p : params) {
        if (flat < p.value->numel()) {
          value = p.value;
          grad = p.grad;
          break;
        }
        flat -= p.value->numel();
      }
      const double saved = (*value)[flat];
      // relative step, floored for parameters sitting at zero
      const double h = eps * std::max(std::abs(saved), eps);
      (*value)[flat] = saved + h;
      const double lp = loss();
      const bool plus_ok = (sig == base_sig);
      (*value)[flat] = saved - h;
      const double lm = loss();
      const bool minus_ok = (sig == base_sig);
      (*value)[flat] = saved;
      if (!plus_ok || !minus_ok) {
        // the interval straddles a ReLU/pool kink; the difference quotient is
        // not the derivative there, so this draw carries no information
        ++entry.skipped_kinks;
        continue;
      }
      const double fd = (lp - lm) / (2 * h);
      const double an = (*grad)[flat];
      // near-zero pairs are judged against the layer's gradient scale
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3 * scale, 1e-12});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }
    report.worst_rel_err = std::max(report.worst_rel_err, entry.max_rel_err);
    report.layers.push_back(std::move(entry));
  }
  return report;
}

}  // namespace s2v::net
