#include "s2v/generation.hpp"

#include "s2v/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace s2v::gen {

namespace {

constexpr int kSize = face::kCanonicalSize;

// Convex hull (monotone chain) of the 68 landmarks, then a half-plane
// rasterization test per pixel center.
std::vector<std::pair<double, double>> convex_hull(const face::LandmarkSet& lms) {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < face::kNumLandmarks; ++i) pts.emplace_back(lms.x(i), lms.y(i));
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw DataError("degenerate landmark hull");
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
  };
  std::vector<std::pair<double, double>> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;  // counter-clockwise in (x, y-down) coordinates
}

bool inside_hull(const std::vector<std::pair<double, double>>& hull, double x, double y) {
  for (size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double c = (b.first - a.first) * (y - a.second) - (b.second - a.second) * (x - a.first);
    if (c < 0) return false;
  }
  return true;
}

}  // namespace

BlendMask full_face_mask(const face::CanonicalFace& canon) {
  const auto hull = convex_hull(canon.landmarks);
  BlendMask mask(kSize, kSize, 1);
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x)
      mask.at(y, x, 0) = inside_hull(hull, x, y) ? 1.f : 0.f;
  return mask;
}

BlendMask lower_face_mask(const face::CanonicalFace& canon, double feather_px,
                          double margin_px) {
  const auto hull = convex_hull(canon.landmarks);
  const double threshold = canon.max_eye_row() + margin_px;
  BlendMask mask(kSize, kSize, 1);
  for (int y = 0; y < kSize; ++y) {
    double v = 0.0;
    if (double(y) >= threshold)
      v = feather_px > 0 ? std::min(1.0, (double(y) - threshold) / feather_px) : 1.0;
    for (int x = 0; x < kSize; ++x)
      mask.at(y, x, 0) = inside_hull(hull, x, y) ? float(v) : 0.f;
  }
  return mask;
}

Image poisson_blend(const Image& src, const Image& dst, const BlendMask& mask) {
  const int h = dst.height(), w = dst.width();
  if (src.height() != h || src.width() != w || src.channels() != dst.channels())
    throw DataError("poisson_blend: src/dst shape mismatch");
  if (mask.height() != h || mask.width() != w || mask.channels() != 1)
    throw DataError("poisson_blend: mask shape mismatch");

  // interior = pixels the blend may touch
  std::vector<int32_t> index(size_t(h) * w, -1);
  std::vector<int> interior;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at(y, x, 0) > 0.f) {
        index[size_t(y) * w + x] = int32_t(interior.size());
        interior.push_back(y * w + x);
      }
  Image out = dst;
  if (interior.empty()) return out;
  if (int(interior.size()) == h * w)
    throw DataError("poisson_blend: mask must leave a boundary of dst pixels");

  const int n = int(interior.size());
  const int dy[4] = {-1, 1, 0, 0};
  const int dx[4] = {0, 0, -1, 1};

  // A x = b with A the interior graph Laplacian (Dirichlet rows folded into b)
  auto apply_A = [&](const std::vector<double>& x, std::vector<double>& ax) {
    for (int i = 0; i < n; ++i) {
      const int p = interior[size_t(i)];
      const int py = p / w, px = p % w;
      double acc = 0;
      int degree = 0;
      for (int d = 0; d < 4; ++d) {
        const int qy = py + dy[d], qx = px + dx[d];
        if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
        ++degree;
        const int32_t j = index[size_t(qy) * w + qx];
        if (j >= 0) acc -= x[size_t(j)];
      }
      ax[size_t(i)] = degree * x[size_t(i)] + acc;
    }
  };

  for (int c = 0; c < dst.channels(); ++c) {
    std::vector<double> b(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      const int p = interior[size_t(i)];
      const int py = p / w, px = p % w;
      double rhs = 0;
      for (int d = 0; d < 4; ++d) {
        const int qy = py + dy[d], qx = px + dx[d];
        if (qy < 0 || qy >= h || qx < 0 || qx >= w) continue;
        // guidance field: gradient of src
        rhs += double(src.at(py, px, c)) - src.at(qy, qx, c);
        if (index[size_t(qy) * w + qx] < 0) rhs += dst.at(qy, qx, c);  // Dirichlet term
      }
      b[size_t(i)] = rhs;
    }

    std::vector<double> x(static_cast<size_t>(n)), r = b, p_vec = b, ap(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) x[size_t(i)] = dst.at(interior[size_t(i)] / w,
                                                      interior[size_t(i)] % w, c);
    apply_A(x, ap);
    for (int i = 0; i < n; ++i) r[size_t(i)] = b[size_t(i)] - ap[size_t(i)];
    p_vec = r;
    double rr = 0;
    for (double v : r) rr += v * v;

    const double tol = 1e-7;  // inf-norm target with margin
    const int max_iters = std::max(1000, 20 * n);
    int it = 0;
    auto inf_norm = [](const std::vector<double>& v) {
      double m = 0;
      for (double e : v) m = std::max(m, std::abs(e));
      return m;
    };
    while (inf_norm(r) > tol && it < max_iters) {
      apply_A(p_vec, ap);
      double pap = 0;
      for (int i = 0; i < n; ++i) pap += p_vec[size_t(i)] * ap[size_t(i)];
      if (pap <= 0) break;
      const double alpha = rr / pap;
      for (int i = 0; i < n; ++i) {
        x[size_t(i)] += alpha * p_vec[size_t(i)];
        r[size_t(i)] -= alpha * ap[size_t(i)];
      }
      double rr_new = 0;
      for (double v : r) rr_new += v * v;
      const double beta = rr_new / rr;
      rr = rr_new;
      for (int i = 0; i < n; ++i) p_vec[size_t(i)] = r[size_t(i)] + beta * p_vec[size_t(i)];
      ++it;
    }
    // true residual check
    apply_A(x, ap);
    double res = 0;
    for (int i = 0; i < n; ++i) res = std::max(res, std::abs(b[size_t(i)] - ap[size_t(i)]));
    if (res > 1e-6)
      throw NumericError("poisson_blend: solver stalled, residual max-norm " +
                         std::to_string(res) + " after " + std::to_string(it) + " iterations");

    for (int i = 0; i < n; ++i) {
      const int p = interior[size_t(i)];
      const float m = mask.at(p / w, p % w, 0);
      const double blended = double(dst.at(p / w, p % w, c)) +
                             double(m) * (x[size_t(i)] - dst.at(p / w, p % w, c));
      out.at(p / w, p % w, c) = float(std::clamp(blended, 0.0, 1.0));
    }
  }
  return out;
}

Generator::Generator(ckpt::GeneratorCheckpoint checkpoint) : ckpt_(std::move(checkpoint)) {
  net_ = std::make_unique<net::Speech2VidNet<float>>(ckpt_.net_cfg);
  net_->import_params(ckpt_.params);
}

void Generator::set_identity(const Tensor& identity) {
  Tensor batched = identity;
  if (identity.rank() == 3)
    batched = identity.reshaped({1, identity.dim(0), identity.dim(1), identity.dim(2)});
  if (batched.rank() != 4 || batched.dim(3) != 3 * ckpt_.net_cfg.k_identity)
    throw DataError("identity stack has " + std::to_string(batched.dim(3) / 3) +
                    " image(s), checkpoint expects k=" +
                    std::to_string(ckpt_.net_cfg.k_identity));
  id_features_ = net_->encode_identity(batched, net::RunMode::Eval);
}

Image Generator::synthesize(const dsp::MfccWindow& window) {
  if (!id_features_) throw DataError("Generator: set_identity() before synthesize()");
  const dsp::MfccWindow w = ckpt_.normalize_audio
                                ? dsp::normalize_window(window, ckpt_.norm)
                                : window;
  Tensor a = net_->encode_audio(w.to_tensor(), net::RunMode::Eval);
  Tensor img = net_->decode(a, *id_features_, net::RunMode::Eval);
  return Image::from_tensor(img.reshaped({kSize, kSize, 3}));
}

DeblurRunner::DeblurRunner(ckpt::DeblurCheckpoint checkpoint) {
  net_ = std::make_unique<deblur::DeblurNet<float>>(checkpoint.cfg);
  net_->import_params(checkpoint.params);
}

Image DeblurRunner::apply(const Image& img) { return deblur::deblur_image(img, *net_); }

media::FrameSequence generate_frames(const media::AudioClip& audio, const Tensor& identity,
                                     Generator& model, DeblurRunner* deblur,
                                     const GenerateOptions& opts) {
  if (audio.duration_seconds() < 0.35)
    throw DataError("generate_frames: audio must cover at least 0.35 s");
  if (opts.fps <= 0) throw DataError("generate_frames: fps must be positive");

  const auto n_frames = int64_t(std::llround(audio.duration_seconds() * opts.fps));
  const dsp::MfccSequence seq = dsp::compute_mfcc(audio, model.checkpoint().mfcc_cfg);
  model.set_identity(identity);

  media::FrameSequence out;
  out.fps = opts.fps;
  out.frames.reserve(size_t(n_frames));
  for (int64_t i = 0; i < n_frames; ++i) {
    const double center = (double(i) + 0.5) / opts.fps;
    const dsp::MfccWindow w = dsp::window_mfcc(seq, std::min(center, seq.clip_duration));
    Image frame = model.synthesize(w);
    if (deblur && opts.apply_deblur) frame = deblur->apply(frame);
    out.frames.push_back(std::move(frame));
  }
  return out;
}

Image align_generated(const Image& gen, const face::LandmarkSet& target_lms,
                      const face::CanonicalFace& canon, int out_h, int out_w) {
  const face::SimilarityTransform to_canon = face::estimate_similarity(target_lms, canon);
  Image out(out_h, out_w, gen.channels());
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const auto [cx, cy] = to_canon.apply(double(x), double(y));
      for (int c = 0; c < gen.channels(); ++c)
        out.at(y, x, c) = gen.sample_bilinear(cx, cy, c);
    }
  return out;
}

BlendMask align_mask(const BlendMask& mask, const face::LandmarkSet& target_lms,
                     const face::CanonicalFace& canon, int out_h, int out_w) {
  return align_generated(mask, target_lms, canon, out_h, out_w);
}

Tensor identity_stack_from_source(const media::FrameSequence& source,
                                  const std::map<size_t, face::LandmarkSet>& landmarks,
                                  const std::vector<size_t>& frame_indices,
                                  const face::CanonicalFace& canon) {
  std::vector<Image> stills;
  for (size_t idx : frame_indices) {
    if (idx >= source.frames.size())
      throw DataError("identity frame index " + std::to_string(idx) + " out of range");
    auto it = landmarks.find(idx);
    if (it == landmarks.end())
      throw DataError("no landmarks for identity frame " + std::to_string(idx));
    const auto t = face::estimate_similarity(it->second, canon);
    stills.push_back(face::warp_to_canonical(source.frames[idx], t.inverse()));
  }
  return data::stack_identity_images(stills);
}

media::FrameSequence redub(const RedubJob& job, Generator& model, DeblurRunner* deblur) {
  const size_t n = job.source.frames.size();
  if (n == 0) throw DataError("redub: source has no frames");
  const double fps = job.source.fps;
  const double need = (double(n) - 0.5) / fps;
  if (job.audio.duration_seconds() < need)
    throw DataError("redub: replacement audio covers " +
                    std::to_string(job.audio.duration_seconds()) + " s but the source needs " +
                    std::to_string(need) + " s");
  for (size_t i = 0; i < n; ++i)
    if (!job.landmarks.count(i))
      throw DataError("redub: missing landmark record for frame " + std::to_string(i));

  const Tensor identity =
      identity_stack_from_source(job.source, job.landmarks, job.identity_frames, job.canon);
  model.set_identity(identity);
  const dsp::MfccSequence seq = dsp::compute_mfcc(job.audio, model.checkpoint().mfcc_cfg);

  const BlendMask lower = lower_face_mask(job.canon, job.feather_px);
  const BlendMask full = full_face_mask(job.canon);

  media::FrameSequence out;
  out.fps = fps;
  out.frames.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double center = (double(i) + 0.5) / fps;
    Image gen = model.synthesize(dsp::window_mfcc(seq, std::min(center, seq.clip_duration)));
    if (deblur && job.apply_deblur) gen = deblur->apply(gen);

    const Image& src_frame = job.source.frames[i];
    const auto& lms = job.landmarks.at(i);
    const Image aligned =
        align_generated(gen, lms, job.canon, src_frame.height(), src_frame.width());

    Image composited;
    switch (job.blend) {
      case BlendMode::Lower: {
        const BlendMask m =
            align_mask(lower, lms, job.canon, src_frame.height(), src_frame.width());
        composited = poisson_blend(aligned, src_frame, m);
        break;
      }
      case BlendMode::Full: {
        const BlendMask m =
            align_mask(full, lms, job.canon, src_frame.height(), src_frame.width());
        composited = poisson_blend(aligned, src_frame, m);
        break;
      }
      case BlendMode::None: {
        const BlendMask m =
            align_mask(full, lms, job.canon, src_frame.height(), src_frame.width());
        composited = src_frame;
        for (int y = 0; y < composited.height(); ++y)
          for (int x = 0; x < composited.width(); ++x) {
            const float a = m.at(y, x, 0);
            if (a > 0)
              for (int c = 0; c < composited.channels(); ++c)
                composited.at(y, x, c) =
                    (1 - a) * composited.at(y, x, c) + a * aligned.at(y, x, c);
          }
        break;
      }
    }
    out.frames.push_back(std::move(composited));
  }
  return out;
}

}  // namespace s2v::gen
