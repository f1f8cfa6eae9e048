#pragma once

#include <map>
#include <optional>

#include "s2v/checkpoint.hpp"
#include "s2v/face_prep.hpp"

namespace s2v::gen {

enum class BlendMode { Lower, Full, None };

// Soft [0,1] mask over a frame; single-channel Image.
using BlendMask = Image;

// Mask covering the canonical face hull below (max eye row + margin), with a
// linear feather ramp of feather_px rows at the top edge. Rows above the
// threshold are exactly zero.
BlendMask lower_face_mask(const face::CanonicalFace& canon, double feather_px,
                          double margin_px = 4.0);

// Full canonical face hull (no row cut-off).
BlendMask full_face_mask(const face::CanonicalFace& canon);

// Gradient-domain compositing: solves Laplacian(out) = Laplacian(src) where
// mask > 0, with out = dst elsewhere (Dirichlet boundary). Conjugate-gradient
// solve to residual max-norm < 1e-6.
Image poisson_blend(const Image& src, const Image& dst, const BlendMask& mask);

// Runtime bundle: network instance loaded from a checkpoint, plus identity
// feature caching for frame-by-frame synthesis.
class Generator {
public:
  explicit Generator(ckpt::GeneratorCheckpoint checkpoint);

  const ckpt::GeneratorCheckpoint& checkpoint() const { return ckpt_; }
  int k() const { return ckpt_.net_cfg.k_identity; }

  // identity: (112,112,3k). Features are computed once and reused.
  void set_identity(const Tensor& identity);

  Image synthesize(const dsp::MfccWindow& window);

  net::Speech2VidNet<float>& network() { return *net_; }

private:
  ckpt::GeneratorCheckpoint ckpt_;
  std::unique_ptr<net::Speech2VidNet<float>> net_;
  std::optional<net::Speech2VidNet<float>::IdentityFeatures> id_features_;
};

class DeblurRunner {
public:
  explicit DeblurRunner(ckpt::DeblurCheckpoint checkpoint);
  Image apply(const Image& img);

private:
  std::unique_ptr<deblur::DeblurNet<float>> net_;
};

struct GenerateOptions {
  double fps = 25.0;
  bool apply_deblur = true;
};

// Slides the 0.35 s window across the audio, one frame per 1/fps seconds
// (frame i centered at (i + 0.5)/fps); emits round(duration * fps) frames.
media::FrameSequence generate_frames(const media::AudioClip& audio, const Tensor& identity,
                                     Generator& model, DeblurRunner* deblur,
                                     const GenerateOptions& opts = {});

// Places a canonical-frame image over the target face: samples gen at E(q)
// for each target pixel q, where E = estimate_similarity(target_lms, canon).
Image align_generated(const Image& gen, const face::LandmarkSet& target_lms,
                      const face::CanonicalFace& canon, int out_h, int out_w);
BlendMask align_mask(const BlendMask& mask, const face::LandmarkSet& target_lms,
                     const face::CanonicalFace& canon, int out_h, int out_w);

struct RedubJob {
  media::FrameSequence source;
  std::map<size_t, face::LandmarkSet> landmarks;  // per source frame
  media::AudioClip audio;                         // replacement speech
  std::vector<size_t> identity_frames;            // source frames used as stills
  face::CanonicalFace canon;
  BlendMode blend = BlendMode::Lower;
  double feather_px = 3.0;
  bool apply_deblur = true;
};

// Per source frame: synthesize the canonical face for the corresponding
// audio window, sharpen, re-align onto the source landmarks and blend.
// Output frame count and fps equal the source's.
media::FrameSequence redub(const RedubJob& job, Generator& model, DeblurRunner* deblur);

// Builds the (112,112,3k) identity stack from source frames + landmarks.
Tensor identity_stack_from_source(const media::FrameSequence& source,
                                  const std::map<size_t, face::LandmarkSet>& landmarks,
                                  const std::vector<size_t>& frame_indices,
                                  const face::CanonicalFace& canon);

}  // namespace s2v::gen
