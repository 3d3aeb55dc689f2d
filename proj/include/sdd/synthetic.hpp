#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdd/render.hpp"
#include "sdd/scene.hpp"

namespace sdd {

enum class MotionFamily { kLinear = 0, kOrbit = 1, kOscillation = 2 };

// Trajectory of one dynamic Gaussian, expressed as an offset from its
// canonical position with offset(0) = 0:
//   linear:      A * dir * t
//   orbit:       A * (u * (cos(a t) - 1) + v * sin(a t)), a quarter turn
//   oscillation: A * dir * 4 t (1 - t), out and back
struct TruthMotion {
  MotionFamily family = MotionFamily::kLinear;
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();  // orbit only
  double amplitude = 0.0;

  Vec3 offset(double t) const;
};

struct SyntheticSpec {
  int n_static = 80;
  int n_dynamic = 20;
  int n_frames = 24;
  int n_cameras = 2;
  int width = 128;
  int height = 128;
  double noise_std = 0.0;
  double amplitude = 0.5;
  uint64_t seed = 1;
};

SyntheticSpec load_synth_spec(const std::string& path);
void save_synth_spec(const SyntheticSpec& spec, const std::string& path);

struct SyntheticDataset {
  SyntheticSpec spec;
  GaussianSet truth;  // canonical scene; deformation holds a degree-2 fit of
                      // the true trajectories, exact for the polynomial ones
  std::vector<uint8_t> labels;       // 1 = dynamic, aligned with truth
  std::vector<TruthMotion> motions;  // per primitive; statics have amplitude 0
  std::vector<Camera> cameras;
  std::vector<double> times;     // per frame index, uniform on [0, 1]
  std::vector<uint8_t> heldout;  // per frame index
  std::vector<FrameSample> frames;  // camera-major: cam 0 frames, cam 1, ...
};

// Builds the ground-truth scene and renders every frame with this
// repository's own renderer, so supervision and model share one image
// formation. Dynamic Gaussians form a few compact foreground groups, one
// trajectory family per group; statics fill a background slab behind them.
// gt masks mark pixels where the dynamic-only render departs from the
// background by more than 1/255 in any channel.
SyntheticDataset generate(const SyntheticSpec& spec);

// Layout under dir:
//   frames/cam{c}_t{k}.png        quantized frames
//   frames_f32/cam{c}_t{k}.f32    exact float dumps of the same frames
//   masks/cam{c}_t{k}.png         gt dynamic-region masks
//   cameras.txt                   one camera JSON record per line
//   times.txt                     one timestamp per frame index
//   labels.txt                    one 0/1 per primitive
//   split.txt                     train/test per frame index
//   truth_scene                   the canonical scene file
//   spec.json                     the generating spec
void write_dataset(const SyntheticDataset& ds, const std::string& dir);

struct LoadedDataset {
  std::vector<Camera> cameras;
  std::vector<double> times;
  std::vector<uint8_t> heldout;
  std::vector<FrameSample> frames;
  bool has_truth = false;
  GaussianSet truth;
  std::vector<uint8_t> labels;
};

// Frames load from the float dumps when present, falling back to PNG.
LoadedDataset load_dataset(const std::string& dir, bool load_images = true);

// The frame image a renderer should reproduce: index into frames.
size_t frame_index(const LoadedDataset& ds, int camera, int frame);

}  // namespace sdd
