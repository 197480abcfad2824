#pragma once

#include <cstdint>

#include "rpt/volume.hpp"

namespace rpt {

/// Controls for the synthetic bias-controlled volume generator. Each class is
/// an ellipsoidal organ; per-patient variation enters through affine jitter
/// (size/position), contour noise (shape), a global intensity shift, and
/// optional high-intensity lesion sub-blobs inside organs.
struct SynthParams {
  int dim_d = 32, dim_h = 32, dim_w = 32;
  int num_classes = 2;
  double lesion_prob = 0.0;       // per-organ probability of an outlier sub-blob
  double intensity_shift = 0.0;   // stddev of the per-patient global shift
  double contour_jitter = 0.0;    // radial boundary perturbation, in [0, 0.45]
  double size_jitter = 0.15;      // relative radius jitter
  double center_jitter = 0.08;    // relative center jitter
  double noise_std = 0.04;        // per-voxel Gaussian noise

  void validate() const;
};

/// Deterministic for a fixed (seed, params). Every requested class appears as
/// a 6-connected blob intersecting at least one axial slice.
VolumeScan generate_synthetic_volume(uint64_t seed, const SynthParams& params);

}  // namespace rpt
