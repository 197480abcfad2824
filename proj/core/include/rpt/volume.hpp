#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace rpt {

/// One 3-D scan: intensities plus an integer label field. Axial slices are
/// taken along the first (D) axis.
struct VolumeScan {
  int d = 0, h = 0, w = 0;
  std::vector<float> voxels;    // d*h*w, row-major [z][y][x]
  std::vector<int32_t> labels;  // same layout; 0 = background
  std::string patient_id;
  std::string modality_tag;

  long size() const { return static_cast<long>(d) * h * w; }
  long idx(int z, int y, int x) const { return (static_cast<long>(z) * h + y) * w + x; }
  float vox(int z, int y, int x) const { return voxels[idx(z, y, x)]; }
  int32_t lab(int z, int y, int x) const { return labels[idx(z, y, x)]; }

  /// Label values present (excluding background).
  std::set<int32_t> classes() const;
  /// Throws ParameterError if dims/labels violate the invariants
  /// (matching sizes, contiguous label set {0..K}).
  void validate() const;
};

/// Per-voxel cluster assignment used as self-supervision pseudo-masks.
struct PseudoMaskSet {
  std::string volume_ref;
  int d = 0, h = 0, w = 0;
  std::vector<int32_t> clusters;  // each voxel in [0, num_clusters)
  int num_clusters = 0;

  long idx(int z, int y, int x) const { return (static_cast<long>(z) * h + y) * w + x; }
};

// ---- RFV container -------------------------------------------------------
// One UTF-8 JSON header line {"dims":[D,H,W],"dtype":"f32","fields":["voxels","labels"]}
// + '\n' + little-endian float32 voxels + little-endian int32 labels.
// Round-trips byte-exactly.

void write_rfv(const std::filesystem::path& path, const VolumeScan& v);
VolumeScan read_rfv(const std::filesystem::path& path);
void write_pseudo_rfv(const std::filesystem::path& path, const PseudoMaskSet& p);
PseudoMaskSet read_pseudo_rfv(const std::filesystem::path& path);

/// Adapter hook for real datasets: map an external file to a VolumeScan.
/// Implementations own any format-specific parsing; the rest of the pipeline
/// only ever sees VolumeScan.
class VolumeAdapter {
 public:
  virtual ~VolumeAdapter() = default;
  virtual VolumeScan load(const std::filesystem::path& file,
                          const std::string& patient_id) const = 0;
};

// ---- 2-D slice utilities -------------------------------------------------

using Image = Eigen::MatrixXd;                                    // H×W
using Mask = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>;  // H×W binary

Image slice_image(const VolumeScan& v, int z);
Mask slice_label_mask(const VolumeScan& v, int z, int32_t label);
Mask slice_cluster_mask(const PseudoMaskSet& p, int z, int32_t cluster);

Image resize_bilinear(const Image& in, int out_h, int out_w);
Mask resize_nearest(const Mask& in, int out_h, int out_w);

}  // namespace rpt
