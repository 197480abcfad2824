#pragma once

#include "rpt/volume.hpp"

namespace rpt {

/// Supervoxel-style pseudo-mask clustering: seeds on a regular 3-D grid, then
/// priority-queue region growing over (intensity, position) cost. Growth only
/// proceeds through already-claimed 6-neighbours, so every cluster is
/// 6-connected by construction and the clusters partition the voxel grid.
///
/// `granularity` is the target voxels-per-cluster; the resulting cluster
/// count is total/granularity within a factor of two (grid rounding).
/// `edge_weight` > 0 makes intensity differences expensive, so clusters stop
/// at intensity boundaries.
PseudoMaskSet cluster_pseudo_masks(const VolumeScan& volume, long granularity,
                                   double edge_weight = 4.0);

}  // namespace rpt
