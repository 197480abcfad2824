#pragma once

#include "rpt/tensor.hpp"
#include "rpt/volume.hpp"

namespace rpt {

/// Signed Euclidean distance to the ground-truth boundary: negative inside
/// the object, positive outside, zero on boundary pixels (foreground pixels
/// with a 4-connected background neighbour).
struct DistanceMap {
  Eigen::MatrixXd phi;  // H×W
};

/// Exact EDT composed with the sign convention above. Throws ParameterError
/// on an all-foreground or all-background mask.
DistanceMap signed_distance(const Mask& gt);

inline constexpr double kBceEps = 1e-7;

/// Mean binary cross-entropy; predictions clamped to [eps, 1-eps].
Tensor bce_loss(const Tensor& pred_fg, const Mask& gt);

/// Soft Dice loss with smoothing s = 1, in [0,1].
Tensor dice_loss(const Tensor& pred_fg, const Mask& gt);

/// Mean-normalized discretized boundary integral: (1/HW) sum phi * pred.
Tensor boundary_loss(const Tensor& pred_fg, const DistanceMap& dist);

/// eta(epoch) = max(0, 1 - 0.01*epoch).
double eta_at(long epoch);

struct LossFlags {
  bool use_dice = true;
  bool use_boundary = true;
};

struct LossBundle {
  double ce = 0, dice = 0, boundary = 0, eta = 0, total = 0;
  Tensor total_t;  // graph-bearing combined loss for the optimizer
};

/// total = ce + eta*dice + (1-eta)*boundary, with disabled terms contributing
/// zero and never evaluated.
LossBundle combined_loss(const Tensor& pred_fg, const Mask& gt, long epoch,
                         LossFlags flags = {});

}  // namespace rpt
