#pragma once

#include <random>
#include <utility>
#include <vector>

#include "rpt/encoder.hpp"
#include "rpt/nn.hpp"
#include "rpt/volume.hpp"

namespace rpt {

/// Disjoint regional masks over the feature grid; their union is exactly the
/// support foreground.
struct RegionMaskSet {
  int hp = 0, wp = 0;
  std::vector<Eigen::VectorXd> masks;           // each hp*wp, values 0/1
  std::vector<std::pair<int, int>> seeds;       // (row, col) per region
  int n_regions() const { return static_cast<int>(masks.size()); }
};

/// Per-channel weighted mean of F under nonneg weights M (soft or binary).
/// F: [C, H'*W'] or [C,H',W']; M: weight tensor with H'*W' entries.
/// Throws EmptyMaskError when total mass < 1e-6.
Tensor masked_average_pool(const Tensor& F, const Tensor& M);
Tensor masked_average_pool(const FeatureMap& F, const Eigen::VectorXd& M);

/// Nearest-seed Euclidean labeling of the foreground, ties to the lowest
/// seed index.
RegionMaskSet assign_to_seeds(const Mask& foreground,
                              const std::vector<std::pair<int, int>>& seeds);

/// Foreground subdivision: farthest-point-sampled seeds (first seed at the
/// pixel nearest the foreground centroid), then nearest-seed assignment.
/// Effective region count is min(n_regions, #foreground pixels).
RegionMaskSet voronoi_partition(const Mask& foreground, int n_regions, uint64_t rng_seed);

/// Stacked MAP rows, one per regional mask -> [N_f, C].
Tensor regional_prototypes(const FeatureMap& F_s, const RegionMaskSet& regions);

/// Learnable decision threshold: global average pooling over the query
/// feature map, then two affine layers with a ReLU between.
struct ThresholdHead {
  nn::Linear fc1, fc2;
  ThresholdHead() = default;
  ThresholdHead(nn::ParamStore& ps, int width, std::mt19937_64& rng);
  /// -> scalar tensor [1,1]
  Tensor compute(const FeatureMap& F_q) const;
};

inline constexpr double kCosineScale = 20.0;  // alpha
inline constexpr double kCosineEps = 1e-8;

/// Soft foreground mask m_i = 1 - sigmoid(-alpha*cos(F_i, P) - tau), [1, H'*W'].
/// Throws DegeneratePrototypeError on a zero-norm prototype.
Tensor estimate_query_mask(const FeatureMap& F_q, const Tensor& prototype, const Tensor& tau,
                           double alpha = kCosineScale);

/// Soft-weighted MAP of the query features under the estimated mask -> [1, C].
Tensor query_prototype(const FeatureMap& F_q, const Tensor& soft_mask);

}  // namespace rpt
