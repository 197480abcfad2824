#pragma once

#include <random>

#include "rpt/nn.hpp"
#include "rpt/volume.hpp"

namespace rpt {

enum class FeatureSource { kSupport, kQuery };

/// Encoder output: [C, H', W'] with H' = ceil(H/stride).
struct FeatureMap {
  Tensor values;
  int stride = 8;
  FeatureSource source = FeatureSource::kQuery;

  int channels() const { return values.dim(0); }
  int hp() const { return values.dim(1); }
  int wp() const { return values.dim(2); }
  long spatial() const { return static_cast<long>(hp()) * wp(); }
  /// [C, H'*W'] flattened spatial view.
  Tensor flat() const { return values.reshape({channels(), static_cast<int>(spatial())}); }
};

struct EncoderConfig {
  int width = 64;  // feature channels C
};

/// Small trainable CNN at stride 8: three stride-2 3x3 conv blocks with ReLU
/// and a linear dilated stride-1 block. Weight sharing between support and
/// query is structural: one instance, one parameter set.
class DeskEncoder {
 public:
  DeskEncoder(nn::ParamStore& ps, const EncoderConfig& cfg, std::mt19937_64& rng);

  FeatureMap forward(const Image& image, FeatureSource source) const;
  int width() const { return cfg_.width; }
  static constexpr int kStride = 8;

 private:
  EncoderConfig cfg_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_, w4_, b4_;
};

}  // namespace rpt
