#include "rpt/encoder.hpp"

#include "rpt/errors.hpp"

namespace rpt {

DeskEncoder::DeskEncoder(nn::ParamStore& ps, const EncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  const int c = cfg.width;
  auto conv_param = [&](const std::string& name, int cout, int cin) {
    Tensor w = ps.create("encoder/" + name + "/W", {cout, cin * 9});
    nn::init_kaiming(w, static_cast<long>(cin) * 9, rng);
    Tensor b = ps.create("encoder/" + name + "/b", {cout});
    return std::pair{w, b};
  };
  std::tie(w1_, b1_) = conv_param("block1", c, 1);
  std::tie(w2_, b2_) = conv_param("block2", c, c);
  std::tie(w3_, b3_) = conv_param("block3", c, c);
  std::tie(w4_, b4_) = conv_param("block4", c, c);
}

FeatureMap DeskEncoder::forward(const Image& image, FeatureSource source) const {
  if (!image.allFinite()) throw ParameterError("extract_features: non-finite input image");
  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  Eigen::VectorXd flat(static_cast<long>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) flat[static_cast<long>(y) * w + x] = image(y, x);
  Tensor in = Tensor::from({1, h, w}, flat);

  Tensor x = relu(conv2d(in, w1_, b1_, 3, 3, /*stride=*/2, /*pad=*/1));
  x = relu(conv2d(x, w2_, b2_, 3, 3, 2, 1));
  x = relu(conv2d(x, w3_, b3_, 3, 3, 2, 1));
  // last block stays linear: a trailing ReLU can zero out every channel over a
  // masked region, collapsing its pooled prototype
  x = conv2d(x, w4_, b4_, 3, 3, 1, 2, /*dilation=*/2);
  check_finite(x, "encoder");

  FeatureMap fm;
  fm.values = x;
  fm.stride = kStride;
  fm.source = source;
  return fm;
}

}  // namespace rpt
