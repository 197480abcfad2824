#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "rpt/tensor.hpp"

namespace rpt::nn {

/// Named registry of trainable tensors; the unit the optimizer and the
/// checkpoint format operate on. Names are slash-separated paths.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape);
  void register_tensor(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::vector<Tensor> tensors() const;
  long num_scalars() const;

 private:
  std::map<std::string, Tensor> params_;
};

/// Deterministic fan-in scaled uniform init (He-style).
void init_kaiming(Tensor& t, long fan_in, std::mt19937_64& rng);
void init_zero(Tensor& t);

struct Linear {
  Tensor W, b;  // W:[out,in]
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out,
         std::mt19937_64& rng, bool zero_bias = true);
  Tensor forward(const Tensor& x) const { return linear(x, W, b); }
};

struct LayerNorm {
  Tensor gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& prefix, int dim);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

/// Standard multi-head self-attention over a [N,C] token matrix. No
/// positional encoding: output is equivariant to token permutation.
struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 4;
  int dim = 0;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& prefix, int dim, int heads,
                     std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
};

struct Mlp {
  Linear fc1, fc2;
  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& prefix, int dim, int hidden,
      std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

/// SGD with classical momentum, the training loop's default optimizer.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, double momentum = 0.9);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::VectorXd> velocity_;
  double momentum_;
};

}  // namespace rpt::nn
