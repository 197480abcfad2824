#include "rpt/nn.hpp"

#include <cmath>

#include "rpt/errors.hpp"

namespace rpt::nn {

Tensor ParamStore::create(const std::string& name, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  register_tensor(name, t);
  return t;
}

void ParamStore::register_tensor(const std::string& name, Tensor t) {
  if (params_.count(name)) throw ParameterError("duplicate parameter name: " + name);
  params_.emplace(name, std::move(t));
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ParameterError("unknown parameter: " + name);
  return it->second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (auto& [_, t] : params_) out.push_back(t);
  return out;
}

long ParamStore::num_scalars() const {
  long n = 0;
  for (auto& [_, t] : params_) n += t.size();
  return n;
}

void init_kaiming(Tensor& t, long fan_in, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto& v = t.mutable_value();
  for (long i = 0; i < v.size(); ++i) v[i] = dist(rng);
}

void init_zero(Tensor& t) { t.mutable_value().setZero(); }

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out,
               std::mt19937_64& rng, bool zero_bias) {
  W = ps.create(prefix + "/W", {out, in});
  b = ps.create(prefix + "/b", {out});
  init_kaiming(W, in, rng);
  if (!zero_bias) init_kaiming(b, in, rng);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, int dim) {
  gamma = ps.create(prefix + "/gamma", {dim});
  gamma.mutable_value().setOnes();
  beta = ps.create(prefix + "/beta", {dim});
}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix, int dim_,
                                       int heads_, std::mt19937_64& rng)
    : q(ps, prefix + "/q", dim_, dim_, rng),
      k(ps, prefix + "/k", dim_, dim_, rng),
      v(ps, prefix + "/v", dim_, dim_, rng),
      o(ps, prefix + "/o", dim_, dim_, rng),
      heads(heads_),
      dim(dim_) {
  if (dim_ % heads_ != 0) throw ParameterError("MHA: dim must be divisible by heads");
}

Tensor MultiHeadAttention::forward(const Tensor& x) const {
  const int d = dim / heads;
  Tensor Q = q.forward(x), K = k.forward(x), V = v.forward(x);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qi = col_slice(Q, h * d, d);
    Tensor ki = col_slice(K, h * d, d);
    Tensor vi = col_slice(V, h * d, d);
    Tensor attn = softmax_rows(mul_scalar(matmul(qi, transpose(ki)), 1.0 / std::sqrt(d)));
    outs.push_back(matmul(attn, vi));
  }
  return o.forward(col_concat(outs));
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix, int dim, int hidden,
         std::mt19937_64& rng)
    : fc1(ps, prefix + "/fc1", dim, hidden, rng), fc2(ps, prefix + "/fc2", hidden, dim, rng) {}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  velocity_.reserve(params_.size());
  for (auto& p : params_) velocity_.push_back(Eigen::VectorXd::Zero(p.size()));
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void SgdOptimizer::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + params_[i].grad();
    params_[i].mutable_value() -= lr * velocity_[i];
  }
}

}  // namespace rpt::nn
