#include "rpt/prototypes.hpp"

#include <cmath>
#include <limits>

#include "rpt/errors.hpp"

namespace rpt {

Tensor masked_average_pool(const Tensor& F, const Tensor& M) {
  const int c = F.dim(0);
  const long n = F.size() / c;
  if (M.size() != n) throw ParameterError("masked_average_pool: mask size mismatch");
  double mass = M.value().sum();
  if (!(mass > 1e-6)) throw EmptyMaskError("masked_average_pool: mask has no mass");
  Tensor f2 = F.rank() == 2 ? F : F.reshape({c, static_cast<int>(n)});
  Tensor m_col = M.reshape({static_cast<int>(n), 1});
  Tensor num = matmul(f2, m_col);              // [C,1]
  Tensor den = sum(M);                         // [1,1]
  return transpose(div(num, den));             // [1,C]
}

Tensor masked_average_pool(const FeatureMap& F, const Eigen::VectorXd& M) {
  return masked_average_pool(F.flat(), Tensor::from({static_cast<int>(M.size())}, M));
}

RegionMaskSet assign_to_seeds(const Mask& foreground,
                              const std::vector<std::pair<int, int>>& seeds) {
  if (seeds.empty()) throw ParameterError("assign_to_seeds: no seeds");
  RegionMaskSet out;
  out.hp = static_cast<int>(foreground.rows());
  out.wp = static_cast<int>(foreground.cols());
  out.seeds = seeds;
  out.masks.assign(seeds.size(), Eigen::VectorXd::Zero(static_cast<long>(out.hp) * out.wp));
  for (int y = 0; y < out.hp; ++y)
    for (int x = 0; x < out.wp; ++x) {
      if (!foreground(y, x)) continue;
      size_t best = 0;
      long best_d2 = std::numeric_limits<long>::max();
      for (size_t s = 0; s < seeds.size(); ++s) {
        long dy = y - seeds[s].first, dx = x - seeds[s].second;
        long d2 = dy * dy + dx * dx;
        if (d2 < best_d2) {
          best_d2 = d2;
          best = s;
        }
      }
      out.masks[best][static_cast<long>(y) * out.wp + x] = 1.0;
    }
  return out;
}

RegionMaskSet voronoi_partition(const Mask& foreground, int n_regions, uint64_t rng_seed) {
  (void)rng_seed;  // placement is fully deterministic; seed kept for API stability
  if (n_regions < 1) throw ParameterError("voronoi_partition: n_regions must be >= 1");
  std::vector<std::pair<int, int>> fg;
  for (int y = 0; y < foreground.rows(); ++y)
    for (int x = 0; x < foreground.cols(); ++x)
      if (foreground(y, x)) fg.push_back({y, x});
  if (fg.empty()) throw EmptyMaskError("voronoi_partition: empty foreground");

  const int n = std::min<int>(n_regions, static_cast<int>(fg.size()));

  double cy = 0, cx = 0;
  for (auto& [y, x] : fg) {
    cy += y;
    cx += x;
  }
  cy /= static_cast<double>(fg.size());
  cx /= static_cast<double>(fg.size());

  std::vector<std::pair<int, int>> seeds;
  std::vector<double> min_d2(fg.size(), std::numeric_limits<double>::max());
  // first seed: foreground pixel nearest the centroid
  size_t first = 0;
  double best = std::numeric_limits<double>::max();
  for (size_t i = 0; i < fg.size(); ++i) {
    double dy = fg[i].first - cy, dx = fg[i].second - cx;
    double d2 = dy * dy + dx * dx;
    if (d2 < best) {
      best = d2;
      first = i;
    }
  }
  seeds.push_back(fg[first]);
  while (static_cast<int>(seeds.size()) < n) {
    size_t far = 0;
    double far_d2 = -1;
    for (size_t i = 0; i < fg.size(); ++i) {
      double dy = fg[i].first - seeds.back().first, dx = fg[i].second - seeds.back().second;
      min_d2[i] = std::min(min_d2[i], dy * dy + dx * dx);
      if (min_d2[i] > far_d2) {
        far_d2 = min_d2[i];
        far = i;
      }
    }
    seeds.push_back(fg[far]);
  }
  return assign_to_seeds(foreground, seeds);
}

Tensor regional_prototypes(const FeatureMap& F_s, const RegionMaskSet& regions) {
  std::vector<Tensor> rows;
  rows.reserve(regions.masks.size());
  Tensor flat = F_s.flat();
  for (const auto& m : regions.masks)
    rows.push_back(transpose(masked_average_pool(flat, Tensor::from({static_cast<int>(m.size())}, m))));
  // rows are [C,1]; concat along columns then transpose -> [N_f, C]
  return transpose(col_concat(rows));
}

ThresholdHead::ThresholdHead(nn::ParamStore& ps, int width, std::mt19937_64& rng)
    : fc1(ps, "threshold_head/fc1", width, width, rng),
      fc2(ps, "threshold_head/fc2", width, 1, rng) {}

Tensor ThresholdHead::compute(const FeatureMap& F_q) const {
  Tensor gap = row_mean(transpose(F_q.flat()));  // [1,C]
  return fc2.forward(relu(fc1.forward(gap)));    // [1,1]
}

Tensor estimate_query_mask(const FeatureMap& F_q, const Tensor& prototype, const Tensor& tau,
                           double alpha) {
  Tensor p = prototype.rank() == 2 && prototype.dim(0) == 1 ? prototype
                                                            : prototype.reshape({1, static_cast<int>(prototype.size())});
  double pnorm = p.value().norm();
  if (pnorm < 1e-12)
    throw DegeneratePrototypeError("estimate_query_mask: zero-norm prototype");
  Tensor f2 = F_q.flat();  // [C,N]
  Tensor dots = matmul(p, f2);                                   // [1,N]
  Tensor p_norm = sqrt_t(sum(mul(p, p)));                        // [1,1]
  const int c = f2.dim(0);
  Tensor ones_row = Tensor::full({1, c}, 1.0);
  Tensor col_norms = sqrt_t(matmul(ones_row, mul(f2, f2)));      // [1,N]
  Tensor denom = add_scalar(mul(col_norms, p_norm), kCosineEps);
  Tensor cos = div(dots, denom);
  Tensor z = sub(mul_scalar(cos, -alpha), tau);                  // -alpha*cos - tau
  return add_scalar(neg(sigmoid(z)), 1.0);                       // 1 - sigmoid(z)
}

Tensor query_prototype(const FeatureMap& F_q, const Tensor& soft_mask) {
  double mass = soft_mask.value().sum();
  if (mass < 1e-6) throw EmptyMaskError("query_prototype: soft mask mass below 1e-6");
  return masked_average_pool(F_q.flat(), soft_mask);
}

}  // namespace rpt
