#include "rpt/losses.hpp"

#include <cmath>
#include <limits>

#include "rpt/errors.hpp"

namespace rpt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Finite "no site" sentinel; must exceed any attainable squared distance so the
// parabola intersections stay well-defined (inf - inf would be NaN).
constexpr double kFar = 1e12;

// Felzenszwalb-Huttenlocher 1-D lower envelope of parabolas; exact squared EDT.
void dt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const long n = static_cast<long>(f.size());
  std::vector<long> v(static_cast<size_t>(n));
  std::vector<double> z(static_cast<size_t>(n) + 1);
  long k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (long q = 1; q < n; ++q) {
    double s;
    while (true) {
      s = ((f[static_cast<size_t>(q)] + q * q) -
           (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
            v[static_cast<size_t>(k)] * v[static_cast<size_t>(k)])) /
          (2.0 * q - 2.0 * v[static_cast<size_t>(k)]);
      if (s <= z[static_cast<size_t>(k)])
        --k;
      else
        break;
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = kInf;
  }
  k = 0;
  for (long q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < q) ++k;
    long vk = v[static_cast<size_t>(k)];
    d[static_cast<size_t>(q)] = (q - vk) * (q - vk) + f[static_cast<size_t>(vk)];
  }
}

Eigen::VectorXd flat_mask(const Mask& gt) {
  Eigen::VectorXd g(gt.size());
  long i = 0;
  for (long y = 0; y < gt.rows(); ++y)
    for (long x = 0; x < gt.cols(); ++x) g[i++] = gt(y, x) ? 1.0 : 0.0;
  return g;
}

Tensor as_flat(const Tensor& pred, long n) {
  if (pred.size() != n) throw ParameterError("loss: prediction/mask size mismatch");
  return pred.reshape({1, static_cast<int>(n)});
}

}  // namespace

DistanceMap signed_distance(const Mask& gt) {
  const long h = gt.rows(), w = gt.cols();
  long fg = 0;
  for (long i = 0; i < gt.size(); ++i) fg += gt.data()[i] ? 1 : 0;
  if (fg == 0 || fg == gt.size())
    throw ParameterError("signed_distance: degenerate mask (all fg or all bg)");

  // boundary = foreground pixels with a 4-connected background neighbour
  Eigen::MatrixXd sq(h, w);
  sq.setConstant(kFar);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!gt(y, x)) continue;
      bool edge = (y > 0 && !gt(y - 1, x)) || (y + 1 < h && !gt(y + 1, x)) ||
                  (x > 0 && !gt(y, x - 1)) || (x + 1 < w && !gt(y, x + 1));
      if (edge) sq(y, x) = 0.0;
    }

  std::vector<double> f, d;
  for (long x = 0; x < w; ++x) {  // columns first
    f.assign(static_cast<size_t>(h), 0.0);
    d.assign(static_cast<size_t>(h), 0.0);
    for (long y = 0; y < h; ++y) f[static_cast<size_t>(y)] = sq(y, x);
    dt_1d(f, d);
    for (long y = 0; y < h; ++y) sq(y, x) = d[static_cast<size_t>(y)];
  }
  for (long y = 0; y < h; ++y) {
    f.assign(static_cast<size_t>(w), 0.0);
    d.assign(static_cast<size_t>(w), 0.0);
    for (long x = 0; x < w; ++x) f[static_cast<size_t>(x)] = sq(y, x);
    dt_1d(f, d);
    for (long x = 0; x < w; ++x) sq(y, x) = d[static_cast<size_t>(x)];
  }

  DistanceMap out;
  out.phi.resize(h, w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double dist = std::sqrt(sq(y, x));
      out.phi(y, x) = gt(y, x) ? -dist : dist;
    }
  return out;
}

Tensor bce_loss(const Tensor& pred_fg, const Mask& gt) {
  Tensor p = clamp(as_flat(pred_fg, gt.size()), kBceEps, 1.0 - kBceEps);
  Eigen::VectorXd g = flat_mask(gt);
  Tensor fg_term = mul_const(log_t(p), g);
  Tensor bg_term = mul_const(log_t(add_scalar(neg(p), 1.0)),
                             (1.0 - g.array()).matrix());
  return neg(mean(add(fg_term, bg_term)));
}

Tensor dice_loss(const Tensor& pred_fg, const Mask& gt) {
  constexpr double s = 1.0;
  Tensor p = as_flat(pred_fg, gt.size());
  Eigen::VectorXd g = flat_mask(gt);
  Tensor inter = sum(mul_const(p, g));
  Tensor num = add_scalar(mul_scalar(inter, 2.0), s);
  Tensor den = add_scalar(sum(p), g.sum() + s);
  return add_scalar(neg(div(num, den)), 1.0);
}

Tensor boundary_loss(const Tensor& pred_fg, const DistanceMap& dist) {
  Tensor p = as_flat(pred_fg, dist.phi.size());
  Eigen::VectorXd phi(dist.phi.size());
  long i = 0;
  for (long y = 0; y < dist.phi.rows(); ++y)
    for (long x = 0; x < dist.phi.cols(); ++x) phi[i++] = dist.phi(y, x);
  return mean(mul_const(p, phi));
}

double eta_at(long epoch) { return std::max(0.0, 1.0 - 0.01 * static_cast<double>(epoch)); }

LossBundle combined_loss(const Tensor& pred_fg, const Mask& gt, long epoch, LossFlags flags) {
  LossBundle b;
  b.eta = eta_at(epoch);
  Tensor ce = bce_loss(pred_fg, gt);
  b.ce = ce.item();
  Tensor total = ce;
  if (flags.use_dice) {
    Tensor dl = dice_loss(pred_fg, gt);
    b.dice = dl.item();
    total = add(total, mul_scalar(dl, b.eta));
  }
  if (flags.use_boundary) {
    Tensor bl = boundary_loss(pred_fg, signed_distance(gt));
    b.boundary = bl.item();
    total = add(total, mul_scalar(bl, 1.0 - b.eta));
  }
  b.total_t = total;
  b.total = total.item();
  return b;
}

}  // namespace rpt
