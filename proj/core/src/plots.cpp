#include "rpt/plots.hpp"

#include <algorithm>
#include <cmath>

#include "rpt/errors.hpp"

namespace rpt {

namespace {

constexpr int kMargin = 40;

double nice_max(double v) { return v <= 0 ? 1.0 : v * 1.05; }

void draw_series(Canvas& c, const std::vector<double>& ys, double ymax, int w, int h,
                 uint8_t r, uint8_t g, uint8_t b) {
  if (ys.size() < 2) return;
  int prev_x = 0, prev_y = 0;
  for (size_t i = 0; i < ys.size(); ++i) {
    int x = kMargin + static_cast<int>((w - 2 * kMargin) * static_cast<double>(i) /
                                       static_cast<double>(ys.size() - 1));
    double t = std::clamp(ys[i] / ymax, -1.0, 1.0);
    int y = h - kMargin - static_cast<int>((h - 2 * kMargin) * std::max(0.0, t));
    if (i > 0) c.line(prev_x, prev_y, x, y, r, g, b);
    prev_x = x;
    prev_y = y;
  }
}

}  // namespace

void plot_loss_curves(const std::vector<LossRow>& rows, const std::filesystem::path& out) {
  if (rows.empty()) throw ParameterError("plot_loss_curves: no rows");
  const int W = 640, H = 400;
  Canvas c(W, H);
  c.line(kMargin, H - kMargin, W - kMargin, H - kMargin, 0, 0, 0);
  c.line(kMargin, kMargin, kMargin, H - kMargin, 0, 0, 0);
  std::vector<double> total, ce, dice, boundary;
  double ymax = 0;
  for (const auto& r : rows) {
    total.push_back(r.total);
    ce.push_back(r.ce);
    dice.push_back(r.dice);
    boundary.push_back(r.boundary);
    ymax = std::max({ymax, r.total, r.ce, r.dice});
  }
  ymax = nice_max(ymax);
  draw_series(c, total, ymax, W, H, 0, 0, 0);
  draw_series(c, ce, ymax, W, H, 200, 40, 40);
  draw_series(c, dice, ymax, W, H, 40, 120, 220);
  draw_series(c, boundary, ymax, W, H, 40, 160, 60);
  c.save_png(out);
}

void plot_block_ablation(const std::vector<BlockAblationRow>& rows,
                         const std::filesystem::path& out) {
  if (rows.empty()) throw ParameterError("plot_block_ablation: no rows");
  const int W = 480, H = 360;
  Canvas c(W, H);
  c.line(kMargin, H - kMargin, W - kMargin, H - kMargin, 0, 0, 0);
  c.line(kMargin, kMargin, kMargin, H - kMargin, 0, 0, 0);
  const int n = static_cast<int>(rows.size());
  const int slot = (W - 2 * kMargin) / n;
  for (int i = 0; i < n; ++i) {
    double frac = std::clamp(rows[static_cast<size_t>(i)].mean_dice / 100.0, 0.0, 1.0);
    int bh = static_cast<int>((H - 2 * kMargin) * frac);
    int x0 = kMargin + i * slot + slot / 6;
    int x1 = kMargin + (i + 1) * slot - slot / 6;
    c.fill_rect(x0, H - kMargin - bh, x1, H - kMargin - 1, 70, 110, 200);
  }
  c.save_png(out);
}

namespace {

void blit_panel(Canvas& c, const Eigen::MatrixXd& img, const Mask* mask,
                const Eigen::MatrixXd* soft, int x_off) {
  double lo = img.minCoeff(), hi = img.maxCoeff();
  double range = hi - lo < 1e-9 ? 1.0 : hi - lo;
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) {
      auto v = static_cast<uint8_t>(255.0 * (img(y, x) - lo) / range);
      uint8_t r = v, g = v, b = v;
      if (mask && (*mask)(y, x)) {
        r = static_cast<uint8_t>(std::min(255, v + 120));
        g = v / 2;
        b = v / 2;
      }
      if (soft && (*soft)(y, x) > 0.5) {
        g = static_cast<uint8_t>(std::min(255, v + 120));
        r = v / 2;
        b = v / 2;
      }
      c.set(x_off + x, y, r, g, b);
    }
}

}  // namespace

void plot_triptych(const Episode& ep, const Eigen::MatrixXd& pred_fg,
                   const std::filesystem::path& out) {
  const int S = static_cast<int>(ep.support_image.rows());
  const int gap = 4;
  Canvas c(3 * S + 2 * gap, S, 30, 30, 30);
  blit_panel(c, ep.support_image, &ep.support_mask, nullptr, 0);
  blit_panel(c, ep.query_image, &ep.query_mask, nullptr, S + gap);
  blit_panel(c, ep.query_image, nullptr, &pred_fg, 2 * (S + gap));
  c.save_png(out);
}

}  // namespace rpt
