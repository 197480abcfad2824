#pragma once

#include <filesystem>
#include <vector>

#include "rpt/episodes.hpp"
#include "rpt/eval.hpp"
#include "rpt/png_io.hpp"
#include "rpt/train.hpp"

namespace rpt {

/// Loss components vs iteration.
void plot_loss_curves(const std::vector<LossRow>& rows, const std::filesystem::path& out);

/// Mean Dice vs number of BaT blocks, as a bar chart.
void plot_block_ablation(const std::vector<BlockAblationRow>& rows,
                         const std::filesystem::path& out);

/// Support / query / prediction triptych: images in grayscale, masks and the
/// binarized prediction as color overlays.
void plot_triptych(const Episode& ep, const Eigen::MatrixXd& pred_fg,
                   const std::filesystem::path& out);

}  // namespace rpt
