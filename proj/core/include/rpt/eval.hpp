#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rpt/episodes.hpp"
#include "rpt/rpt_model.hpp"
#include "rpt/train.hpp"

namespace rpt {

/// 100 * 2|P∩G| / (|P|+|G|); both-empty is defined as 100 (flagged upstream).
double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> gt);

struct EvalConfig {
  int chunks = 3;          // support-chunk protocol along the volume axis
  int image_size = 128;
  double binarize_at = 0.5;
};

struct EvalReport {
  int setting = 1;
  int fold = 0;
  std::map<std::string, double> per_class;  // "class_<k>" -> Dice %
  double mean = 0.0;
  std::vector<std::string> flags;  // skipped classes, both-empty conventions

  std::string to_json() const;
  std::string to_text_table() const;
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

/// Volumetric per-class Dice on the fold's test patients. The first test
/// patient provides supports; the rest are queries. Query slices are grouped
/// into `chunks` axis chunks and matched with the middle slice of the support
/// patient's corresponding chunk.
EvalReport evaluate(const RptPipeline& model, const DatasetPool& pool, const FoldSpec& fold,
                    const EvalConfig& cfg = {});

/// Grand mean over folds ("we only record the mean value").
double grand_mean(const std::vector<double>& fold_means);

struct BlockAblationRow {
  int n_blocks = 0;
  double mean_dice = 0.0;
};
/// One train+evaluate cycle per L with identical seeds and data order.
std::vector<BlockAblationRow> ablate_blocks(const DatasetPool& pool, const FoldSpec& fold,
                                            const TrainConfig& cfg,
                                            const std::vector<int>& l_values,
                                            const std::filesystem::path& work_dir);

struct LossAblationRow {
  std::string config;  // "ce", "ce+boundary", "ce+boundary+dice"
  double mean_dice = 0.0;
};
/// The three-row loss ablation; rows share seeds and data order.
std::vector<LossAblationRow> ablate_losses(const DatasetPool& pool, const FoldSpec& fold,
                                           const TrainConfig& cfg,
                                           const std::filesystem::path& work_dir);

}  // namespace rpt
