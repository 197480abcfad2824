#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "rpt/episodes.hpp"
#include "rpt/losses.hpp"
#include "rpt/rpt_model.hpp"

namespace rpt {

struct TrainConfig {
  long iterations = 30000;
  int batch_size = 1;
  double lr0 = 1e-3;
  double lr_decay = 0.8;
  long lr_decay_every = 1000;
  int n_regions = 10;  // N_f
  int n_blocks = 3;    // L
  uint64_t seed = 0;
  long iters_per_epoch = 1000;
  std::string optimizer = "sgd";
  double momentum = 0.9;
  int width = 64;        // encoder channels C
  int image_size = 128;  // working slice resolution
  int min_fg_pixels = 100;
  LossFlags loss_flags;
  bool use_sf = true;

  void validate() const;
};

/// lr0 * decay^floor(iter/every); piecewise constant with breakpoints at
/// multiples of `lr_decay_every`.
double lr_at(long iter, const TrainConfig& cfg);

struct LossRow {
  long iter = 0;
  double ce = 0, dice = 0, boundary = 0, eta = 0, total = 0, lr = 0;
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows);

struct TrainResult {
  std::vector<LossRow> rows;
  std::filesystem::path checkpoint;
};

/// Builds the model from cfg and runs the episodic loop on the fold's
/// training stream. On numeric divergence, writes the last-good checkpoint
/// and throws NumericError naming the iteration.
TrainResult train(const DatasetPool& pool, const FoldSpec& fold, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

/// Same loop over a fixed episode list (episode i = list[i % size]); used for
/// overfit checks and controlled experiments on an externally owned model.
std::vector<LossRow> train_episodes(RptPipeline& model, const std::vector<Episode>& episodes,
                                    const TrainConfig& cfg,
                                    const std::filesystem::path* last_good_ckpt = nullptr);

RptPipeline make_pipeline(const TrainConfig& cfg);

}  // namespace rpt
