#include "rpt/train.hpp"

#include <cmath>
#include <fstream>

#include "rpt/checkpoint.hpp"
#include "rpt/errors.hpp"

namespace rpt {

void TrainConfig::validate() const {
  if (iterations < 1 || batch_size < 1 || lr0 <= 0 || lr_decay <= 0 || lr_decay_every < 1 ||
      n_regions < 1 || n_blocks < 1 || iters_per_epoch < 1 || width < 1 || image_size < 8)
    throw ParameterError("TrainConfig: all quantities must be positive");
  if (optimizer != "sgd") throw ParameterError("TrainConfig: unknown optimizer " + optimizer);
}

double lr_at(long iter, const TrainConfig& cfg) {
  if (iter < 0) throw ParameterError("lr_at: negative iteration");
  return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(iter / cfg.lr_decay_every));
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write loss log: " + path.string());
  os << "iter,ce,dice,boundary,eta,total,lr\n";
  os.precision(12);
  for (const auto& r : rows)
    os << r.iter << ',' << r.ce << ',' << r.dice << ',' << r.boundary << ',' << r.eta << ','
       << r.total << ',' << r.lr << '\n';
}

RptPipeline make_pipeline(const TrainConfig& cfg) {
  EncoderConfig enc{cfg.width};
  RptConfig rc;
  rc.n_regions = cfg.n_regions;
  rc.n_blocks = cfg.n_blocks;
  rc.use_sf = cfg.use_sf;
  return RptPipeline(enc, rc, cfg.seed);
}

namespace {

uint64_t voronoi_seed_for(uint64_t seed, long iter) {
  return seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(iter) * 0xbf58476d1ce4e5b9ULL + 1;
}

LossRow run_iteration(RptPipeline& model, nn::SgdOptimizer& opt, const Episode& ep,
                      long iter, const TrainConfig& cfg,
                      const std::filesystem::path* last_good_ckpt) {
  auto abort_diverged = [&](const std::string& detail) {
    if (last_good_ckpt)
      save_checkpoint(*last_good_ckpt, model.params(), {{"aborted_at", std::to_string(iter)}});
    throw NumericError("training diverged at iteration " + std::to_string(iter) + ": " +
                       detail);
  };
  LossBundle loss;
  try {
    auto out = model.run_episode(ep, voronoi_seed_for(cfg.seed, iter));
    loss = combined_loss(out.pred_full, ep.query_mask, iter / cfg.iters_per_epoch,
                         cfg.loss_flags);
  } catch (const NumericError& e) {
    abort_diverged(e.what());
  }
  if (!std::isfinite(loss.total)) abort_diverged("non-finite loss");
  opt.zero_grad();
  loss.total_t.backward();
  opt.step(lr_at(iter, cfg));
  LossRow row;
  row.iter = iter;
  row.ce = loss.ce;
  row.dice = loss.dice;
  row.boundary = loss.boundary;
  row.eta = loss.eta;
  row.total = loss.total;
  row.lr = lr_at(iter, cfg);
  return row;
}

}  // namespace

std::vector<LossRow> train_episodes(RptPipeline& model, const std::vector<Episode>& episodes,
                                    const TrainConfig& cfg,
                                    const std::filesystem::path* last_good_ckpt) {
  cfg.validate();
  if (episodes.empty()) throw ParameterError("train_episodes: empty episode list");
  nn::SgdOptimizer opt(model.params().tensors(), cfg.momentum);
  std::vector<LossRow> rows;
  rows.reserve(static_cast<size_t>(cfg.iterations));
  for (long iter = 0; iter < cfg.iterations; ++iter) {
    const Episode& ep = episodes[static_cast<size_t>(iter) % episodes.size()];
    rows.push_back(run_iteration(model, opt, ep, iter, cfg, last_good_ckpt));
  }
  return rows;
}

TrainResult train(const DatasetPool& pool, const FoldSpec& fold, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  RptPipeline model = make_pipeline(cfg);
  nn::SgdOptimizer opt(model.params().tensors(), cfg.momentum);

  SamplerConfig scfg;
  scfg.image_size = cfg.image_size;
  scfg.min_fg_pixels = cfg.min_fg_pixels;
  EpisodeSampler sampler(pool, fold, cfg.seed, SampleMode::kTrain, scfg);

  std::filesystem::path last_good = out_dir / "last_good.ckpt";
  std::vector<LossRow> rows;
  rows.reserve(static_cast<size_t>(cfg.iterations));
  for (long iter = 0; iter < cfg.iterations; ++iter) {
    Episode ep = sampler.draw(iter);
    rows.push_back(run_iteration(model, opt, ep, iter, cfg, &last_good));
  }

  TrainResult res;
  res.rows = std::move(rows);
  res.checkpoint = out_dir / "model.ckpt";
  save_checkpoint(res.checkpoint, model.params(),
                  {{"fold", std::to_string(fold.fold_index)},
                   {"setting", std::to_string(fold.setting)},
                   {"iterations", std::to_string(cfg.iterations)},
                   {"seed", std::to_string(cfg.seed)}});
  write_loss_csv(out_dir / "loss_log.csv", res.rows);
  return res;
}

}  // namespace rpt
