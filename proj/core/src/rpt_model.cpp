#include "rpt/rpt_model.hpp"

#include "rpt/errors.hpp"

namespace rpt {

long SelectiveMap::kept_count() const {
  long n = 0;
  for (long i = 0; i < values.size(); ++i) n += kept(i) ? 1 : 0;
  return n;
}

Tensor affinity(const Tensor& P_s, const Tensor& P_q) {
  return matmul(P_s, transpose(P_q));  // [N_f,1]
}

SelectiveMap selective_map(const Eigen::VectorXd& A) {
  if (A.size() < 1) throw ParameterError("selective_map: empty affinity");
  SelectiveMap s;
  s.xi = (A.minCoeff() + A.mean()) / 2.0;
  s.values = Eigen::VectorXd::Zero(A.size());
  for (long i = 0; i < A.size(); ++i)
    if (!(A[i] >= s.xi)) s.values[i] = SelectiveMap::kFiltered;
  return s;
}

Tensor sf_aggregate(const Tensor& P_s, const Tensor& P_q, const SelectiveMap& S) {
  const int nf = P_s.dim(0);
  Tensor logits = add_const(affinity(P_s, P_q), S.values);     // [N_f,1]
  Tensor w = softmax_rows(logits.reshape({1, nf})).reshape({nf, 1});
  return matmul(w, P_q);                                       // [N_f,C]
}

BaTBlock::BaTBlock(nn::ParamStore& ps, const std::string& prefix, int width,
                   const RptConfig& cfg, std::mt19937_64& rng)
    : mha(ps, prefix + "/mha", width, cfg.heads, rng),
      mlp(ps, prefix + "/mlp", width, width * cfg.mlp_ratio, rng),
      ln1(ps, prefix + "/ln1", width),
      ln2(ps, prefix + "/ln2", width) {}

Tensor BaTBlock::forward(const Tensor& P_in, const Tensor& P_q, const RptConfig& cfg) const {
  Tensor A = affinity(P_in, P_q);
  SelectiveMap S;
  if (cfg.use_sf) {
    S = selective_map(A.value());
  } else {
    S.values = Eigen::VectorXd::Zero(A.size());
    S.xi = 0.0;
  }
  Tensor agg;
  if (!cfg.alt_attention) {
    agg = sf_aggregate(P_in, P_q, S);
  } else {
    // conventional reading: the query attends over the support regions
    const int nf = P_in.dim(0);
    Tensor logits = add_const(A, S.values).reshape({1, nf});
    Tensor refined = matmul(softmax_rows(logits), P_in);  // [1,C]
    agg = matmul(Tensor::full({nf, 1}, 1.0), refined);
  }
  check_finite(agg, "sf_aggregate");
  Tensor t = ln1.forward(add(mha.forward(agg), agg));
  check_finite(t, "bat_attention");
  Tensor out = ln2.forward(add(mlp.forward(t), t));
  check_finite(out, "bat_mlp");
  return out;
}

RptPipeline::RptPipeline(const EncoderConfig& enc_cfg, const RptConfig& cfg, uint64_t init_seed)
    : cfg_(cfg),
      init_rng_(init_seed),
      encoder_(params_, enc_cfg, init_rng_),
      head_(params_, enc_cfg.width, init_rng_) {
  if (cfg.n_blocks < 1) throw ParameterError("RptConfig: n_blocks must be >= 1");
  if (cfg.n_regions < 1) throw ParameterError("RptConfig: n_regions must be >= 1");
  blocks_.reserve(static_cast<size_t>(cfg.n_blocks));
  for (int l = 0; l < cfg.n_blocks; ++l)
    blocks_.emplace_back(params_, "rpt/block" + std::to_string(l), enc_cfg.width, cfg_,
                         init_rng_);
}

RptForwardResult RptPipeline::rpt_forward(const Tensor& P_s0, const Tensor& P_q0,
                                          const FeatureMap& F_q, const Tensor& tau) const {
  RptForwardResult res;
  Tensor P_s = P_s0;
  Tensor P_q = P_q0;
  for (size_t l = 0; l < blocks_.size(); ++l) {
    try {
      P_s = blocks_[l].forward(P_s, P_q, cfg_);
      P_q = query_prototype(F_q, estimate_query_mask(F_q, row_mean(P_s), tau));
    } catch (const std::runtime_error& e) {
      throw NumericError("rpt_forward block " + std::to_string(l) + ": " + e.what());
    }
    res.trace.push_back(P_s);
  }
  res.P_s_final = P_s;
  return res;
}

std::pair<Tensor, Tensor> RptPipeline::predict_masks(const FeatureMap& F_q,
                                                     const Tensor& P_s_final,
                                                     const Tensor& tau) const {
  Tensor fg = estimate_query_mask(F_q, row_mean(P_s_final), tau);
  Tensor bg = add_scalar(neg(fg), 1.0);
  return {fg, bg};
}

RptPipeline::EpisodeOutput RptPipeline::run_episode(const Episode& ep,
                                                    uint64_t voronoi_seed) const {
  FeatureMap F_s = encoder_.forward(ep.support_image, FeatureSource::kSupport);
  FeatureMap F_q = encoder_.forward(ep.query_image, FeatureSource::kQuery);

  Mask fg_grid = resize_nearest(ep.support_mask, F_s.hp(), F_s.wp());
  if (fg_grid.cast<long>().sum() == 0) {
    // Thin structures can vanish under nearest resampling at stride 8; fall
    // back to coverage pooling so every mask with foreground keeps some cell.
    for (long y = 0; y < ep.support_mask.rows(); ++y)
      for (long x = 0; x < ep.support_mask.cols(); ++x)
        if (ep.support_mask(y, x))
          fg_grid(static_cast<int>(y * F_s.hp() / ep.support_mask.rows()),
                  static_cast<int>(x * F_s.wp() / ep.support_mask.cols())) = 1;
  }
  RegionMaskSet regions = voronoi_partition(fg_grid, cfg_.n_regions, voronoi_seed);
  Tensor P_s0 = regional_prototypes(F_s, regions);

  Eigen::VectorXd fg_flat(F_s.spatial());
  for (int y = 0; y < F_s.hp(); ++y)
    for (int x = 0; x < F_s.wp(); ++x)
      fg_flat[static_cast<long>(y) * F_s.wp() + x] = fg_grid(y, x) ? 1.0 : 0.0;
  Tensor tau = head_.compute(F_q);

  Tensor P_g = masked_average_pool(F_s, fg_flat);
  Tensor P_q0 = query_prototype(F_q, estimate_query_mask(F_q, P_g, tau));
  RptForwardResult fwd = rpt_forward(P_s0, P_q0, F_q, tau);
  auto [pred_fg, pred_bg] = predict_masks(F_q, fwd.P_s_final, tau);
  (void)pred_bg;

  EpisodeOutput out;
  out.pred_coarse = pred_fg;
  out.trace = std::move(fwd.trace);
  out.tau = tau.item();
  Tensor grid = pred_fg.reshape({F_q.hp(), F_q.wp()});
  out.pred_full = upsample_bilinear(grid, static_cast<int>(ep.query_image.rows()),
                                    static_cast<int>(ep.query_image.cols()));
  return out;
}

}  // namespace rpt
