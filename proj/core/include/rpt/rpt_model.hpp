#pragma once

#include <random>
#include <vector>

#include "rpt/encoder.hpp"
#include "rpt/episodes.hpp"
#include "rpt/prototypes.hpp"

namespace rpt {

/// Additive pre-softmax mask over regional prototypes: 0 keeps a region,
/// kFiltered (stand-in for -inf) removes it. At least one entry is always 0.
struct SelectiveMap {
  static constexpr double kFiltered = -1e9;
  Eigen::VectorXd values;  // N_f entries in {0, kFiltered}
  double xi = 0.0;         // (min(A) + mean(A)) / 2

  bool kept(long i) const { return values[i] == 0.0; }
  long kept_count() const;
};

/// A_i = <P_s[i], P_q>, raw dot product -> [N_f, 1].
Tensor affinity(const Tensor& P_s, const Tensor& P_q);

/// Search & Filter rule on raw affinity values (non-differentiable selection).
SelectiveMap selective_map(const Eigen::VectorXd& A);

/// softmax(P_s P_q^T + S) P_q -> [N_f, C]; filtered rows are exactly zero and
/// the rows sum to P_q.
Tensor sf_aggregate(const Tensor& P_s, const Tensor& P_q, const SelectiveMap& S);

struct RptConfig {
  int n_regions = 10;   // N_f
  int n_blocks = 3;     // L
  int heads = 4;
  int mlp_ratio = 4;
  bool use_sf = true;        // Search & Filter on/off (ablation)
  bool alt_attention = false;  // attend the query over support regions instead
};

/// One Bias-alleviated Transformer block: S&F aggregation, then post-norm
/// residual self-attention over the region axis, then a post-norm residual MLP.
struct BaTBlock {
  nn::MultiHeadAttention mha;
  nn::Mlp mlp;
  nn::LayerNorm ln1, ln2;

  BaTBlock() = default;
  BaTBlock(nn::ParamStore& ps, const std::string& prefix, int width, const RptConfig& cfg,
           std::mt19937_64& rng);
  Tensor forward(const Tensor& P_in, const Tensor& P_q, const RptConfig& cfg) const;
};

struct RptForwardResult {
  Tensor P_s_final;            // [N_f, C]
  std::vector<Tensor> trace;   // P_s^l per block, length L
};

/// Full model: shared encoder, threshold head, and L stacked BaT blocks.
class RptPipeline {
 public:
  RptPipeline(const EncoderConfig& enc_cfg, const RptConfig& cfg, uint64_t init_seed);

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const RptConfig& config() const { return cfg_; }
  const DeskEncoder& encoder() const { return encoder_; }
  const ThresholdHead& threshold_head() const { return head_; }

  /// L-step iterative rectification with per-step QPG updates. P_q0 is the
  /// coarse query prototype derived from the global support prototype.
  RptForwardResult rpt_forward(const Tensor& P_s0, const Tensor& P_q0, const FeatureMap& F_q,
                               const Tensor& tau) const;

  /// Foreground/background pair from the rectified prototypes; entries in
  /// (0,1), fg + bg == 1 pixel-wise. Both are [1, H'*W'].
  std::pair<Tensor, Tensor> predict_masks(const FeatureMap& F_q, const Tensor& P_s_final,
                                          const Tensor& tau) const;

  struct EpisodeOutput {
    Tensor pred_full;   // [H,W] soft foreground at input resolution
    Tensor pred_coarse; // [1, H'*W']
    std::vector<Tensor> trace;
    double tau = 0.0;
  };
  /// The whole per-episode pipeline: features -> RPG -> QPG -> RPT -> mask.
  EpisodeOutput run_episode(const Episode& ep, uint64_t voronoi_seed) const;

 private:
  RptConfig cfg_;
  nn::ParamStore params_;
  std::mt19937_64 init_rng_;
  DeskEncoder encoder_;
  ThresholdHead head_;
  std::vector<BaTBlock> blocks_;
};

}  // namespace rpt
