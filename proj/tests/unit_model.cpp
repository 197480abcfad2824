#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rpt/encoder.hpp"
#include "rpt/errors.hpp"
#include "rpt/prototypes.hpp"
#include "rpt/rpt_model.hpp"
#include "rpt/train.hpp"
#include "test_support.hpp"

using namespace rpt;
using testsup::random_tensor;

namespace {

FeatureMap fake_features(std::mt19937_64& rng, int c, int hp, int wp, bool grad = false) {
  FeatureMap fm;
  fm.values = random_tensor({c, hp, wp}, rng, -1.0, 1.0, grad);
  fm.stride = 8;
  return fm;
}

Mask random_mask(std::mt19937_64& rng, int h, int w, double p_fg) {
  Mask m(h, w);
  std::bernoulli_distribution b(p_fg);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = b(rng) ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("masked_average_pool matches a per-channel loop oracle") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    int c = 2 + static_cast<int>(rng() % 4), hp = 2 + static_cast<int>(rng() % 4),
        wp = 2 + static_cast<int>(rng() % 4);
    FeatureMap fm = fake_features(rng, c, hp, wp);
    Eigen::VectorXd m(hp * wp);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (long i = 0; i < m.size(); ++i) m[i] = u(rng);
    Tensor p = masked_average_pool(fm, m);
    REQUIRE(p.dim(0) == 1);
    REQUIRE(p.dim(1) == c);
    for (int ch = 0; ch < c; ++ch) {
      double num = 0, den = 0;
      for (long i = 0; i < m.size(); ++i) {
        num += fm.values.value()[static_cast<long>(ch) * hp * wp + i] * m[i];
        den += m[i];
      }
      CHECK(p.value()[ch] == doctest::Approx(num / den).epsilon(1e-9));
    }
  }
  FeatureMap fm = fake_features(rng, 3, 2, 2);
  CHECK_THROWS_AS(masked_average_pool(fm, Eigen::VectorXd::Zero(4)), EmptyMaskError);
}

TEST_CASE("assign_to_seeds: 1x10 strip splits 5/5 with the documented tie rule") {
  Mask strip(1, 10);
  strip.setConstant(1);
  RegionMaskSet r = assign_to_seeds(strip, {{0, 0}, {0, 9}});
  REQUIRE(r.n_regions() == 2);
  CHECK(r.masks[0].sum() == 5.0);  // pixel 4 nearer seed 0; no tie on even strip
  CHECK(r.masks[1].sum() == 5.0);
  // explicit tie: 1x9 strip, middle pixel equidistant -> lowest seed index
  Mask odd(1, 9);
  odd.setConstant(1);
  RegionMaskSet r2 = assign_to_seeds(odd, {{0, 0}, {0, 8}});
  CHECK(r2.masks[0].sum() == 5.0);
  CHECK(r2.masks[1].sum() == 4.0);
  CHECK(r2.masks[0][4] == 1.0);
}

TEST_CASE("voronoi_partition properties on random masks") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    int h = 3 + static_cast<int>(rng() % 8), w = 3 + static_cast<int>(rng() % 8);
    Mask m = random_mask(rng, h, w, 0.4);
    long fg = m.cast<long>().sum();
    if (fg == 0) {
      m(static_cast<int>(rng() % h), static_cast<int>(rng() % w)) = 1;  // degenerate 1-px case
      fg = 1;
    }
    int want = 1 + static_cast<int>(rng() % 6);
    RegionMaskSet r = voronoi_partition(m, want, rep);
    CHECK(r.n_regions() == std::min<long>(want, fg));
    Eigen::VectorXd cover = Eigen::VectorXd::Zero(h * w);
    for (const auto& rm : r.masks) {
      CHECK(rm.sum() >= 1.0);  // non-empty
      cover += rm;
    }
    long i = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++i) CHECK(cover[i] == (m(y, x) ? 1.0 : 0.0));

    RegionMaskSet again = voronoi_partition(m, want, rep);
    for (int k = 0; k < r.n_regions(); ++k) CHECK(r.masks[static_cast<size_t>(k)] == again.masks[static_cast<size_t>(k)]);
  }
  Mask empty(4, 4);
  empty.setZero();
  CHECK_THROWS_AS(voronoi_partition(empty, 3, 1), EmptyMaskError);
}

TEST_CASE("voronoi first seed sits nearest the foreground centroid") {
  Mask m(7, 7);
  m.setZero();
  for (int y = 2; y <= 4; ++y)
    for (int x = 2; x <= 4; ++x) m(y, x) = 1;
  RegionMaskSet r = voronoi_partition(m, 1, 99);
  REQUIRE(r.seeds.size() == 1);
  CHECK(r.seeds[0] == std::pair<int, int>{3, 3});
}

TEST_CASE("regional prototypes stack MAP rows") {
  std::mt19937_64 rng(13);
  FeatureMap fm = fake_features(rng, 4, 3, 3);
  Mask m(3, 3);
  m.setConstant(1);
  RegionMaskSet r = voronoi_partition(m, 3, 5);
  Tensor P = regional_prototypes(fm, r);
  REQUIRE(P.dim(0) == 3);
  REQUIRE(P.dim(1) == 4);
  for (int k = 0; k < 3; ++k) {
    Tensor row = masked_average_pool(fm, r.masks[static_cast<size_t>(k)]);
    for (int c = 0; c < 4; ++c)
      CHECK(P.value()[static_cast<long>(k) * 4 + c] == doctest::Approx(row.value()[c]));
  }
}

TEST_CASE("estimate_query_mask: range, formula, degenerate prototype") {
  std::mt19937_64 rng(14);
  FeatureMap fm = fake_features(rng, 5, 3, 4);
  Tensor proto = random_tensor({1, 5}, rng);
  Tensor tau = Tensor::scalar(0.3);
  Tensor m = estimate_query_mask(fm, proto, tau);
  REQUIRE(m.dim(1) == 12);
  for (long i = 0; i < 12; ++i) {
    CHECK(m.value()[i] > 0.0);
    CHECK(m.value()[i] < 1.0);
    double dot = 0, nf = 0, np = 0;
    for (int c = 0; c < 5; ++c) {
      double fv = fm.values.value()[static_cast<long>(c) * 12 + i];
      dot += fv * proto.value()[c];
      nf += fv * fv;
      np += proto.value()[c] * proto.value()[c];
    }
    double cos = dot / (std::sqrt(nf) * std::sqrt(np) + 1e-8);
    double want = 1.0 - 1.0 / (1.0 + std::exp(20.0 * cos + 0.3));
    CHECK(m.value()[i] == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK_THROWS_AS(estimate_query_mask(fm, Tensor::zeros({1, 5}), tau),
                  DegeneratePrototypeError);
}

TEST_CASE("query_prototype equals soft-weighted MAP") {
  std::mt19937_64 rng(15);
  FeatureMap fm = fake_features(rng, 3, 2, 3);
  Tensor mask = random_tensor({1, 6}, rng, 0.05, 0.95, false);
  Tensor q = query_prototype(fm, mask);
  for (int c = 0; c < 3; ++c) {
    double num = 0, den = 0;
    for (long i = 0; i < 6; ++i) {
      num += fm.values.value()[static_cast<long>(c) * 6 + i] * mask.value()[i];
      den += mask.value()[i];
    }
    CHECK(q.value()[c] == doctest::Approx(num / den));
  }
  CHECK_THROWS_AS(query_prototype(fm, Tensor::zeros({1, 6})), EmptyMaskError);
}

TEST_CASE("threshold head: GAP then two affine layers") {
  std::mt19937_64 rng(16);
  nn::ParamStore ps;
  ThresholdHead head(ps, 6, rng);
  FeatureMap fm = fake_features(rng, 6, 2, 2);
  Tensor tau = head.compute(fm);
  CHECK(tau.size() == 1);
  // reference: mean over spatial -> fc1 -> relu -> fc2
  Eigen::VectorXd gap = Eigen::VectorXd::Zero(6);
  for (int c = 0; c < 6; ++c)
    for (long i = 0; i < 4; ++i) gap[c] += fm.values.value()[static_cast<long>(c) * 4 + i] / 4.0;
  Eigen::VectorXd h1 = head.fc1.W.mat() * gap + Eigen::VectorXd(head.fc1.b.value());
  h1 = h1.cwiseMax(0.0);
  double want = (head.fc2.W.mat() * h1)(0, 0) + head.fc2.b.value()[0];
  CHECK(tau.item() == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("affinity matches dot-product oracle") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    int nf = 1 + static_cast<int>(rng() % 8), c = 2 + static_cast<int>(rng() % 6);
    Tensor P_s = random_tensor({nf, c}, rng);
    Tensor P_q = random_tensor({1, c}, rng);
    Tensor A = affinity(P_s, P_q);
    REQUIRE(A.dim(0) == nf);
    REQUIRE(A.dim(1) == 1);
    for (int i = 0; i < nf; ++i) {
      double dot = 0;
      for (int k = 0; k < c; ++k)
        dot += P_s.value()[static_cast<long>(i) * c + k] * P_q.value()[k];
      CHECK(A.value()[i] == doctest::Approx(dot).epsilon(1e-10));
    }
  }
}

TEST_CASE("selective map worked examples") {
  {
    Eigen::VectorXd A(3);
    A << 0.9, 0.5, 0.1;
    SelectiveMap s = selective_map(A);
    CHECK(s.xi == doctest::Approx(0.3));
    CHECK(s.kept(0));
    CHECK(s.kept(1));
    CHECK_FALSE(s.kept(2));
    CHECK(s.values[2] == SelectiveMap::kFiltered);
  }
  {
    Eigen::VectorXd A(2);
    A << 1.0, -1.0;
    SelectiveMap s = selective_map(A);
    CHECK(s.xi == doctest::Approx(-0.5));
    CHECK(s.kept(0));
    CHECK_FALSE(s.kept(1));  // -1 < -0.5
  }
}

TEST_CASE("selective map: formula, kept-set, shift invariance on 1000 vectors") {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    long n = 1 + static_cast<long>(rng() % 12);
    Eigen::VectorXd A(n);
    for (long i = 0; i < n; ++i) A[i] = u(rng);
    SelectiveMap s = selective_map(A);
    double xi = (A.minCoeff() + A.mean()) / 2.0;
    CHECK(s.xi == xi);
    CHECK(s.kept_count() >= 1);
    for (long i = 0; i < n; ++i) CHECK(s.kept(i) == (A[i] >= xi));
    double shift = u(rng);
    SelectiveMap s2 = selective_map((A.array() + shift).matrix());
    for (long i = 0; i < n; ++i) CHECK(s.kept(i) == s2.kept(i));
  }
}

TEST_CASE("sf_aggregate: rows sum to P_q, filtered rows zero, singleton identity") {
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 100; ++rep) {
    int nf = 1 + static_cast<int>(rng() % 7), c = 2 + static_cast<int>(rng() % 5);
    Tensor P_s = random_tensor({nf, c}, rng);
    Tensor P_q = random_tensor({1, c}, rng);
    SelectiveMap S = selective_map(affinity(P_s, P_q).value());
    Tensor out = sf_aggregate(P_s, P_q, S);
    REQUIRE(out.dim(0) == nf);
    for (int k = 0; k < c; ++k) {
      double col = 0;
      for (int i = 0; i < nf; ++i) col += out.value()[static_cast<long>(i) * c + k];
      CHECK(col == doctest::Approx(P_q.value()[k]).epsilon(1e-9));
    }
    for (int i = 0; i < nf; ++i)
      if (!S.kept(i))
        for (int k = 0; k < c; ++k) CHECK(out.value()[static_cast<long>(i) * c + k] == 0.0);
    if (nf == 1)
      for (int k = 0; k < c; ++k) CHECK(out.value()[k] == doctest::Approx(P_q.value()[k]));
  }
}

TEST_CASE("sf_aggregate oracle: manual softmax aggregation") {
  std::mt19937_64 rng(20);
  for (int rep = 0; rep < 100; ++rep) {
    int nf = 2 + static_cast<int>(rng() % 6), c = 2 + static_cast<int>(rng() % 4);
    Tensor P_s = random_tensor({nf, c}, rng);
    Tensor P_q = random_tensor({1, c}, rng);
    SelectiveMap S = selective_map(affinity(P_s, P_q).value());
    Tensor out = sf_aggregate(P_s, P_q, S);
    // oracle: softmax over kept logits only
    Eigen::VectorXd logits(nf);
    for (int i = 0; i < nf; ++i) {
      double dot = 0;
      for (int k = 0; k < c; ++k)
        dot += P_s.value()[static_cast<long>(i) * c + k] * P_q.value()[k];
      logits[i] = dot + S.values[i];
    }
    Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
    w /= w.sum();
    for (int i = 0; i < nf; ++i)
      for (int k = 0; k < c; ++k)
        CHECK(out.value()[static_cast<long>(i) * c + k] ==
              doctest::Approx(w[i] * P_q.value()[k]).epsilon(1e-8));
  }
}

TEST_CASE("BaT block: shape, finiteness, permutation equivariance") {
  std::mt19937_64 rng(21);
  RptConfig cfg;
  cfg.n_regions = 5;
  cfg.heads = 2;
  nn::ParamStore ps;
  std::mt19937_64 init(3);
  BaTBlock block(ps, "blk", 8, cfg, init);
  Tensor P = random_tensor({5, 8}, rng, -1, 1, false);
  Tensor Pq = random_tensor({1, 8}, rng, -1, 1, false);
  Tensor out = block.forward(P, Pq, cfg);
  REQUIRE(out.dim(0) == 5);
  REQUIRE(out.dim(1) == 8);
  for (long i = 0; i < out.size(); ++i) CHECK(std::isfinite(out.value()[i]));

  // permute region rows: output rows permute identically (no positional encoding)
  std::vector<int> perm{3, 0, 4, 1, 2};
  Eigen::VectorXd pv(5 * 8);
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 8; ++k)
      pv[static_cast<long>(i) * 8 + k] = P.value()[static_cast<long>(perm[static_cast<size_t>(i)]) * 8 + k];
  Tensor P2 = Tensor::from({5, 8}, pv);
  Tensor out2 = block.forward(P2, Pq, cfg);
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 8; ++k)
      CHECK(out2.value()[static_cast<long>(i) * 8 + k] ==
            doctest::Approx(out.value()[static_cast<long>(perm[static_cast<size_t>(i)]) * 8 + k])
                .epsilon(1e-9));
}

TEST_CASE("BaT block without S&F keeps all regions") {
  std::mt19937_64 rng(22);
  RptConfig cfg;
  cfg.n_regions = 4;
  cfg.heads = 2;
  cfg.use_sf = false;
  nn::ParamStore ps;
  std::mt19937_64 init(4);
  BaTBlock block(ps, "blk", 8, cfg, init);
  Tensor P = random_tensor({4, 8}, rng, -1, 1, false);
  Tensor Pq = random_tensor({1, 8}, rng, -1, 1, false);
  CHECK_NOTHROW(block.forward(P, Pq, cfg));
}

TEST_CASE("encoder: stride-8 geometry, shared weights, input validation") {
  std::mt19937_64 rng(23);
  nn::ParamStore ps;
  std::mt19937_64 init(5);
  DeskEncoder enc(ps, EncoderConfig{12}, init);
  Image img(32, 40);
  std::uniform_real_distribution<double> u(0, 1);
  for (long i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  FeatureMap fs = enc.forward(img, FeatureSource::kSupport);
  FeatureMap fq = enc.forward(img, FeatureSource::kQuery);
  CHECK(fs.channels() == 12);
  CHECK(fs.hp() == 4);
  CHECK(fs.wp() == 5);
  CHECK(fs.stride == 8);
  // one parameter set: identical input gives identical features for both roles
  for (long i = 0; i < fs.values.size(); ++i)
    CHECK(fs.values.value()[i] == fq.values.value()[i]);
  CHECK(fs.source == FeatureSource::kSupport);

  Image bad = img;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(enc.forward(bad, FeatureSource::kQuery), ParameterError);
}

TEST_CASE("pipeline: trace length L, mask complementarity, block count ablation") {
  std::mt19937_64 rng(24);
  for (int L : {1, 3}) {
    RptConfig cfg;
    cfg.n_regions = 4;
    cfg.n_blocks = L;
    cfg.heads = 2;
    RptPipeline model(EncoderConfig{8}, cfg, 7);

    Episode ep;
    ep.support_image.resize(32, 32);
    ep.query_image.resize(32, 32);
    ep.support_mask.resize(32, 32);
    ep.query_mask.resize(32, 32);
    std::uniform_real_distribution<double> u(0, 1);
    for (long i = 0; i < 1024; ++i) {
      ep.support_image.data()[i] = u(rng);
      ep.query_image.data()[i] = u(rng);
    }
    ep.support_mask.setZero();
    ep.query_mask.setZero();
    for (int y = 8; y < 24; ++y)
      for (int x = 8; x < 24; ++x) {
        ep.support_mask(y, x) = 1;
        ep.query_mask(y, x) = 1;
      }
    auto out = model.run_episode(ep, 1);
    CHECK(out.trace.size() == static_cast<size_t>(L));
    CHECK(out.pred_full.dim(0) == 32);
    CHECK(out.pred_full.dim(1) == 32);
    for (long i = 0; i < out.pred_coarse.size(); ++i) {
      CHECK(out.pred_coarse.value()[i] > 0.0);
      CHECK(out.pred_coarse.value()[i] < 1.0);
    }
    FeatureMap fq = model.encoder().forward(ep.query_image, FeatureSource::kQuery);
    auto [fg, bg] = model.predict_masks(fq, out.trace.back(),
                                        model.threshold_head().compute(fq));
    for (long i = 0; i < fg.size(); ++i)
      CHECK(fg.value()[i] + bg.value()[i] == doctest::Approx(1.0).epsilon(1e-12));

    // identical seeds -> identical runs
    RptPipeline model2(EncoderConfig{8}, cfg, 7);
    auto out2 = model2.run_episode(ep, 1);
    for (long i = 0; i < out.pred_coarse.size(); ++i)
      CHECK(out.pred_coarse.value()[i] == out2.pred_coarse.value()[i]);
  }
}

TEST_CASE("numeric failures inside a block are wrapped with the block index") {
  RptConfig cfg;
  cfg.n_regions = 2;
  cfg.n_blocks = 2;
  cfg.heads = 2;
  RptPipeline model(EncoderConfig{8}, cfg, 9);
  std::mt19937_64 rng(31);
  FeatureMap fq = fake_features(rng, 8, 2, 2);
  Tensor nan_proto = Tensor::full({2, 8}, std::numeric_limits<double>::quiet_NaN());
  Tensor pq = random_tensor({1, 8}, rng);
  CHECK_THROWS_WITH_AS(model.rpt_forward(nan_proto, pq, fq, Tensor::scalar(0.0)),
                       doctest::Contains("block 0"), NumericError);
}
