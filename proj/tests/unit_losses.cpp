#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "rpt/checkpoint.hpp"
#include "rpt/errors.hpp"
#include "rpt/eval.hpp"
#include "rpt/losses.hpp"
#include "test_support.hpp"

using namespace rpt;
using testsup::gradcheck;
using testsup::random_tensor;

namespace {

Mask random_mask(std::mt19937_64& rng, int h, int w, double p_fg) {
  Mask m(h, w);
  std::bernoulli_distribution b(p_fg);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = b(rng) ? 1 : 0;
  return m;
}

// all-pairs brute force: distance of every pixel to the nearest boundary pixel,
// boundary = fg pixel with a 4-connected bg neighbour
Eigen::MatrixXd brute_signed_distance(const Mask& gt) {
  const long h = gt.rows(), w = gt.cols();
  std::vector<std::pair<long, long>> boundary;
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      if (!gt(y, x)) continue;
      if ((y > 0 && !gt(y - 1, x)) || (y + 1 < h && !gt(y + 1, x)) ||
          (x > 0 && !gt(y, x - 1)) || (x + 1 < w && !gt(y, x + 1)))
        boundary.emplace_back(y, x);
    }
  Eigen::MatrixXd phi(h, w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double best = 1e18;
      for (auto [by, bx] : boundary)
        best = std::min(best, static_cast<double>((y - by) * (y - by) + (x - bx) * (x - bx)));
      double d = std::sqrt(best);
      phi(y, x) = gt(y, x) ? -d : d;
    }
  return phi;
}

}  // namespace

TEST_CASE("signed_distance matches the all-pairs oracle on 100 random masks") {
  std::mt19937_64 rng(41);
  int done = 0;
  while (done < 100) {
    int h = 3 + static_cast<int>(rng() % 10), w = 3 + static_cast<int>(rng() % 10);
    Mask m = random_mask(rng, h, w, 0.35);
    long fg = m.cast<long>().sum();
    if (fg == 0 || fg == m.size()) continue;
    ++done;
    DistanceMap dm = signed_distance(m);
    Eigen::MatrixXd ref = brute_signed_distance(m);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        CHECK(dm.phi(y, x) == doctest::Approx(ref(y, x)).epsilon(1e-9));
  }
  Mask all1(3, 3);
  all1.setConstant(1);
  CHECK_THROWS_AS(signed_distance(all1), ParameterError);
  all1.setZero();
  CHECK_THROWS_AS(signed_distance(all1), ParameterError);
}

TEST_CASE("signed distance sign convention and boundary zeros") {
  Mask m(5, 5);
  m.setZero();
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 3; ++x) m(y, x) = 1;
  DistanceMap dm = signed_distance(m);
  CHECK(dm.phi(2, 2) < 0.0);   // interior negative
  CHECK(dm.phi(0, 0) > 0.0);   // exterior positive
  CHECK(dm.phi(1, 1) == 0.0);  // fg pixel adjacent to bg
  CHECK(dm.phi(2, 2) == doctest::Approx(-1.0));
  CHECK(dm.phi(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("bce closed forms") {
  Mask gt(1, 2);
  gt(0, 0) = 1;
  gt(0, 1) = 0;
  Tensor half = Tensor::full({1, 2}, 0.5);
  CHECK(bce_loss(half, gt).item() == doctest::Approx(std::log(2.0)));
  Tensor perfect = Tensor::from({1, 2}, std::vector<double>{1.0, 0.0});
  CHECK(bce_loss(perfect, gt).item() ==
        doctest::Approx(-std::log(1.0 - kBceEps)).epsilon(1e-6));
  Tensor wrong = Tensor::from({1, 2}, std::vector<double>{0.0, 1.0});
  CHECK(bce_loss(wrong, gt).item() == doctest::Approx(-std::log(kBceEps)).epsilon(1e-6));
}

TEST_CASE("bce matches a manual loop on random inputs") {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 50; ++rep) {
    int h = 2 + static_cast<int>(rng() % 4), w = 2 + static_cast<int>(rng() % 4);
    Mask gt = random_mask(rng, h, w, 0.5);
    Tensor p = random_tensor({h, w}, rng, 0.02, 0.98, false);
    double want = 0;
    long i = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++i) {
        double pi = p.value()[i];
        want -= gt(y, x) ? std::log(pi) : std::log(1.0 - pi);
      }
    want /= static_cast<double>(h) * w;
    CHECK(bce_loss(p, gt).item() == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("dice loss closed forms with smoothing 1") {
  Mask gt(1, 4);
  gt.setConstant(1);
  Tensor exact = Tensor::full({1, 4}, 1.0);
  CHECK(dice_loss(exact, gt).item() == doctest::Approx(1.0 - 9.0 / 9.0));
  Tensor none = Tensor::full({1, 4}, 0.0);
  CHECK(dice_loss(none, gt).item() == doctest::Approx(1.0 - 1.0 / 5.0));
  Mask empty(1, 4);
  empty.setZero();
  CHECK(dice_loss(none, empty).item() == doctest::Approx(0.0));  // smoothing saves 0/0
}

TEST_CASE("boundary loss is linear in the prediction and minimal inside") {
  Mask gt(6, 6);
  gt.setZero();
  for (int y = 1; y <= 4; ++y)
    for (int x = 1; x <= 4; ++x) gt(y, x) = 1;
  DistanceMap dm = signed_distance(gt);
  Tensor inside = Tensor::zeros({6, 6});
  Tensor outside = Tensor::zeros({6, 6});
  {
    Eigen::VectorXd vi = Eigen::VectorXd::Zero(36), vo = Eigen::VectorXd::Zero(36);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) (gt(y, x) ? vi : vo)[y * 6 + x] = 1.0;
    inside = Tensor::from({6, 6}, vi);
    outside = Tensor::from({6, 6}, vo);
  }
  double li = boundary_loss(inside, dm).item();
  double lo = boundary_loss(outside, dm).item();
  CHECK(li < 0.0);
  CHECK(lo > 0.0);
  CHECK(li < lo);
  // linearity: L(a+b) = L(a)+L(b)
  Tensor both = add(inside, outside);
  CHECK(boundary_loss(both, dm).item() == doctest::Approx(li + lo).epsilon(1e-12));
  // oracle value: mean(phi * pred)
  double want = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      if (gt(y, x)) want += dm.phi(y, x);
  CHECK(li == doctest::Approx(want / 36.0));
}

TEST_CASE("loss gradients versus finite differences") {
  std::mt19937_64 rng(43);
  Mask gt = random_mask(rng, 4, 5, 0.4);
  gt(0, 0) = 1;
  gt(3, 4) = 0;
  Tensor p = random_tensor({4, 5}, rng, 0.1, 0.9);
  auto f_bce = [&] { return bce_loss(p, gt); };
  CHECK(gradcheck(f_bce, {p}) < 1e-4);
  auto f_dice = [&] { return dice_loss(p, gt); };
  CHECK(gradcheck(f_dice, {p}) < 1e-4);
  DistanceMap dm = signed_distance(gt);
  auto f_bnd = [&] { return boundary_loss(p, dm); };
  CHECK(gradcheck(f_bnd, {p}) < 1e-4);
  auto f_comb = [&] { return combined_loss(p, gt, 30, {true, true}).total_t; };
  CHECK(gradcheck(f_comb, {p}) < 1e-4);
}

TEST_CASE("eta schedule") {
  CHECK(eta_at(0) == 1.0);
  CHECK(eta_at(1) == doctest::Approx(0.99));
  CHECK(eta_at(50) == doctest::Approx(0.5));
  CHECK(eta_at(99) == doctest::Approx(0.01));
  CHECK(eta_at(100) == 0.0);
  CHECK(eta_at(150) == 0.0);
}

TEST_CASE("combined loss composition and term gating") {
  std::mt19937_64 rng(44);
  Mask gt = random_mask(rng, 5, 5, 0.4);
  gt(0, 0) = 1;
  gt(4, 4) = 0;
  Tensor p = random_tensor({5, 5}, rng, 0.1, 0.9, false);
  LossBundle full = combined_loss(p, gt, 20, {true, true});
  CHECK(full.eta == doctest::Approx(0.8));
  CHECK(full.total ==
        doctest::Approx(full.ce + 0.8 * full.dice + 0.2 * full.boundary).epsilon(1e-12));

  LossBundle ce_only = combined_loss(p, gt, 20, {false, false});
  CHECK(ce_only.total == doctest::Approx(ce_only.ce));
  CHECK(ce_only.dice == 0.0);
  CHECK(ce_only.boundary == 0.0);

  LossBundle no_dice = combined_loss(p, gt, 20, {false, true});
  CHECK(no_dice.dice == 0.0);
  CHECK(no_dice.total == doctest::Approx(no_dice.ce + 0.2 * no_dice.boundary));

  // disabled boundary term must not be evaluated: degenerate mask would throw
  Mask allfg(3, 3);
  allfg.setConstant(1);
  Tensor q = Tensor::full({3, 3}, 0.7);
  CHECK_NOTHROW(combined_loss(q, allfg, 0, {true, false}));
  CHECK_THROWS_AS(combined_loss(q, allfg, 0, {true, true}), ParameterError);
}

TEST_CASE("dice_score oracle and both-empty convention") {
  std::mt19937_64 rng(45);
  for (int rep = 0; rep < 100; ++rep) {
    long n = 1 + static_cast<long>(rng() % 64);
    std::vector<uint8_t> a(static_cast<size_t>(n)), b(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
      a[static_cast<size_t>(i)] = rng() % 2;
      b[static_cast<size_t>(i)] = rng() % 2;
    }
    long inter = 0, pa = 0, pb = 0;
    for (long i = 0; i < n; ++i) {
      inter += a[static_cast<size_t>(i)] && b[static_cast<size_t>(i)];
      pa += a[static_cast<size_t>(i)];
      pb += b[static_cast<size_t>(i)];
    }
    double want = (pa + pb == 0) ? 100.0 : 200.0 * static_cast<double>(inter) / static_cast<double>(pa + pb);
    CHECK(dice_score(a, b) == doctest::Approx(want).epsilon(1e-12));
  }
  std::vector<uint8_t> z(10, 0);
  CHECK(dice_score(z, z) == 100.0);
  CHECK_THROWS_AS(dice_score(z, std::vector<uint8_t>(9, 0)), ParameterError);
}

TEST_CASE("checkpoint round-trip preserves every tensor and the meta map") {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(46);
  nn::ParamStore ps;
  Tensor a = ps.create("enc/w", {3, 4});
  Tensor b = ps.create("head/b", {5});
  for (long i = 0; i < a.size(); ++i) a.mutable_value()[i] = std::uniform_real_distribution<double>(-2, 2)(rng);
  for (long i = 0; i < b.size(); ++i) b.mutable_value()[i] = std::uniform_real_distribution<double>(-2, 2)(rng);

  fs::path p = fs::temp_directory_path() / "rpt_ckpt_test.ckpt";
  save_checkpoint(p, ps, {{"iterations", "42"}});

  nn::ParamStore fresh;
  fresh.create("enc/w", {3, 4});
  fresh.create("head/b", {5});
  auto meta = load_checkpoint(p, fresh);
  CHECK(meta.at("iterations") == "42");
  for (long i = 0; i < a.size(); ++i) CHECK(fresh.get("enc/w").value()[i] == a.value()[i]);
  for (long i = 0; i < b.size(); ++i) CHECK(fresh.get("head/b").value()[i] == b.value()[i]);

  nn::ParamStore wrong;
  wrong.create("enc/w", {4, 3});
  wrong.create("head/b", {5});
  CHECK_THROWS_AS(load_checkpoint(p, wrong), IoError);
  CHECK_THROWS_AS(load_checkpoint(fs::temp_directory_path() / "nope.ckpt", fresh), IoError);
}
