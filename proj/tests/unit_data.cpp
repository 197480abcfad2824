#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "rpt/episodes.hpp"
#include "rpt/errors.hpp"
#include "rpt/pseudo.hpp"
#include "rpt/synth.hpp"
#include "rpt/volume.hpp"

using namespace rpt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "rpt_data_tests";
  fs::create_directories(p);
  return p;
}

VolumeScan tiny_volume(uint64_t seed = 11, int dim = 18, int classes = 2,
                       double lesion = 0.0) {
  SynthParams sp;
  sp.dim_d = sp.dim_h = sp.dim_w = dim;
  sp.num_classes = classes;
  sp.lesion_prob = lesion;
  return generate_synthetic_volume(seed, sp);
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// flood fill oracle: true if every nonempty label component count is 1
int component_count(const std::vector<int32_t>& field, int d, int h, int w, int32_t label) {
  auto idx = [&](int z, int y, int x) { return (static_cast<long>(z) * h + y) * w + x; };
  std::vector<char> seen(field.size(), 0);
  int comps = 0;
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        long i = idx(z, y, x);
        if (field[static_cast<size_t>(i)] != label || seen[static_cast<size_t>(i)]) continue;
        ++comps;
        std::vector<std::array<int, 3>> stack{{z, y, x}};
        seen[static_cast<size_t>(i)] = 1;
        while (!stack.empty()) {
          auto [cz, cy, cx] = stack.back();
          stack.pop_back();
          const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
          for (auto& n : nb) {
            int nz = cz + n[0], ny = cy + n[1], nx = cx + n[2];
            if (nz < 0 || nz >= d || ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            long j = idx(nz, ny, nx);
            if (seen[static_cast<size_t>(j)] || field[static_cast<size_t>(j)] != label) continue;
            seen[static_cast<size_t>(j)] = 1;
            stack.push_back({nz, ny, nx});
          }
        }
      }
  return comps;
}

}  // namespace

TEST_CASE("rfv round-trips byte-exactly") {
  VolumeScan v = tiny_volume();
  fs::path p = temp_dir() / "a.rfv";
  write_rfv(p, v);
  VolumeScan r = read_rfv(p);
  CHECK(r.d == v.d);
  CHECK(r.voxels == v.voxels);
  CHECK(r.labels == v.labels);
  fs::path p2 = temp_dir() / "b.rfv";
  write_rfv(p2, r);
  CHECK(read_bytes(p) == read_bytes(p2));

  std::ifstream is(p, std::ios::binary);
  std::string header;
  std::getline(is, header);
  CHECK(header.find("\"dims\"") != std::string::npos);
  CHECK(header.find("\"f32\"") != std::string::npos);
}

TEST_CASE("rfv rejects malformed input") {
  fs::path p = temp_dir() / "bad.rfv";
  std::ofstream(p) << "{\"dims\":[2,2,2],\"dtype\":\"f32\",\"fields\":[\"voxels\",\"labels\"]}\nxx";
  CHECK_THROWS_AS(read_rfv(p), IoError);  // truncated payload
  std::ofstream(p) << "not json\n";
  CHECK_THROWS_AS(read_rfv(p), IoError);
  CHECK_THROWS_AS(read_rfv(temp_dir() / "missing.rfv"), IoError);
}

TEST_CASE("pseudo rfv round-trip") {
  VolumeScan v = tiny_volume();
  PseudoMaskSet pm = cluster_pseudo_masks(v, 60);
  fs::path p = temp_dir() / "a.pseudo.rfv";
  write_pseudo_rfv(p, pm);
  PseudoMaskSet r = read_pseudo_rfv(p);
  CHECK(r.clusters == pm.clusters);
  CHECK(r.num_clusters == pm.num_clusters);
}

TEST_CASE("synthetic volumes: determinism, classes, connectivity") {
  VolumeScan a = tiny_volume(5);
  VolumeScan b = tiny_volume(5);
  VolumeScan c = tiny_volume(6);
  CHECK(a.voxels == b.voxels);
  CHECK(a.labels == b.labels);
  CHECK(a.voxels != c.voxels);

  a.validate();
  CHECK(a.classes() == std::set<int32_t>{1, 2});
  for (int32_t k : {1, 2})
    CHECK(component_count(a.labels, a.d, a.h, a.w, k) == 1);  // single 6-connected blob
}

TEST_CASE("synthetic lesions add a high-intensity outlier inside organs") {
  VolumeScan plain = tiny_volume(9, 20, 1, 0.0);
  VolumeScan lesioned = tiny_volume(9, 20, 1, 1.0);
  double mx_plain = -1e9, mx_les = -1e9;
  for (long i = 0; i < plain.size(); ++i) {
    if (plain.labels[static_cast<size_t>(i)] == 1)
      mx_plain = std::max(mx_plain, static_cast<double>(plain.voxels[static_cast<size_t>(i)]));
    if (lesioned.labels[static_cast<size_t>(i)] == 1)
      mx_les = std::max(mx_les, static_cast<double>(lesioned.voxels[static_cast<size_t>(i)]));
  }
  CHECK(mx_les > mx_plain + 0.5);
}

TEST_CASE("synth parameter validation") {
  SynthParams sp;
  sp.dim_d = 8;
  CHECK_THROWS_AS(sp.validate(), ParameterError);
  sp = SynthParams{};
  sp.contour_jitter = 0.6;
  CHECK_THROWS_AS(sp.validate(), ParameterError);
  sp = SynthParams{};
  sp.num_classes = 0;
  CHECK_THROWS_AS(sp.validate(), ParameterError);
}

TEST_CASE("pseudo-mask clusters: partition, connectivity, count bounds") {
  VolumeScan v = tiny_volume(3, 20);
  const long granularity = 50;
  PseudoMaskSet pm = cluster_pseudo_masks(v, granularity);
  REQUIRE(pm.clusters.size() == static_cast<size_t>(v.size()));

  std::set<int32_t> used;
  for (int32_t c : pm.clusters) {
    CHECK(c >= 0);
    CHECK(c < pm.num_clusters);
    used.insert(c);
  }
  CHECK(static_cast<int>(used.size()) == pm.num_clusters);  // partition covers all ids

  double target = static_cast<double>(v.size()) / static_cast<double>(granularity);
  CHECK(pm.num_clusters >= static_cast<int>(target / 2));
  CHECK(pm.num_clusters <= static_cast<int>(target * 2) + 1);

  for (int32_t c = 0; c < pm.num_clusters; ++c)
    CHECK(component_count(pm.clusters, pm.d, pm.h, pm.w, c) == 1);

  PseudoMaskSet pm2 = cluster_pseudo_masks(v, granularity);
  CHECK(pm.clusters == pm2.clusters);  // deterministic
}

TEST_CASE("pseudo-mask clusters follow intensity boundaries") {
  // two-intensity volume split down the middle: no cluster should straddle it
  VolumeScan v;
  v.d = v.h = v.w = 12;
  v.voxels.assign(static_cast<size_t>(v.size()), 0.0f);
  v.labels.assign(static_cast<size_t>(v.size()), 0);
  for (int z = 0; z < v.d; ++z)
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x) v.voxels[static_cast<size_t>(v.idx(z, y, x))] = x < 6 ? 0.0f : 1.0f;
  PseudoMaskSet pm = cluster_pseudo_masks(v, 40, 8.0);
  std::set<int32_t> left, right;
  for (int z = 0; z < v.d; ++z)
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x)
        (x < 6 ? left : right).insert(pm.clusters[static_cast<size_t>(v.idx(z, y, x))]);
  for (int32_t c : left) CHECK(right.count(c) == 0);
}

TEST_CASE("make_folds partitions patients with balanced sizes") {
  std::vector<std::string> pats;
  for (int i = 0; i < 11; ++i) pats.push_back("p" + std::to_string(100 + i));
  auto folds = make_folds(pats, 1, {1, 2});
  REQUIRE(folds.size() == 5);
  std::set<std::string> seen;
  for (const auto& f : folds) {
    CHECK((f.test_patients.size() == 2 || f.test_patients.size() == 3));
    CHECK(f.train_patients.size() + f.test_patients.size() == pats.size());
    for (const auto& p : f.test_patients) {
      CHECK(seen.insert(p).second);  // each patient tests exactly once
      for (const auto& q : f.train_patients) CHECK(p != q);
    }
  }
  CHECK(seen.size() == pats.size());
  CHECK_THROWS_AS(make_folds({"a", "b", "c"}, 1, {1}), ParameterError);
}

TEST_CASE("dataset pool loads volumes and computes pseudo-masks on demand") {
  fs::path root = temp_dir() / "ds";
  fs::remove_all(root);
  for (int i = 0; i < 5; ++i) {
    VolumeScan v = tiny_volume(20 + static_cast<uint64_t>(i));
    v.patient_id = "p" + std::to_string(i);
    fs::create_directories(root / v.patient_id);
    write_rfv(root / v.patient_id / "volume.rfv", v);
    if (i % 2 == 0)
      write_pseudo_rfv(root / v.patient_id / "pseudo.rfv", cluster_pseudo_masks(v, 64));
  }
  DatasetPool pool = DatasetPool::load(root, 64);
  CHECK(pool.patients().size() == 5);
  CHECK(pool.volume("p3").d == 18);
  CHECK(pool.pseudo("p1").num_clusters > 1);
  CHECK_THROWS_AS(pool.volume("nope"), ParameterError);
}

namespace {

DatasetPool make_pool(int n_patients, uint64_t seed0 = 40, double lesion = 0.0) {
  DatasetPool pool;
  SynthParams sp;
  sp.dim_d = sp.dim_h = sp.dim_w = 18;
  sp.num_classes = 2;
  sp.lesion_prob = lesion;
  for (int i = 0; i < n_patients; ++i) {
    VolumeScan v = generate_synthetic_volume(seed0 + static_cast<uint64_t>(i), sp);
    v.patient_id = "p" + std::to_string(i);
    pool.add(v, cluster_pseudo_masks(v, 64));
  }
  return pool;
}

}  // namespace

TEST_CASE("train sampler: deterministic draws, pseudo-class episodes") {
  DatasetPool pool = make_pool(6);
  auto folds = make_folds(pool.patients(), 1, pool.all_classes());
  SamplerConfig sc;
  sc.image_size = 48;
  sc.min_fg_pixels = 16;
  EpisodeSampler s1(pool, folds[0], 7, SampleMode::kTrain, sc);
  EpisodeSampler s2(pool, folds[0], 7, SampleMode::kTrain, sc);
  EpisodeSampler s3(pool, folds[0], 8, SampleMode::kTrain, sc);

  bool any_diff = false;
  for (long i = 0; i < 6; ++i) {
    Episode a = s1.draw(i);
    Episode b = s2.draw(i);
    CHECK(a.support_image == b.support_image);
    CHECK(a.support_mask == b.support_mask);
    CHECK(a.query_mask == b.query_mask);
    CHECK(a.class_id == b.class_id);
    CHECK(a.support_image.rows() == 48);
    CHECK(a.support_mask.cast<long>().sum() >= 16);
    CHECK(a.query_mask.cast<long>().sum() >= 1);
    Episode c = s3.draw(i);
    if (a.support_image != c.support_image) any_diff = true;
    // training episodes never come from test patients
    for (const auto& tp : folds[0].test_patients) {
      CHECK(a.support_patient != tp);
      CHECK(a.query_patient != tp);
    }
  }
  CHECK(any_diff);  // different seeds give different streams

  // out-of-order replay matches in-order replay
  Episode e5 = s1.draw(5);
  Episode e0 = s1.draw(0);
  EpisodeSampler s4(pool, folds[0], 7, SampleMode::kTrain, sc);
  CHECK(e0.support_image == s4.draw(0).support_image);
  CHECK(e5.support_image == s4.draw(5).support_image);
}

TEST_CASE("setting 2 excludes slices containing test classes from training") {
  DatasetPool pool = make_pool(6);
  auto folds = make_folds(pool.patients(), 2, {1});
  SamplerConfig sc;
  sc.image_size = 48;
  sc.min_fg_pixels = 16;
  EpisodeSampler s(pool, folds[0], 3, SampleMode::kTrain, sc);
  // support/query slices are re-checked against the raw label field
  for (long i = 0; i < 8; ++i) {
    Episode ep = s.draw(i);
    const VolumeScan& v = pool.volume(ep.support_patient);
    bool found_clean_slice = false;
    for (int z = 0; z < v.d && !found_clean_slice; ++z)
      found_clean_slice = !slice_touches_classes(v, z, folds[0].test_classes);
    CHECK(found_clean_slice);
  }
}

TEST_CASE("eval sampler: distinct patients, label-mask episodes, test classes only") {
  DatasetPool pool = make_pool(7);
  auto folds = make_folds(pool.patients(), 1, pool.all_classes());
  SamplerConfig sc;
  sc.image_size = 48;
  sc.min_fg_pixels = 16;
  EpisodeSampler s(pool, folds[1], 5, SampleMode::kEval, sc);
  for (long i = 0; i < 6; ++i) {
    Episode ep = s.draw(i);
    CHECK(ep.support_patient != ep.query_patient);
    CHECK(folds[1].test_classes.count(ep.class_id) == 1);
    // eval supports accept down to a quarter of the training threshold
    CHECK(ep.support_mask.cast<long>().sum() >= 4);
  }
}

TEST_CASE("slice utilities") {
  VolumeScan v = tiny_volume(13);
  Image im = slice_image(v, v.d / 2);
  CHECK(im.rows() == v.h);
  Mask m = slice_label_mask(v, v.d / 2, 1);
  CHECK(m.maxCoeff() <= 1);
  CHECK_THROWS_AS(slice_image(v, -1), ParameterError);
  CHECK_THROWS_AS(slice_image(v, v.d), ParameterError);

  Image up = resize_bilinear(im, 40, 40);
  CHECK(up.rows() == 40);
  CHECK(up.minCoeff() >= im.minCoeff() - 1e-12);
  CHECK(up.maxCoeff() <= im.maxCoeff() + 1e-12);
  Mask mn = resize_nearest(m, 40, 40);
  for (long i = 0; i < mn.size(); ++i) CHECK((mn.data()[i] == 0 || mn.data()[i] == 1));
}

TEST_CASE("volume validation catches label gaps") {
  VolumeScan v = tiny_volume();
  v.labels[0] = 7;  // classes become {1,2,7}: not contiguous
  CHECK_THROWS_AS(v.validate(), ParameterError);
  VolumeScan w = tiny_volume();
  w.voxels.pop_back();
  CHECK_THROWS_AS(w.validate(), ParameterError);
}
