#include "rpt/episodes.hpp"

#include <algorithm>
#include <random>

#include "rpt/errors.hpp"
#include "rpt/pseudo.hpp"

namespace rpt {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t draw_seed(uint64_t seed, int fold, SampleMode mode, long index) {
  uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ static_cast<uint64_t>(fold));
  s = splitmix64(s ^ (mode == SampleMode::kTrain ? 0x11ULL : 0x22ULL));
  s = splitmix64(s ^ static_cast<uint64_t>(index));
  return s;
}

long fg_count(const Mask& m) {
  long n = 0;
  for (long i = 0; i < m.size(); ++i) n += m.data()[i] ? 1 : 0;
  return n;
}

}  // namespace

bool slice_touches_classes(const VolumeScan& v, int z, const std::set<int32_t>& classes) {
  for (int y = 0; y < v.h; ++y)
    for (int x = 0; x < v.w; ++x)
      if (classes.count(v.lab(z, y, x))) return true;
  return false;
}

std::vector<FoldSpec> make_folds(std::vector<std::string> patients, int setting,
                                 const std::set<int32_t>& test_classes) {
  if (patients.size() < 5) throw ParameterError("make_folds: need >= 5 patients");
  if (setting != 1 && setting != 2) throw ParameterError("make_folds: setting must be 1 or 2");
  std::sort(patients.begin(), patients.end());
  const long n = static_cast<long>(patients.size());
  std::vector<FoldSpec> folds(5);
  long off = 0;
  for (int f = 0; f < 5; ++f) {
    long sz = n / 5 + (f < n % 5 ? 1 : 0);
    FoldSpec& spec = folds[static_cast<size_t>(f)];
    spec.fold_index = f;
    spec.setting = setting;
    spec.test_classes = test_classes;
    for (long i = 0; i < n; ++i) {
      if (i >= off && i < off + sz)
        spec.test_patients.push_back(patients[static_cast<size_t>(i)]);
      else
        spec.train_patients.push_back(patients[static_cast<size_t>(i)]);
    }
    off += sz;
  }
  return folds;
}

void DatasetPool::add(VolumeScan volume, PseudoMaskSet pseudo) {
  std::string id = volume.patient_id;
  pseudos_.emplace(id, std::move(pseudo));
  volumes_.emplace(std::move(id), std::move(volume));
}

DatasetPool DatasetPool::load(const std::filesystem::path& root, long granularity) {
  DatasetPool pool;
  std::vector<std::filesystem::path> dirs;
  for (auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "volume.rfv"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("no patient directories under " + root.string());
  for (auto& dir : dirs) {
    VolumeScan v = read_rfv(dir / "volume.rfv");
    v.patient_id = dir.filename().string();
    PseudoMaskSet p;
    if (std::filesystem::exists(dir / "pseudo.rfv"))
      p = read_pseudo_rfv(dir / "pseudo.rfv");
    else
      p = cluster_pseudo_masks(v, granularity);
    p.volume_ref = v.patient_id;
    pool.add(std::move(v), std::move(p));
  }
  return pool;
}

std::vector<std::string> DatasetPool::patients() const {
  std::vector<std::string> out;
  for (auto& [id, _] : volumes_) out.push_back(id);
  return out;
}

const VolumeScan& DatasetPool::volume(const std::string& patient) const {
  auto it = volumes_.find(patient);
  if (it == volumes_.end()) throw ParameterError("unknown patient: " + patient);
  access_log_.push_back(patient);
  return it->second;
}

const PseudoMaskSet& DatasetPool::pseudo(const std::string& patient) const {
  auto it = pseudos_.find(patient);
  if (it == pseudos_.end()) throw ParameterError("unknown patient: " + patient);
  access_log_.push_back(patient);
  return it->second;
}

std::set<int32_t> DatasetPool::all_classes() const {
  std::set<int32_t> out;
  for (auto& [_, v] : volumes_)
    for (int32_t c : v.classes()) out.insert(c);
  return out;
}

EpisodeSampler::EpisodeSampler(const DatasetPool& pool, FoldSpec fold, uint64_t seed,
                               SampleMode mode, SamplerConfig cfg)
    : pool_(pool), fold_(std::move(fold)), seed_(seed), mode_(mode), cfg_(cfg) {
  const auto& ids = mode == SampleMode::kTrain ? fold_.train_patients : fold_.test_patients;
  eligible_patients_ = ids;
  if (eligible_patients_.empty())
    throw ParameterError("EpisodeSampler: empty patient set for requested mode");
}

Episode EpisodeSampler::draw(long index) const {
  std::mt19937_64 rng(draw_seed(seed_, fold_.fold_index, mode_, index));
  const int S = cfg_.image_size;

  auto resized_image = [&](const VolumeScan& v, int z) {
    return resize_bilinear(slice_image(v, z), S, S);
  };

  if (mode_ == SampleMode::kTrain) {
    auto slice_ok = [&](const VolumeScan& v, int z) {
      return fold_.setting != 2 || !slice_touches_classes(v, z, fold_.test_classes);
    };
    auto try_build = [&](const std::string& pid, int z, int32_t cluster,
                         bool randomized) -> std::optional<Episode> {
      const VolumeScan& v = pool_.volume(pid);
      const PseudoMaskSet& p = pool_.pseudo(pid);
      Mask sm = resize_nearest(slice_cluster_mask(p, z, cluster), S, S);
      if (fg_count(sm) < cfg_.min_fg_pixels) return std::nullopt;
      // query: another slice of the same volume containing the cluster
      std::vector<int> candidates;
      for (int qz = 0; qz < v.d; ++qz) {
        if (qz == z || !slice_ok(v, qz)) continue;
        Mask qm = resize_nearest(slice_cluster_mask(p, qz, cluster), S, S);
        if (fg_count(qm) >= cfg_.min_fg_pixels) candidates.push_back(qz);
      }
      int qz = z;
      if (!candidates.empty()) {
        size_t pick = randomized
                          ? std::uniform_int_distribution<size_t>(0, candidates.size() - 1)(rng)
                          : candidates.size() / 2;
        qz = candidates[pick];
      }
      Episode ep;
      ep.class_id = cluster;
      ep.support_patient = pid;
      ep.query_patient = pid;
      ep.support_image = resized_image(v, z);
      ep.support_mask = sm;
      ep.query_image = resized_image(v, qz);
      ep.query_mask = resize_nearest(slice_cluster_mask(p, qz, cluster), S, S);
      if (qz == z) {
        // same-slice fallback: light photometric jitter keeps support != query
        std::normal_distribution<double> g(0.0, 1.0);
        double scale = 1.0 + 0.05 * g(rng), shift = 0.03 * g(rng);
        ep.query_image = (ep.query_image.array() * scale + shift).matrix();
      }
      return ep;
    };

    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::string& pid = eligible_patients_[std::uniform_int_distribution<size_t>(
          0, eligible_patients_.size() - 1)(rng)];
      const VolumeScan& v = pool_.volume(pid);
      const PseudoMaskSet& p = pool_.pseudo(pid);
      int z = std::uniform_int_distribution<int>(0, v.d - 1)(rng);
      if (!slice_ok(v, z)) continue;
      std::set<int32_t> present;
      for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) present.insert(p.clusters[p.idx(z, y, x)]);
      std::vector<int32_t> ids(present.begin(), present.end());
      int32_t cluster = ids[std::uniform_int_distribution<size_t>(0, ids.size() - 1)(rng)];
      if (auto ep = try_build(pid, z, cluster, true)) return *ep;
    }
    // exhaustive fallback before declaring the stream empty
    for (const auto& pid : eligible_patients_) {
      const VolumeScan& v = pool_.volume(pid);
      const PseudoMaskSet& p = pool_.pseudo(pid);
      for (int z = 0; z < v.d; ++z) {
        if (!slice_ok(v, z)) continue;
        for (int32_t c = 0; c < p.num_clusters; ++c)
          if (auto ep = try_build(pid, z, c, false)) return *ep;
      }
    }
    throw ExhaustionError("no eligible training slice for any pseudo-class (setting " +
                          std::to_string(fold_.setting) + ")");
  }

  // ---- eval mode: true labels, support and query from different patients
  std::vector<int32_t> classes(fold_.test_classes.begin(), fold_.test_classes.end());
  if (classes.empty()) throw ParameterError("EpisodeSampler: eval mode needs test_classes");
  int32_t cls = classes[static_cast<size_t>(index) % classes.size()];

  auto class_slices = [&](const std::string& pid, long min_fg) {
    const VolumeScan& v = pool_.volume(pid);
    std::vector<int> zs;
    for (int z = 0; z < v.d; ++z)
      if (fg_count(resize_nearest(slice_label_mask(v, z, cls), S, S)) >= min_fg)
        zs.push_back(z);
    return zs;
  };

  std::vector<std::string> shuffled = eligible_patients_;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (const auto& sp : shuffled) {
    auto s_slices = class_slices(sp, std::max(1, cfg_.min_fg_pixels / 4));
    if (s_slices.empty()) continue;
    for (const auto& qp : shuffled) {
      if (qp == sp) continue;
      auto q_slices = class_slices(qp, 1);
      if (q_slices.empty()) continue;
      int sz = s_slices[std::uniform_int_distribution<size_t>(0, s_slices.size() - 1)(rng)];
      int qz = q_slices[std::uniform_int_distribution<size_t>(0, q_slices.size() - 1)(rng)];
      const VolumeScan& sv = pool_.volume(sp);
      const VolumeScan& qv = pool_.volume(qp);
      Episode ep;
      ep.class_id = cls;
      ep.support_patient = sp;
      ep.query_patient = qp;
      ep.support_image = resized_image(sv, sz);
      ep.support_mask = resize_nearest(slice_label_mask(sv, sz, cls), S, S);
      ep.query_image = resized_image(qv, qz);
      ep.query_mask = resize_nearest(slice_label_mask(qv, qz, cls), S, S);
      return ep;
    }
  }
  throw ExhaustionError("no evaluation episode available for class " + std::to_string(cls));
}

}  // namespace rpt
