#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rpt/volume.hpp"

namespace rpt {

/// One 1-way 1-shot task at working resolution.
struct Episode {
  Image support_image, query_image;  // S×S
  Mask support_mask, query_mask;     // S×S binary
  int32_t class_id = 0;
  std::string support_patient, query_patient;
};

struct FoldSpec {
  int fold_index = 0;
  std::vector<std::string> train_patients, test_patients;
  int setting = 1;  // 1: test classes may appear in training backgrounds; 2: excluded
  std::set<int32_t> test_classes;
};

/// 5-fold split; each patient lands in exactly one test set, sizes within ±1.
std::vector<FoldSpec> make_folds(std::vector<std::string> patients, int setting,
                                 const std::set<int32_t>& test_classes);

/// Loaded dataset: volumes plus pseudo-masks per patient. Records every
/// patient access so tests can assert train/test isolation.
class DatasetPool {
 public:
  void add(VolumeScan volume, PseudoMaskSet pseudo);
  /// Loads <root>/<patient>/volume.rfv (+pseudo.rfv, generated if absent).
  static DatasetPool load(const std::filesystem::path& root, long granularity = 512);

  std::vector<std::string> patients() const;
  const VolumeScan& volume(const std::string& patient) const;
  const PseudoMaskSet& pseudo(const std::string& patient) const;
  std::set<int32_t> all_classes() const;

  const std::vector<std::string>& access_log() const { return access_log_; }
  void clear_access_log() { access_log_.clear(); }

 private:
  std::map<std::string, VolumeScan> volumes_;
  std::map<std::string, PseudoMaskSet> pseudos_;
  mutable std::vector<std::string> access_log_;
};

struct SamplerConfig {
  int image_size = 128;
  int min_fg_pixels = 100;  // per support slice, at working resolution
};

enum class SampleMode { kTrain, kEval };

/// Draws are a pure function of (pool contents, fold, seed, mode, draw index):
/// draw(i) rebuilds its RNG from those alone.
class EpisodeSampler {
 public:
  EpisodeSampler(const DatasetPool& pool, FoldSpec fold, uint64_t seed, SampleMode mode,
                 SamplerConfig cfg = {});
  Episode draw(long index) const;

 private:
  const DatasetPool& pool_;
  FoldSpec fold_;
  uint64_t seed_;
  SampleMode mode_;
  SamplerConfig cfg_;
  std::vector<std::string> eligible_patients_;
};

/// True if the slice's true label set intersects the given classes.
bool slice_touches_classes(const VolumeScan& v, int z, const std::set<int32_t>& classes);

}  // namespace rpt
