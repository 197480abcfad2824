#include "rpt/eval.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rpt/checkpoint.hpp"
#include "rpt/errors.hpp"

namespace rpt {

using nlohmann::json;

double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> gt) {
  if (pred.size() != gt.size()) throw ParameterError("dice_score: shape mismatch");
  long np = 0, ng = 0, inter = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    np += pred[i] ? 1 : 0;
    ng += gt[i] ? 1 : 0;
    inter += (pred[i] && gt[i]) ? 1 : 0;
  }
  if (np + ng == 0) return 100.0;  // both empty, documented convention
  return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

std::string EvalReport::to_json() const {
  json j;
  j["setting"] = setting;
  j["fold"] = fold;
  j["per_class"] = per_class;
  j["mean"] = mean;
  j["flags"] = flags;
  return j.dump(2);
}

std::string EvalReport::to_text_table() const {
  std::ostringstream os;
  os << "setting " << setting << ", fold " << fold << "\n";
  os << "class              Dice %\n";
  os << "------------------------\n";
  for (const auto& [name, d] : per_class) {
    os << name;
    for (size_t i = name.size(); i < 16; ++i) os << ' ';
    os.precision(2);
    os << std::fixed << d << "\n";
  }
  os << "------------------------\n";
  os.precision(2);
  os << "mean            " << std::fixed << mean << "\n";
  for (const auto& f : flags) os << "note: " << f << "\n";
  return os.str();
}

void EvalReport::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (stem + ".json")) << to_json() << "\n";
  std::ofstream(dir / (stem + ".txt")) << to_text_table();
}

namespace {

std::vector<int> class_slices(const VolumeScan& v, int32_t cls) {
  std::vector<int> zs;
  for (int z = 0; z < v.d; ++z) {
    bool found = false;
    for (int y = 0; y < v.h && !found; ++y)
      for (int x = 0; x < v.w && !found; ++x)
        if (v.lab(z, y, x) == cls) found = true;
    if (found) zs.push_back(z);
  }
  return zs;
}

}  // namespace

EvalReport evaluate(const RptPipeline& model, const DatasetPool& pool, const FoldSpec& fold,
                    const EvalConfig& cfg) {
  if (fold.test_patients.empty()) throw ParameterError("evaluate: fold has no test patients");
  NoGradGuard ng;
  EvalReport report;
  report.setting = fold.setting;
  report.fold = fold.fold_index;

  const std::string& support_patient = fold.test_patients.front();
  std::vector<std::string> query_patients(fold.test_patients.begin() + 1,
                                          fold.test_patients.end());
  if (query_patients.empty()) query_patients.push_back(support_patient);
  const int S = cfg.image_size;

  double class_sum = 0;
  long class_count = 0;
  for (int32_t cls : fold.test_classes) {
    const VolumeScan& sv = pool.volume(support_patient);
    std::vector<int> s_slices = class_slices(sv, cls);
    if (s_slices.empty()) {
      report.flags.push_back("class " + std::to_string(cls) + " absent in support patient " +
                             support_patient + "; class skipped");
      continue;
    }
    double dice_sum = 0;
    long dice_n = 0;
    for (const auto& qp : query_patients) {
      const VolumeScan& qv = pool.volume(qp);
      std::vector<int> q_slices = class_slices(qv, cls);
      if (q_slices.empty()) {
        report.flags.push_back("class " + std::to_string(cls) + " absent in query patient " +
                               qp + "; patient skipped");
        continue;
      }
      const int n_chunks =
          std::max(1, std::min<int>(cfg.chunks, static_cast<int>(q_slices.size())));
      std::vector<uint8_t> pred_vol, gt_vol;
      for (int k = 0; k < n_chunks; ++k) {
        size_t q_lo = q_slices.size() * static_cast<size_t>(k) / n_chunks;
        size_t q_hi = q_slices.size() * static_cast<size_t>(k + 1) / n_chunks;
        // middle slice of the support patient's corresponding chunk
        size_t s_lo = s_slices.size() * static_cast<size_t>(k) / n_chunks;
        size_t s_hi = std::max(s_lo + 1, s_slices.size() * static_cast<size_t>(k + 1) / n_chunks);
        int sz = s_slices[(s_lo + s_hi - 1) / 2];
        Episode ep;
        ep.class_id = cls;
        ep.support_patient = support_patient;
        ep.support_image = resize_bilinear(slice_image(sv, sz), S, S);
        ep.support_mask = resize_nearest(slice_label_mask(sv, sz, cls), S, S);
        bool support_ok = ep.support_mask.cast<long>().sum() > 0;
        for (size_t qi = q_lo; qi < q_hi; ++qi) {
          int qz = q_slices[qi];
          Mask gt = resize_nearest(slice_label_mask(qv, qz, cls), S, S);
          std::vector<uint8_t> pred(static_cast<size_t>(S) * S, 0);
          if (support_ok) {
            ep.query_patient = qp;
            ep.query_image = resize_bilinear(slice_image(qv, qz), S, S);
            ep.query_mask = gt;
            auto out = model.run_episode(ep, /*voronoi_seed=*/1);
            const auto& v = out.pred_full.value();
            for (long i = 0; i < v.size(); ++i)
              pred[static_cast<size_t>(i)] = v[i] > cfg.binarize_at ? 1 : 0;
          }
          pred_vol.insert(pred_vol.end(), pred.begin(), pred.end());
          for (long y = 0; y < S; ++y)
            for (long x = 0; x < S; ++x) gt_vol.push_back(gt(y, x));
        }
      }
      double d = dice_score(pred_vol, gt_vol);
      bool both_empty = true;
      for (uint8_t b : pred_vol)
        if (b) both_empty = false;
      for (uint8_t b : gt_vol)
        if (b) both_empty = false;
      if (both_empty)
        report.flags.push_back("class " + std::to_string(cls) + " / patient " + qp +
                               ": both-empty Dice convention (100)");
      dice_sum += d;
      ++dice_n;
    }
    if (dice_n == 0) continue;
    report.per_class["class_" + std::to_string(cls)] = dice_sum / static_cast<double>(dice_n);
    class_sum += dice_sum / static_cast<double>(dice_n);
    ++class_count;
  }
  report.mean = class_count > 0 ? class_sum / static_cast<double>(class_count) : 0.0;
  return report;
}

double grand_mean(const std::vector<double>& fold_means) {
  if (fold_means.empty()) throw ParameterError("grand_mean: no folds");
  double s = 0;
  for (double m : fold_means) s += m;
  return s / static_cast<double>(fold_means.size());
}

std::vector<BlockAblationRow> ablate_blocks(const DatasetPool& pool, const FoldSpec& fold,
                                            const TrainConfig& cfg,
                                            const std::vector<int>& l_values,
                                            const std::filesystem::path& work_dir) {
  if (l_values.empty()) throw ParameterError("ablate_blocks: empty sweep list");
  std::vector<BlockAblationRow> rows;
  for (int L : l_values) {
    TrainConfig c = cfg;
    c.n_blocks = L;
    auto dir = work_dir / ("blocks_" + std::to_string(L));
    TrainResult tr = train(pool, fold, c, dir);
    RptPipeline model = make_pipeline(c);
    load_checkpoint(tr.checkpoint, model.params());
    EvalConfig ec;
    ec.image_size = c.image_size;
    EvalReport rep = evaluate(model, pool, fold, ec);
    rows.push_back({L, rep.mean});
  }
  return rows;
}

std::vector<LossAblationRow> ablate_losses(const DatasetPool& pool, const FoldSpec& fold,
                                           const TrainConfig& cfg,
                                           const std::filesystem::path& work_dir) {
  // row structure mirrors the three studied combinations
  const std::vector<std::pair<std::string, LossFlags>> combos = {
      {"ce", {false, false}},
      {"ce+boundary", {false, true}},
      {"ce+boundary+dice", {true, true}},
  };
  std::vector<LossAblationRow> rows;
  for (const auto& [name, flags] : combos) {
    TrainConfig c = cfg;
    c.loss_flags = flags;
    auto dir = work_dir / ("loss_" + name);
    TrainResult tr = train(pool, fold, c, dir);
    RptPipeline model = make_pipeline(c);
    load_checkpoint(tr.checkpoint, model.params());
    EvalConfig ec;
    ec.image_size = c.image_size;
    EvalReport rep = evaluate(model, pool, fold, ec);
    rows.push_back({name, rep.mean});
  }
  return rows;
}

}  // namespace rpt
