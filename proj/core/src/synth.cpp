#include "rpt/synth.hpp"

#include <cmath>
#include <queue>
#include <random>

#include "rpt/errors.hpp"

namespace rpt {

void SynthParams::validate() const {
  if (dim_d < 16 || dim_h < 16 || dim_w < 16)
    throw ParameterError("SynthParams: volume dims must be >= 16 per axis");
  if (num_classes < 1) throw ParameterError("SynthParams: need >= 1 class");
  if (lesion_prob < 0.0 || lesion_prob > 1.0)
    throw ParameterError("SynthParams: lesion_prob outside [0,1]");
  if (contour_jitter < 0.0 || contour_jitter > 0.45)
    throw ParameterError("SynthParams: contour_jitter outside [0,0.45]");
  if (intensity_shift < 0.0 || size_jitter < 0.0 || center_jitter < 0.0 || noise_std < 0.0)
    throw ParameterError("SynthParams: negative noise knob");
}

namespace {

struct Organ {
  double cz, cy, cx;
  double rz, ry, rx;
  double phase[6];
  bool lesioned = false;
  double lz, ly, lx, lr;
};

// Keep only the largest 6-connected component of a class; stray fragments
// from contour noise go back to background.
void keep_largest_component(VolumeScan& v, int32_t cls) {
  std::vector<int32_t> comp(static_cast<size_t>(v.size()), -1);
  int32_t n_comp = 0;
  std::vector<long> sizes;
  const int dz[6] = {1, -1, 0, 0, 0, 0}, dy[6] = {0, 0, 1, -1, 0, 0}, dx[6] = {0, 0, 0, 0, 1, -1};
  for (int z = 0; z < v.d; ++z)
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x) {
        long i = v.idx(z, y, x);
        if (v.labels[i] != cls || comp[i] != -1) continue;
        long sz = 0;
        std::queue<std::array<int, 3>> q;
        q.push({z, y, x});
        comp[i] = n_comp;
        while (!q.empty()) {
          auto [cz, cy, cx] = q.front();
          q.pop();
          ++sz;
          for (int k = 0; k < 6; ++k) {
            int nz = cz + dz[k], ny = cy + dy[k], nx = cx + dx[k];
            if (nz < 0 || nz >= v.d || ny < 0 || ny >= v.h || nx < 0 || nx >= v.w) continue;
            long j = v.idx(nz, ny, nx);
            if (v.labels[j] == cls && comp[j] == -1) {
              comp[j] = n_comp;
              q.push({nz, ny, nx});
            }
          }
        }
        sizes.push_back(sz);
        ++n_comp;
      }
  if (n_comp <= 1) return;
  int32_t best = 0;
  for (int32_t c = 1; c < n_comp; ++c)
    if (sizes[c] > sizes[best]) best = c;
  for (long i = 0; i < v.size(); ++i)
    if (v.labels[i] == cls && comp[i] != best) v.labels[i] = 0;
}

}  // namespace

VolumeScan generate_synthetic_volume(uint64_t seed, const SynthParams& p) {
  p.validate();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  VolumeScan v;
  v.d = p.dim_d;
  v.h = p.dim_h;
  v.w = p.dim_w;
  v.patient_id = "synthetic";
  v.modality_tag = "synth";
  v.voxels.assign(static_cast<size_t>(v.size()), 0.0f);
  v.labels.assign(static_cast<size_t>(v.size()), 0);

  const double patient_shift = p.intensity_shift > 0 ? gauss(rng) * p.intensity_shift : 0.0;
  const int K = p.num_classes;

  std::vector<Organ> organs(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    Organ& o = organs[static_cast<size_t>(k)];
    // canonical centers spread along the volume diagonal, jittered per patient
    double frac = (k + 1.0) / (K + 1.0);
    o.cz = (frac + p.center_jitter * gauss(rng)) * (v.d - 1);
    o.cy = (frac + p.center_jitter * gauss(rng)) * (v.h - 1);
    o.cx = ((1.0 - frac) + p.center_jitter * gauss(rng)) * (v.w - 1);
    double base = 0.17 * std::min({v.d, v.h, v.w});
    auto radius = [&](void) {
      return std::max(2.0, base * (1.0 + p.size_jitter * gauss(rng)));
    };
    o.rz = radius();
    o.ry = radius();
    o.rx = radius();
    for (double& ph : o.phase) ph = unif(rng) * 2.0 * M_PI;
    if (unif(rng) < p.lesion_prob) {
      o.lesioned = true;
      double t = unif(rng) * 2.0 * M_PI, u = unif(rng) * M_PI;
      o.lz = o.cz + 0.4 * o.rz * std::cos(u);
      o.ly = o.cy + 0.4 * o.ry * std::sin(u) * std::sin(t);
      o.lx = o.cx + 0.4 * o.rx * std::sin(u) * std::cos(t);
      o.lr = 0.45;  // relative to organ radius
    }
  }

  auto organ_intensity = [&](int k) { return 0.45 + 0.12 * (k + 1) + patient_shift; };

  for (int z = 0; z < v.d; ++z)
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x) {
        long i = v.idx(z, y, x);
        double val = 0.15;
        for (int k = 0; k < K && v.labels[i] == 0; ++k) {
          const Organ& o = organs[static_cast<size_t>(k)];
          double uz = (z - o.cz) / o.rz, uy = (y - o.cy) / o.ry, ux = (x - o.cx) / o.rx;
          double q = std::sqrt(uz * uz + uy * uy + ux * ux);
          double s = (std::sin(2.1 * uz + 3.0 * uy + o.phase[0]) +
                      std::sin(2.7 * uy + 1.9 * ux + o.phase[1]) +
                      std::sin(2.3 * ux + 2.5 * uz + o.phase[2])) /
                     3.0;
          if (q <= 1.0 + p.contour_jitter * s) {
            v.labels[i] = k + 1;
            val = organ_intensity(k);
            if (o.lesioned) {
              double dz = z - o.lz, dy = y - o.ly, dx = x - o.lx;
              double lrad = o.lr * std::min({o.rz, o.ry, o.rx});
              if (dz * dz + dy * dy + dx * dx <= lrad * lrad) val += 1.2;
            }
          }
        }
        v.voxels[i] = static_cast<float>(val + p.noise_std * gauss(rng));
      }

  for (int k = 1; k <= K; ++k) keep_largest_component(v, k);

  // a lesioned organ must actually contain outlier voxels after cleanup
  for (int k = 0; k < K; ++k) {
    const Organ& o = organs[static_cast<size_t>(k)];
    if (!o.lesioned) continue;
    bool found = false;
    double thresh = organ_intensity(k) + 0.6;
    long center_idx = -1;
    for (long i = 0; i < v.size() && !found; ++i)
      if (v.labels[i] == k + 1 && v.voxels[i] > thresh) found = true;
    if (!found) {
      double best = 1e18;
      for (int z = 0; z < v.d; ++z)
        for (int y = 0; y < v.h; ++y)
          for (int x = 0; x < v.w; ++x) {
            long i = v.idx(z, y, x);
            if (v.labels[i] != k + 1) continue;
            double dz = z - o.cz, dy = y - o.cy, dx = x - o.cx;
            double dd = dz * dz + dy * dy + dx * dx;
            if (dd < best) {
              best = dd;
              center_idx = i;
            }
          }
      if (center_idx >= 0) v.voxels[center_idx] += 1.2f;
    }
  }

  // contiguity of the label set can break if a whole organ was eroded away;
  // compact label ids in that case
  std::set<int32_t> present = v.classes();
  if (!present.empty() && (static_cast<int>(present.size()) != K)) {
    std::vector<int32_t> remap(static_cast<size_t>(K) + 1, 0);
    int32_t next = 1;
    for (int32_t c : present) remap[static_cast<size_t>(c)] = next++;
    for (auto& l : v.labels) l = remap[static_cast<size_t>(l)];
  }
  v.validate();
  return v;
}

}  // namespace rpt
