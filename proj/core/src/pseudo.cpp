#include "rpt/pseudo.hpp"

#include <cmath>
#include <queue>
#include <tuple>

#include "rpt/errors.hpp"

namespace rpt {

PseudoMaskSet cluster_pseudo_masks(const VolumeScan& volume, long granularity,
                                   double edge_weight) {
  if (granularity < 8) throw ParameterError("cluster_pseudo_masks: granularity must be >= 8");
  const long total = volume.size();

  PseudoMaskSet out;
  out.volume_ref = volume.patient_id;
  out.d = volume.d;
  out.h = volume.h;
  out.w = volume.w;
  out.clusters.assign(static_cast<size_t>(total), -1);

  struct Seed {
    int z, y, x;
    float intensity;
  };
  std::vector<Seed> seeds;
  if (granularity >= total) {
    seeds.push_back({volume.d / 2, volume.h / 2, volume.w / 2, 0.0f});
  } else {
    double spacing = std::cbrt(static_cast<double>(granularity));
    auto axis_count = [&](int dim) {
      return std::max(1L, std::lround(dim / spacing));
    };
    long nz = axis_count(volume.d), ny = axis_count(volume.h), nx = axis_count(volume.w);
    for (long iz = 0; iz < nz; ++iz)
      for (long iy = 0; iy < ny; ++iy)
        for (long ix = 0; ix < nx; ++ix) {
          int z = static_cast<int>((iz + 0.5) * volume.d / nz);
          int y = static_cast<int>((iy + 0.5) * volume.h / ny);
          int x = static_cast<int>((ix + 0.5) * volume.w / nx);
          seeds.push_back({z, y, x, 0.0f});
        }
  }
  for (auto& s : seeds) s.intensity = volume.vox(s.z, s.y, s.x);
  const double spacing = std::cbrt(static_cast<double>(std::min(granularity, total)));

  // lowest-cost-first growth; ties break on (cluster, voxel) for determinism
  using Entry = std::tuple<double, int32_t, long>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
  for (size_t c = 0; c < seeds.size(); ++c)
    pq.push({0.0, static_cast<int32_t>(c), volume.idx(seeds[c].z, seeds[c].y, seeds[c].x)});

  auto cost = [&](int32_t c, int z, int y, int x) {
    const Seed& s = seeds[static_cast<size_t>(c)];
    double dz = z - s.z, dy = y - s.y, dx = x - s.x;
    double spatial = std::sqrt(dz * dz + dy * dy + dx * dx) / spacing;
    double di = std::abs(static_cast<double>(volume.vox(z, y, x)) - s.intensity);
    return edge_weight * di + spatial;
  };

  const int dz6[6] = {1, -1, 0, 0, 0, 0}, dy6[6] = {0, 0, 1, -1, 0, 0},
            dx6[6] = {0, 0, 0, 0, 1, -1};
  long assigned = 0;
  while (!pq.empty() && assigned < total) {
    auto [c_cost, c, i] = pq.top();
    pq.pop();
    (void)c_cost;
    if (out.clusters[static_cast<size_t>(i)] != -1) continue;
    out.clusters[static_cast<size_t>(i)] = c;
    ++assigned;
    int z = static_cast<int>(i / (static_cast<long>(volume.h) * volume.w));
    int rem = static_cast<int>(i % (static_cast<long>(volume.h) * volume.w));
    int y = rem / volume.w, x = rem % volume.w;
    for (int k = 0; k < 6; ++k) {
      int nz = z + dz6[k], ny = y + dy6[k], nx = x + dx6[k];
      if (nz < 0 || nz >= volume.d || ny < 0 || ny >= volume.h || nx < 0 || nx >= volume.w)
        continue;
      long j = volume.idx(nz, ny, nx);
      if (out.clusters[static_cast<size_t>(j)] == -1)
        pq.push({cost(c, nz, ny, nx), c, j});
    }
  }

  // duplicate grid seeds can leave unused ids; compact to a dense range
  std::vector<int32_t> remap(seeds.size(), -1);
  int32_t next = 0;
  for (auto& c : out.clusters) {
    if (remap[static_cast<size_t>(c)] == -1) remap[static_cast<size_t>(c)] = next++;
    c = remap[static_cast<size_t>(c)];
  }
  out.num_clusters = next;
  return out;
}

}  // namespace rpt
