#include "rpt/volume.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "rpt/errors.hpp"

namespace rpt {

using nlohmann::json;

std::set<int32_t> VolumeScan::classes() const {
  std::set<int32_t> out;
  for (int32_t l : labels)
    if (l != 0) out.insert(l);
  return out;
}

void VolumeScan::validate() const {
  if (d < 1 || h < 1 || w < 1) throw ParameterError("VolumeScan: dims must be >= 1");
  if (static_cast<long>(voxels.size()) != size() ||
      static_cast<long>(labels.size()) != size())
    throw ParameterError("VolumeScan: voxels/labels size mismatch");
  int32_t max_label = 0;
  std::set<int32_t> seen;
  for (int32_t l : labels) {
    if (l < 0) throw ParameterError("VolumeScan: negative label");
    max_label = std::max(max_label, l);
    seen.insert(l);
  }
  for (int32_t k = 0; k <= max_label; ++k)
    if (!seen.count(k))
      throw ParameterError("VolumeScan: label set not contiguous, missing " + std::to_string(k));
}

namespace {

void write_raw(std::ofstream& os, const void* data, size_t bytes) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

std::string header_line(int d, int h, int w) {
  json j;
  j["dims"] = {d, h, w};
  j["dtype"] = "f32";
  j["fields"] = {"voxels", "labels"};
  return j.dump();
}

}  // namespace

void write_rfv(const std::filesystem::path& path, const VolumeScan& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  std::string hdr = header_line(v.d, v.h, v.w);
  os << hdr << '\n';
  write_raw(os, v.voxels.data(), v.voxels.size() * sizeof(float));
  write_raw(os, v.labels.data(), v.labels.size() * sizeof(int32_t));
  if (!os) throw IoError("write failed: " + path.string());
}

VolumeScan read_rfv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  std::string hdr;
  std::getline(is, hdr);
  json j = json::parse(hdr, nullptr, false);
  if (j.is_discarded() || !j.contains("dims")) throw IoError("bad RFV header: " + path.string());
  VolumeScan v;
  v.d = j["dims"][0];
  v.h = j["dims"][1];
  v.w = j["dims"][2];
  long n = v.size();
  if (n <= 0) throw IoError("bad RFV dims: " + path.string());
  v.voxels.resize(static_cast<size_t>(n));
  v.labels.resize(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(v.voxels.data()), n * static_cast<long>(sizeof(float)));
  is.read(reinterpret_cast<char*>(v.labels.data()), n * static_cast<long>(sizeof(int32_t)));
  if (!is) throw IoError("truncated RFV file: " + path.string());
  return v;
}

void write_pseudo_rfv(const std::filesystem::path& path, const PseudoMaskSet& p) {
  VolumeScan v;
  v.d = p.d;
  v.h = p.h;
  v.w = p.w;
  v.voxels.assign(static_cast<size_t>(v.size()), 0.0f);
  v.labels = p.clusters;
  write_rfv(path, v);
}

PseudoMaskSet read_pseudo_rfv(const std::filesystem::path& path) {
  VolumeScan v = read_rfv(path);
  PseudoMaskSet p;
  p.volume_ref = path.string();
  p.d = v.d;
  p.h = v.h;
  p.w = v.w;
  p.clusters = v.labels;
  int32_t mx = -1;
  for (int32_t c : p.clusters) mx = std::max(mx, c);
  p.num_clusters = mx + 1;
  return p;
}

Image slice_image(const VolumeScan& v, int z) {
  if (z < 0 || z >= v.d) throw ParameterError("slice_image: z out of range");
  Image out(v.h, v.w);
  for (int y = 0; y < v.h; ++y)
    for (int x = 0; x < v.w; ++x) out(y, x) = v.vox(z, y, x);
  return out;
}

Mask slice_label_mask(const VolumeScan& v, int z, int32_t label) {
  if (z < 0 || z >= v.d) throw ParameterError("slice_label_mask: z out of range");
  Mask out(v.h, v.w);
  for (int y = 0; y < v.h; ++y)
    for (int x = 0; x < v.w; ++x) out(y, x) = v.lab(z, y, x) == label ? 1 : 0;
  return out;
}

Mask slice_cluster_mask(const PseudoMaskSet& p, int z, int32_t cluster) {
  if (z < 0 || z >= p.d) throw ParameterError("slice_cluster_mask: z out of range");
  Mask out(p.h, p.w);
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) out(y, x) = p.clusters[p.idx(z, y, x)] == cluster ? 1 : 0;
  return out;
}

Image resize_bilinear(const Image& in, int out_h, int out_w) {
  const long h = in.rows(), w = in.cols();
  Image out(out_h, out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (out_h == 1) ? 0.0 : static_cast<double>(oy) * (h - 1) / (out_h - 1);
    long y0 = static_cast<long>(fy), y1 = std::min(y0 + 1, h - 1);
    double ty = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (out_w == 1) ? 0.0 : static_cast<double>(ox) * (w - 1) / (out_w - 1);
      long x0 = static_cast<long>(fx), x1 = std::min(x0 + 1, w - 1);
      double tx = fx - x0;
      out(oy, ox) = (1 - ty) * ((1 - tx) * in(y0, x0) + tx * in(y0, x1)) +
                    ty * ((1 - tx) * in(y1, x0) + tx * in(y1, x1));
    }
  }
  return out;
}

Mask resize_nearest(const Mask& in, int out_h, int out_w) {
  const long h = in.rows(), w = in.cols();
  Mask out(out_h, out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    long y = (out_h == 1) ? 0 : std::lround(static_cast<double>(oy) * (h - 1) / (out_h - 1));
    for (int ox = 0; ox < out_w; ++ox) {
      long x = (out_w == 1) ? 0 : std::lround(static_cast<double>(ox) * (w - 1) / (out_w - 1));
      out(oy, ox) = in(y, x);
    }
  }
  return out;
}

}  // namespace rpt
