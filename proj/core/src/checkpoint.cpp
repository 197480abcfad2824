#include "rpt/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "rpt/errors.hpp"

namespace rpt {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore& params,
                     const std::map<std::string, std::string>& meta) {
  json index;
  index["format"] = "rpt-ckpt-v1";
  index["meta"] = meta;
  json tensors = json::object();
  long offset = 0;
  for (const auto& [name, t] : params.all()) {
    tensors[name] = {{"offset", offset}, {"shape", t.shape()}};
    offset += t.size();
  }
  index["tensors"] = tensors;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os << index.dump() << '\n';
  for (const auto& [name, t] : params.all())
    os.write(reinterpret_cast<const char*>(t.value().data()),
             t.size() * static_cast<long>(sizeof(double)));
  if (!os) throw IoError("checkpoint write failed: " + path.string());
}

std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path,
                                                   nn::ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  std::string hdr;
  std::getline(is, hdr);
  json index = json::parse(hdr, nullptr, false);
  if (index.is_discarded() || index.value("format", "") != "rpt-ckpt-v1")
    throw IoError("bad checkpoint header: " + path.string());
  std::streampos blob_start = is.tellg();
  for (const auto& [name, t] : params.all()) {
    if (!index["tensors"].contains(name))
      throw IoError("checkpoint missing tensor: " + name);
    const auto& entry = index["tensors"][name];
    std::vector<int> shape = entry["shape"].get<std::vector<int>>();
    if (shape != t.shape())
      throw IoError("checkpoint shape mismatch for tensor: " + name);
    long offset = entry["offset"].get<long>();
    is.seekg(blob_start + static_cast<std::streamoff>(offset * static_cast<long>(sizeof(double))));
    Tensor handle = t;  // shared storage; safe to write through
    is.read(reinterpret_cast<char*>(handle.mutable_value().data()),
            t.size() * static_cast<long>(sizeof(double)));
    if (!is) throw IoError("truncated checkpoint: " + path.string());
  }
  std::map<std::string, std::string> meta;
  if (index.contains("meta"))
    for (auto& [k, v] : index["meta"].items()) meta[k] = v.get<std::string>();
  return meta;
}

}  // namespace rpt
