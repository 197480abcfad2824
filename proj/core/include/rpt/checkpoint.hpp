#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "rpt/nn.hpp"

namespace rpt {

// Unified checkpoint container: one JSON index line
//   {"format":"rpt-ckpt-v1","meta":{...},"tensors":{name:{"offset":o,"shape":[...]}}}
// followed by '\n' and a flat blob of little-endian float64 values. Offsets
// are element offsets into the blob. External backbones can be converted in
// by emitting the same index.

void save_checkpoint(const std::filesystem::path& path, const nn::ParamStore& params,
                     const std::map<std::string, std::string>& meta = {});

/// Loads values into an existing ParamStore (shapes must match).
/// Returns the stored meta map.
std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path,
                                                   nn::ParamStore& params);

}  // namespace rpt
