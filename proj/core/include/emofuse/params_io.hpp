#pragma once
// Single-file serialized parameter maps keyed by layer name. Used for both
// branch checkpoint exports and fusion checkpoints.
//
// Binary layout (little-endian):
//   magic "EMFPARAM", uint32 version, uint32 entry count, then per entry:
//   uint32 name length, name bytes, int32 rows, int32 cols, rows*cols float64.

#include <filesystem>
#include <map>
#include <string>

#include "emofuse/tensor.hpp"

namespace emofuse {

using ParamMap = std::map<std::string, Tensor>;

void save_params(const ParamMap& params, const std::filesystem::path& path);
ParamMap load_params(const std::filesystem::path& path);

// Order-independent content fingerprint (entries hashed in key order).
uint64_t params_digest(const ParamMap& params);

}  // namespace emofuse
