#pragma once

#include <string>

#include "ctfg/graph.hpp"

namespace ctfg {

// Binary tensor container. Layout, all little-endian:
//   magic "CTFG", u32 version (1), then per array in map (name) order:
//   u32 name length, name bytes, u32 rank, u64 extent per dimension,
//   f64 payload in row-major order. Readers consume records until EOF.
// The same framing backs parameter checkpoints and the window cache.
inline constexpr unsigned kCheckpointVersion = 1;

void save_arrays(const std::string& path, const std::map<std::string, Array>& arrays);
std::map<std::string, Array> load_arrays(const std::string& path);

void save_params(const std::string& path, const ParamStore& params);
// Replaces the store's contents with the file's tensors.
void load_params(const std::string& path, ParamStore& params);

}  // namespace ctfg
