#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cogan/cogan.hpp"
#include "cogan/tensor.hpp"

namespace cogan {

/// Versioned binary tensor container. Layout, little-endian throughout:
///   magic "COG1"
///   u64 tensor count
///   per tensor: u32 name length, name bytes, u8 dtype tag (0 = f64),
///               u32 rank, u64 dims..., raw f64 payload.
void save_tensor_file(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> load_tensor_file(const std::filesystem::path& path);

/// Plain-text metadata sidecar, one "key=value" per line.
void save_sidecar(const std::filesystem::path& path, const std::map<std::string, std::string>& meta);
std::map<std::string, std::string> load_sidecar(const std::filesystem::path& path);

/// Canonical named view of every model tensor (params deduplicated storage
/// is written through each network view; tied entries carry equal bytes).
std::vector<std::pair<std::string, const Tensor*>> model_tensors(const CoGANModel& model);

/// Writes `<base>.cog` and `<base>.meta`.
void save_cogan(const std::filesystem::path& base, const CoGANModel& model,
                std::map<std::string, std::string> extra_meta = {});

/// Rebuilds the model from the sidecar (preset/width/k/l) and restores every
/// tensor. Round-trip is bitwise exact.
CoGANModel load_cogan(const std::filesystem::path& base);

}  // namespace cogan
