#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "givt/params.hpp"
#include "givt/tensor_io.hpp"

namespace givt::harness {

// Checkpoint container (little-endian):
//   8 bytes  magic "GIVTCKPT"
//   u64      manifest length in bytes
//   manifest UTF-8 JSON: format_version, kind, config, config_hash, step, dtype,
//            tensors [{name, offset, bytes}] with offsets relative to the first dump
//   dumps    one tensor dump per parameter, in manifest order

struct CheckpointInfo {
    std::string kind;
    /// Architecture identity JSON the parameters were built from.
    std::string config;
    std::string config_hash;
    std::size_t step = 0;
    Dtype dtype = Dtype::f32;
    std::size_t tensor_count = 0;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config,
                     std::size_t step, const ParameterStore<T>& params);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads values into an already-built store. Throws config_mismatch when the
/// kind or config hash differ, or when names/shapes disagree.
template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config,
                               ParameterStore<T>& params);

} // namespace givt::harness
