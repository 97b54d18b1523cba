#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "givt/tensor.hpp"

namespace givt {

// Tensor dump layout (all little-endian):
//   8 bytes  magic "GIVTTNSR"
//   u32      rank
//   u32      extent, repeated rank times
//   payload  product(extents) raw f32 or f64 values
// The dump carries no dtype tag; the container (checkpoint manifest) or the
// file length tells the reader which width was written.

enum class Dtype : std::uint8_t { f32, f64 };

std::size_t dtype_size(Dtype dtype) noexcept;

struct DumpHeader {
    Shape shape;
    std::size_t header_bytes = 0;
};

template <typename T>
void write_tensor_dump(std::ostream& os, const Shape& shape, std::span<const T> values);

DumpHeader read_dump_header(std::istream& is);

/// Reads a payload of `dtype` width and converts to T.
template <typename T>
std::vector<T> read_dump_payload(std::istream& is, const DumpHeader& header, Dtype dtype);

template <typename T>
std::size_t dump_size(const Shape& shape) noexcept
{
    return 8 + 4 + 4 * shape.size() + numel(shape) * sizeof(T);
}

template <typename T>
void save_tensor_file(const std::filesystem::path& path, const Tensor<T>& tensor);

/// Loads a standalone dump, inferring the payload width from the file size.
template <typename T>
Tensor<T> load_tensor_file(const std::filesystem::path& path);

} // namespace givt
