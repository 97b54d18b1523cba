#include "givt/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace givt {

static_assert(std::endian::native == std::endian::little, "tensor dumps assume a little-endian host");

namespace {

constexpr std::array<char, 8> magic{'G', 'I', 'V', 'T', 'T', 'N', 'S', 'R'};

void write_u32(std::ostream& os, std::uint32_t v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is)
{
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw Error(ErrorCode::format, "truncated tensor dump header");
    }
    return v;
}

} // namespace

std::size_t dtype_size(Dtype dtype) noexcept
{
    return dtype == Dtype::f32 ? 4 : 8;
}

template <typename T>
void write_tensor_dump(std::ostream& os, const Shape& shape, std::span<const T> values)
{
    if (numel(shape) != values.size()) {
        throw Error(ErrorCode::shape_mismatch, "dump shape does not match payload");
    }
    os.write(magic.data(), magic.size());
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) {
        write_u32(os, static_cast<std::uint32_t>(e));
    }
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (!os) {
        throw Error(ErrorCode::io, "failed writing tensor dump");
    }
}

DumpHeader read_dump_header(std::istream& is)
{
    std::array<char, 8> m{};
    if (!is.read(m.data(), m.size()) || m != magic) {
        throw Error(ErrorCode::format, "bad tensor dump magic");
    }
    DumpHeader h;
    const std::uint32_t rank = read_u32(is);
    if (rank > 16) {
        throw Error(ErrorCode::format, "implausible tensor rank " + std::to_string(rank));
    }
    for (std::uint32_t i = 0; i < rank; ++i) {
        h.shape.push_back(read_u32(is));
    }
    h.header_bytes = 12 + 4 * static_cast<std::size_t>(rank);
    return h;
}

template <typename T>
std::vector<T> read_dump_payload(std::istream& is, const DumpHeader& header, Dtype dtype)
{
    const std::size_t n = numel(header.shape);
    std::vector<T> out(n);
    auto read_as = [&]<typename U>(U) {
        std::vector<U> raw(n);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(U)))) {
            throw Error(ErrorCode::format, "truncated tensor dump payload");
        }
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = static_cast<T>(raw[i]);
        }
    };
    if (dtype == Dtype::f32) {
        read_as(float{});
    } else {
        read_as(double{});
    }
    return out;
}

template <typename T>
void save_tensor_file(const std::filesystem::path& path, const Tensor<T>& tensor)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
    }
    write_tensor_dump<T>(os, tensor.shape(), tensor.data());
}

template <typename T>
Tensor<T> load_tensor_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    const auto file_size = std::filesystem::file_size(path);
    const DumpHeader h = read_dump_header(is);
    const std::size_t n = numel(h.shape);
    const std::size_t payload = file_size - h.header_bytes;
    Dtype dtype;
    if (payload == n * 4) {
        dtype = Dtype::f32;
    } else if (payload == n * 8) {
        dtype = Dtype::f64;
    } else {
        throw Error(ErrorCode::format, "payload of " + std::to_string(payload) + " bytes matches neither f32 nor f64 for " +
                                           shape_str(h.shape));
    }
    auto values = read_dump_payload<T>(is, h, dtype);
    return Tensor<T>(h.shape, std::move(values));
}

template void write_tensor_dump<float>(std::ostream&, const Shape&, std::span<const float>);
template void write_tensor_dump<double>(std::ostream&, const Shape&, std::span<const double>);
template std::vector<float> read_dump_payload<float>(std::istream&, const DumpHeader&, Dtype);
template std::vector<double> read_dump_payload<double>(std::istream&, const DumpHeader&, Dtype);
template void save_tensor_file<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor_file<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor_file<float>(const std::filesystem::path&);
template Tensor<double> load_tensor_file<double>(const std::filesystem::path&);

} // namespace givt
