#include "givt/harness/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "givt/error.hpp"
#include "givt/harness/config.hpp"

namespace givt::harness {

using nlohmann::json;

namespace {

constexpr char magic[8] = {'G', 'I', 'V', 'T', 'C', 'K', 'P', 'T'};
constexpr int format_version = 1;

template <typename T>
constexpr Dtype dtype_of()
{
    return sizeof(T) == 4 ? Dtype::f32 : Dtype::f64;
}

struct Opened {
    json manifest;
    std::ifstream in;
    std::uint64_t payload_start = 0;
};

Opened open_checkpoint(const std::filesystem::path& path)
{
    Opened o;
    o.in.open(path, std::ios::binary);
    if (!o.in) {
        throw Error(ErrorCode::io, "cannot open checkpoint " + path.string());
    }
    char m[8];
    std::uint64_t len = 0;
    o.in.read(m, 8);
    o.in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!o.in || std::string_view(m, 8) != std::string_view(magic, 8)) {
        throw Error(ErrorCode::format, path.string() + " is not a checkpoint");
    }
    if (len > (std::uint64_t{1} << 32)) {
        throw Error(ErrorCode::format, "checkpoint manifest length is implausible");
    }
    std::string text(len, '\0');
    o.in.read(text.data(), static_cast<std::streamsize>(len));
    if (!o.in) {
        throw Error(ErrorCode::format, "truncated checkpoint manifest");
    }
    o.manifest = json::parse(text, nullptr, false);
    if (o.manifest.is_discarded() || !o.manifest.is_object()) {
        throw Error(ErrorCode::format, "checkpoint manifest is not valid JSON");
    }
    o.payload_start = 16 + len;
    return o;
}

CheckpointInfo info_from(const json& m)
{
    try {
        if (m.at("format_version").get<int>() != format_version) {
            throw Error(ErrorCode::format, "unsupported checkpoint format version");
        }
        CheckpointInfo info;
        info.kind = m.at("kind").get<std::string>();
        info.config = m.at("config").get<std::string>();
        info.config_hash = m.at("config_hash").get<std::string>();
        info.step = m.at("step").get<std::size_t>();
        const std::string dt = m.at("dtype").get<std::string>();
        if (dt != "f32" && dt != "f64") {
            throw Error(ErrorCode::format, "unknown checkpoint dtype " + dt);
        }
        info.dtype = dt == "f32" ? Dtype::f32 : Dtype::f64;
        info.tensor_count = m.at("tensors").size();
        return info;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format, std::string("malformed checkpoint manifest: ") + e.what());
    }
}

} // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config,
                     std::size_t step, const ParameterStore<T>& params)
{
    std::ostringstream payload(std::ios::binary);
    json tensors = json::array();
    for (const auto& [name, t] : params) {
        const auto offset = static_cast<std::size_t>(payload.tellp());
        write_tensor_dump<T>(payload, t.shape(), t.data());
        tensors.push_back({{"name", name}, {"offset", offset}, {"bytes", dump_size<T>(t.shape())}});
    }
    const json manifest = {{"format_version", format_version},
                           {"kind", kind},
                           {"config", config},
                           {"config_hash", fnv1a_hex(config)},
                           {"step", step},
                           {"dtype", dtype_of<T>() == Dtype::f32 ? "f32" : "f64"},
                           {"tensors", tensors}};
    const std::string text = manifest.dump();
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write checkpoint " + path.string());
    }
    const std::uint64_t len = text.size();
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const std::string body = payload.str();
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) {
        throw Error(ErrorCode::io, "failed writing checkpoint " + path.string());
    }
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path)
{
    return info_from(open_checkpoint(path).manifest);
}

template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config,
                               ParameterStore<T>& params)
{
    Opened o = open_checkpoint(path);
    const CheckpointInfo info = info_from(o.manifest);
    if (info.kind != kind) {
        throw Error(ErrorCode::config_mismatch, "checkpoint holds a " + info.kind + " model, expected " + kind);
    }
    if (info.config_hash != fnv1a_hex(config) || info.config_hash != fnv1a_hex(info.config)) {
        throw Error(ErrorCode::config_mismatch, "checkpoint config hash " + info.config_hash +
                                                    " does not match the requested config (" + fnv1a_hex(config) +
                                                    ")");
    }
    const json& tensors = o.manifest.at("tensors");
    if (tensors.size() != params.size()) {
        throw Error(ErrorCode::config_mismatch, "checkpoint tensor count differs from the model");
    }
    std::size_t i = 0;
    for (auto& [name, t] : params) {
        const json& entry = tensors[i++];
        if (entry.at("name").get<std::string>() != name) {
            throw Error(ErrorCode::config_mismatch, "checkpoint tensor '" + entry.at("name").get<std::string>() +
                                                        "' where '" + name + "' was expected");
        }
        o.in.seekg(static_cast<std::streamoff>(o.payload_start + entry.at("offset").get<std::uint64_t>()));
        const DumpHeader h = read_dump_header(o.in);
        if (h.shape != t.shape()) {
            throw Error(ErrorCode::config_mismatch, "shape of '" + name + "' differs: " + shape_str(h.shape) +
                                                        " vs " + shape_str(t.shape()));
        }
        const std::vector<T> values = read_dump_payload<T>(o.in, h, info.dtype);
        std::copy(values.begin(), values.end(), t.mutable_data().begin());
    }
    return info;
}

template void save_checkpoint<float>(const std::filesystem::path&, const std::string&, const std::string&,
                                     std::size_t, const ParameterStore<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const std::string&, const std::string&,
                                      std::size_t, const ParameterStore<double>&);
template CheckpointInfo load_checkpoint<float>(const std::filesystem::path&, const std::string&, const std::string&,
                                               ParameterStore<float>&);
template CheckpointInfo load_checkpoint<double>(const std::filesystem::path&, const std::string&,
                                                const std::string&, ParameterStore<double>&);

} // namespace givt::harness
