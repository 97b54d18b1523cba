#include "givt/harness/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "givt/error.hpp"

namespace givt::harness {

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t width,
               std::size_t height)
{
    if (pixels.size() != width * height) {
        throw Error(ErrorCode::shape_mismatch, "pixel count does not match width x height");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write " + path.string());
    }
    out << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<char> bytes(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = std::clamp(std::isfinite(pixels[i]) ? pixels[i] : 0.0, 0.0, 1.0);
        bytes[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path.string());
    }
}

PgmImage read_pgm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    std::string magic;
    PgmImage img;
    int maxval = 0;
    in >> magic >> img.width >> img.height >> maxval;
    if (!in || magic != "P5" || maxval != 255 || img.width == 0 || img.height == 0) {
        throw Error(ErrorCode::format, path.string() + " is not an 8-bit binary PGM");
    }
    if (in.get() != '\n') {
        throw Error(ErrorCode::format, path.string() + ": header must end in a single newline");
    }
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!in || in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::format, path.string() + ": payload size does not match the header");
    }
    return img;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : out_(path, std::ios::trunc), header_(std::move(header))
{
    if (!out_) {
        throw Error(ErrorCode::io, "cannot write " + path.string());
    }
    for (std::size_t i = 0; i < header_.size(); ++i) {
        out_ << (i ? "," : "") << header_[i];
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells)
{
    if (cells.size() != header_.size()) {
        throw Error(ErrorCode::shape_mismatch, "CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                                                   std::to_string(header_.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out_ << (i ? "," : "") << cells[i];
    }
    out_ << '\n';
    out_.flush();
}

std::string CsvWriter::num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::size_t CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw Error(ErrorCode::format, "CSV has no column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path.string());
    }
    const auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            cells.emplace_back();
        }
        return cells;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw Error(ErrorCode::format, path.string() + " has no header");
    }
    t.header = split(line);
    while (std::getline(in, line)) {
        auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw Error(ErrorCode::format, path.string() + ": row width differs from header");
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

} // namespace givt::harness
