#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace givt::harness {

/// Binary PGM: "P5\n<w> <h>\n255\n" then w*h bytes, row-major.
/// Pixels in [0, 1] are clamped and rounded to the nearest level.
void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t width,
               std::size_t height);

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

PgmImage read_pgm(const std::filesystem::path& path);

/// Append-only CSV with a fixed header.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

    void row(const std::vector<std::string>& cells);
    const std::vector<std::string>& header() const noexcept { return header_; }

    static std::string num(double v);
    static std::string num(std::size_t v) { return std::to_string(v); }

private:
    std::ofstream out_;
    std::vector<std::string> header_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

/// Strict reader: every row must have exactly as many cells as the header.
CsvTable read_csv(const std::filesystem::path& path);

} // namespace givt::harness
