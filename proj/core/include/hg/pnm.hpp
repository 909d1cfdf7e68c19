#pragma once

// Binary PGM (P5) and PPM (P6) images with maxval 255.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hg/grid.hpp"
#include "hg/linalg.hpp"

namespace hg {

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;  ///< 1 for P5, 3 for P6
    std::vector<std::uint8_t> pixels;  ///< row-major, interleaved channels

    GridShape shape() const { return GridShape(height, width); }
    friend bool operator==(const Image&, const Image&) = default;
};

/// Parses a P5/P6 file. Comments ('#' to end of line) and any run of
/// whitespace are accepted between header fields. Throws IoError on a bad
/// magic, maxval other than 255, or a short payload.
Image read_pnm(const std::vector<std::uint8_t>& bytes);

/// Canonical form: "P5\n<w> <h>\n255\n" followed by the payload.
std::vector<std::uint8_t> write_pnm(const Image& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// N_pix x channels features, value / 255.
template <typename T>
Dense<T> image_features(const Image& img);

}  // namespace hg
