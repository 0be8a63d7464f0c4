#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "attnclust/image.hpp"

namespace fixtures {

// Uniform block of one color on a uniform background of another.
struct BlockImage {
    attnclust::RgbImage image;
    attnclust::Rect block;
    attnclust::Rect bbox;
    attnclust::BinaryMask truth;
};

inline BlockImage block_image(int size, const attnclust::Rect& block, int margin, attnclust::Rgb fg,
                              attnclust::Rgb bg) {
    BlockImage out{attnclust::RgbImage(size, size, bg), block, {}, attnclust::BinaryMask(size, size)};
    for (int y = block.y; y < block.y + block.height; ++y) {
        for (int x = block.x; x < block.x + block.width; ++x) {
            out.image.at(x, y) = fg;
            out.truth.set(x, y, true);
        }
    }
    const int x0 = std::max(0, block.x - margin);
    const int y0 = std::max(0, block.y - margin);
    const int x1 = std::min(size, block.x + block.width + margin);
    const int y1 = std::min(size, block.y + block.height + margin);
    out.bbox = {x0, y0, x1 - x0, y1 - y0};
    return out;
}

// Seeded 64x64 two-color image with a 10-30 px block and a 2-5 px bbox margin.
inline BlockImage random_block_image(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int size = 64;
    const int w = pick(10, 30);
    const int h = pick(10, 30);
    const int margin = pick(2, 5);
    const attnclust::Rect block{pick(margin, size - w - margin), pick(margin, size - h - margin), w, h};
    attnclust::Rgb fg{};
    attnclust::Rgb bg{};
    do {
        fg = {static_cast<std::uint8_t>(pick(0, 255)), static_cast<std::uint8_t>(pick(0, 255)),
              static_cast<std::uint8_t>(pick(0, 255))};
        bg = {static_cast<std::uint8_t>(pick(0, 255)), static_cast<std::uint8_t>(pick(0, 255)),
              static_cast<std::uint8_t>(pick(0, 255))};
    } while (std::abs(fg.r - bg.r) + std::abs(fg.g - bg.g) + std::abs(fg.b - bg.b) < 60);
    return block_image(size, block, margin, fg, bg);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("attnclust_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
