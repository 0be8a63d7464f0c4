#include "attnclust/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "attnclust/errors.hpp"

namespace attnclust {

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw std::invalid_argument("negative image dimensions");
    }
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

BinaryMask::BinaryMask(int width, int height, bool foreground) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw std::invalid_argument("negative mask dimensions");
    }
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                 foreground ? 1 : 0);
}

std::size_t BinaryMask::foreground_count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw std::invalid_argument("mask dimensions differ");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Parses the whitespace/comment separated header fields of a netpbm file.
class NetpbmHeader {
public:
    explicit NetpbmHeader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view magic() {
        if (bytes_.size() < 2) {
            throw DataError("netpbm: truncated magic");
        }
        pos_ = 2;
        return bytes_.substr(0, 2);
    }

    int number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long long value = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > (1 << 24)) {
                throw DataError(std::string("netpbm: ") + what + " out of range");
            }
            ++pos_;
        }
        if (pos_ == start) {
            throw DataError(std::string("netpbm: missing ") + what + " at byte " +
                            std::to_string(start));
        }
        return static_cast<int>(value);
    }

    // Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw DataError("netpbm: missing separator before raster at byte " +
                            std::to_string(pos_));
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

struct RasterHeader {
    int width;
    int height;
    std::size_t offset;
};

RasterHeader parse_header(std::string_view bytes, std::string_view expected_magic,
                          std::size_t channels) {
    NetpbmHeader header(bytes);
    if (header.magic() != expected_magic) {
        throw DataError("netpbm: expected magic " + std::string(expected_magic));
    }
    const int width = header.number("width");
    const int height = header.number("height");
    const int maxval = header.number("maxval");
    if (maxval != 255) {
        throw DataError("netpbm: only 8-bit rasters (maxval 255) are supported");
    }
    const std::size_t offset = header.raster_offset();
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
    if (bytes.size() < offset + need) {
        throw DataError("netpbm: truncated raster at byte " + std::to_string(bytes.size()) +
                        ", expected " + std::to_string(offset + need));
    }
    return {width, height, offset};
}

}  // namespace

RgbImage decode_ppm(std::string_view bytes) {
    const RasterHeader h = parse_header(bytes, "P6", 3);
    RgbImage image(h.width, h.height);
    const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + h.offset);
    for (int y = 0; y < h.height; ++y) {
        for (int x = 0; x < h.width; ++x) {
            const std::size_t i = image.index(x, y) * 3;
            image.at(x, y) = Rgb{raster[i], raster[i + 1], raster[i + 2]};
        }
    }
    return image;
}

std::string encode_ppm(const RgbImage& image) {
    std::string out = "P6\n" + std::to_string(image.width()) + " " +
                      std::to_string(image.height()) + "\n255\n";
    out.reserve(out.size() + image.pixel_count() * 3);
    for (const Rgb& p : image.pixels()) {
        out.push_back(static_cast<char>(p.r));
        out.push_back(static_cast<char>(p.g));
        out.push_back(static_cast<char>(p.b));
    }
    return out;
}

BinaryMask decode_pgm(std::string_view bytes) {
    const RasterHeader h = parse_header(bytes, "P5", 1);
    BinaryMask mask(h.width, h.height);
    for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
        mask.set(i, bytes[h.offset + i] != 0);
    }
    return mask;
}

std::string encode_pgm(const BinaryMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.width()) + " " +
                      std::to_string(mask.height()) + "\n255\n";
    out.reserve(out.size() + mask.pixel_count());
    for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
        out.push_back(mask[i] ? static_cast<char>(255) : static_cast<char>(0));
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    write_file(path, encode_ppm(image));
}

BinaryMask read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    write_file(path, encode_pgm(mask));
}

}  // namespace attnclust
