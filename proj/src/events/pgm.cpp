#include <cctype>
#include <stdexcept>
#include <string>

#include "evtrack/io_util.hpp"
#include "evtrack/sequence.hpp"

namespace evtrack {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& data, std::size_t& pos) {
    while (pos < data.size()) {
        if (std::isspace(static_cast<unsigned char>(data[pos]))) {
            ++pos;
        } else if (data[pos] == '#') {
            while (pos < data.size() && data[pos] != '\n') {
                ++pos;
            }
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
    }
    return data.substr(start, pos - start);
}

}  // namespace

GrayImage load_pgm(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    std::size_t pos = 0;
    if (next_token(data, pos) != "P5") {
        throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
    }
    std::int64_t width = 0, height = 0, maxval = 0;
    if (!parse_int64(next_token(data, pos), width) || !parse_int64(next_token(data, pos), height) ||
        !parse_int64(next_token(data, pos), maxval)) {
        throw std::runtime_error(path.string() + ": malformed PGM header");
    }
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw std::runtime_error(path.string() + ": unsupported PGM geometry or maxval");
    }
    ++pos;  // single whitespace byte after maxval
    const auto count = static_cast<std::size_t>(width * height);
    if (data.size() < pos + count) {
        throw std::runtime_error(path.string() + ": truncated PGM payload");
    }
    GrayImage image{static_cast<int>(width), static_cast<int>(height), {}};
    image.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                        data.begin() + static_cast<std::ptrdiff_t>(pos + count));
    return image;
}

std::string encode_pgm(const GrayImage& image) {
    std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    return out;
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path) {
    write_file_atomic(path, encode_pgm(image));
}

}  // namespace evtrack
