#include "brtr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "brtr/io.hpp"

namespace brtr::io {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::size_t read_header_int(std::istream& in) {
    int ch = in.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch)) throw IoError("malformed PNM header");
    std::size_t value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + static_cast<std::size_t>(ch - '0');
        if (value > (std::size_t{1} << 32)) throw IoError("PNM header value too large");
        ch = in.get();
    }
    if (ch == EOF || !std::isspace(ch)) throw IoError("malformed PNM header");
    return value;
}

unsigned char to_byte(double v) {
    if (std::isnan(v)) throw IoError("cannot write NaN pixel");
    const double r = std::round(v);  // half away from zero
    return static_cast<unsigned char>(std::clamp(r, 0.0, 255.0));
}

} // namespace

DenseTensor read_pnm(std::istream& in) {
    char magic[2] = {};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
        throw IoError("unsupported image format (expected binary P5 or P6)");
    }
    const std::size_t channels = magic[1] == '6' ? 3 : 1;
    const std::size_t width = read_header_int(in);
    const std::size_t height = read_header_int(in);
    const std::size_t maxval = read_header_int(in);
    if (maxval != 255) {
        throw IoError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    }
    if (width == 0 || height == 0) throw IoError("empty image");

    std::vector<unsigned char> raw(width * height * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError("truncated pixel data");

    DenseTensor t = channels == 3 ? DenseTensor(Shape{height, width, 3})
                                  : DenseTensor(Shape{height, width});
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c)
            for (std::size_t k = 0; k < channels; ++k) {
                t[r + height * (c + width * k)] = raw[(r * width + c) * channels + k];
            }
    return t;
}

void write_pnm(std::ostream& out, const DenseTensor& t) {
    const auto& s = t.shape();
    std::size_t channels = 1;
    if (s.order() == 3) {
        if (s[2] != 3) throw IoError("order-3 image tensor needs 3 channels");
        channels = 3;
    } else if (s.order() != 2) {
        throw IoError("image tensor must have order 2 or 3");
    }
    const std::size_t height = s[0], width = s[1];
    out << (channels == 3 ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> raw(width * height * channels);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c)
            for (std::size_t k = 0; k < channels; ++k) {
                raw[(r * width + c) * channels + k] = to_byte(t[r + height * (c + width * k)]);
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("image write failed");
}

DenseTensor load_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open");
    try {
        return read_pnm(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void save_pnm(const std::filesystem::path& path, const DenseTensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    try {
        write_pnm(out, t);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

} // namespace brtr::io
