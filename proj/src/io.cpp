#include "brtr/io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace brtr::io {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<unsigned char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFFu);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
        throw IoError("unexpected end of file");
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

void expect_magic(std::istream& in, const char (&magic)[5]) {
    char got[4];
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
        throw IoError(std::string("bad magic, expected ") + magic);
    }
}

void put_shape(std::ostream& out, const Shape& shape) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.order()));
    for (auto d : shape.dims()) put_le<std::uint64_t>(out, d);
}

Shape get_shape(std::istream& in) {
    const auto order = get_le<std::uint32_t>(in);
    if (order == 0) throw IoError("tensor order must be positive");
    std::vector<std::size_t> dims(order);
    for (auto& d : dims) {
        d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
        if (d == 0) throw IoError("tensor dimensions must be positive");
    }
    return Shape(std::move(dims));
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return in;
}

} // namespace

void write_tensor(std::ostream& out, const DenseTensor& t) {
    put_magic(out, "BRT1");
    put_shape(out, t.shape());
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw IoError("write failed");
}

DenseTensor read_tensor(std::istream& in) {
    expect_magic(in, "BRT1");
    Shape shape = get_shape(in);
    std::vector<double> data(shape.numel());
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    return DenseTensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& t) {
    auto out = open_out(path);
    write_tensor(out, t);
}

DenseTensor load_tensor(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_tensor(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_mask(std::ostream& out, const IndexMask& m) {
    put_magic(out, "BRM1");
    put_shape(out, m.shape());
    out.write(reinterpret_cast<const char*>(m.bits().data()),
              static_cast<std::streamsize>(m.bits().size()));
    if (!out) throw IoError("write failed");
}

IndexMask read_mask(std::istream& in) {
    expect_magic(in, "BRM1");
    Shape shape = get_shape(in);
    std::vector<std::uint8_t> bits(shape.numel());
    if (!in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()))) {
        throw IoError("unexpected end of file");
    }
    for (auto b : bits) {
        if (b > 1) throw IoError("mask bytes must be 0 or 1");
    }
    return IndexMask(std::move(shape), std::move(bits));
}

void save_mask(const std::filesystem::path& path, const IndexMask& m) {
    auto out = open_out(path);
    write_mask(out, m);
}

IndexMask load_mask(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_mask(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_cores(std::ostream& out, const TRCores& cores) {
    put_magic(out, "BRTC");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cores.order()));
    for (const auto& c : cores.cores()) write_tensor(out, c);
}

TRCores read_cores(std::istream& in) {
    expect_magic(in, "BRTC");
    const auto order = get_le<std::uint32_t>(in);
    std::vector<DenseTensor> cores;
    cores.reserve(order);
    for (std::uint32_t k = 0; k < order; ++k) cores.push_back(read_tensor(in));
    try {
        return TRCores(std::move(cores));
    } catch (const std::invalid_argument& e) {
        throw IoError(e.what());
    }
}

void save_cores(const std::filesystem::path& path, const TRCores& cores) {
    auto out = open_out(path);
    write_cores(out, cores);
}

TRCores load_cores(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_cores(in);
}

} // namespace brtr::io
