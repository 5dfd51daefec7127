#pragma once

#include <filesystem>
#include <iosfwd>

#include "brtr/tensor.hpp"

namespace brtr::io {

// Binary PNM with maxval 255: P6 maps to an H x W x 3 tensor, P5 to H x W.
// Pixel (row r, col c, channel k) is entry (r, c, k).
DenseTensor read_pnm(std::istream& in);
DenseTensor load_pnm(const std::filesystem::path& path);

/// Values are rounded half away from zero and clamped to [0, 255]. Order-3
/// tensors need 3 channels.
void write_pnm(std::ostream& out, const DenseTensor& t);
void save_pnm(const std::filesystem::path& path, const DenseTensor& t);

} // namespace brtr::io
