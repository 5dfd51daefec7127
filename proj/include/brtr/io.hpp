#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "brtr/tensor.hpp"
#include "brtr/tr_model.hpp"

namespace brtr::io {

/// Raised for unreadable files and malformed payloads.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ".brt": "BRT1", u32 N, N x u64 dims, then doubles, all little-endian.
void write_tensor(std::ostream& out, const DenseTensor& t);
DenseTensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor load_tensor(const std::filesystem::path& path);

// ".brm": "BRM1", same header, then one byte per entry.
void write_mask(std::ostream& out, const IndexMask& m);
IndexMask read_mask(std::istream& in);
void save_mask(const std::filesystem::path& path, const IndexMask& m);
IndexMask load_mask(const std::filesystem::path& path);

// Core container: "BRTC", u32 N, then N ".brt" payloads.
void write_cores(std::ostream& out, const TRCores& cores);
TRCores read_cores(std::istream& in);
void save_cores(const std::filesystem::path& path, const TRCores& cores);
TRCores load_cores(const std::filesystem::path& path);

} // namespace brtr::io
