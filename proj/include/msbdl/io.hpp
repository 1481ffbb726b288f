#pragma once

// Matrix files and small serialization helpers used by the command line tool.
//
// A matrix file is one ASCII header line
//   msbdl-matrix <rows> <cols> float64 little-endian
// followed by rows*cols IEEE doubles in column-major order, little-endian on
// every host, so files are bit-identical across platforms.

#include "msbdl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace msbdl::io {

namespace fs = std::filesystem;

void write_matrix(const fs::path& path, const Matrix& m);
Matrix read_matrix(const fs::path& path);

/// Plain CSV, one matrix row per line, values printed with %.17g.
void write_matrix_csv(const fs::path& path, const Matrix& m);

/// Shortest round-trip text for a double ("nan", "inf", "-inf" for specials).
std::string format_double(double v);

void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex(std::uint64_t v);

}  // namespace msbdl::io
