#include "msbdl/io.hpp"

#include "msbdl/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace msbdl::io {

namespace {

constexpr std::string_view kMagic = "msbdl-matrix";

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

void write_matrix(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kMagic << ' ' << m.rows() << ' ' << m.cols() << " float64 little-endian\n";
  std::vector<std::uint64_t> raw(static_cast<std::size_t>(m.size()));
  for (Index k = 0; k < m.size(); ++k) raw[static_cast<std::size_t>(k)] = to_little(std::bit_cast<std::uint64_t>(m.data()[k]));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)));
  if (!out) throw IoError("failed writing " + path.string());
}

Matrix read_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, dtype, order;
  long long rows = -1, cols = -1;
  hs >> magic >> rows >> cols >> dtype >> order;
  if (magic != kMagic || rows < 0 || cols < 0 || dtype != "float64" || order != "little-endian")
    throw IoError(path.string() + ": not a matrix file (bad header '" + header + "')");
  Matrix m(rows, cols);
  std::vector<std::uint64_t> raw(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)))
    throw IoError(path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after payload");
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<double>(to_little(raw[static_cast<std::size_t>(k)]));
  return m;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  std::string text;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) text += ',';
      text += format_double(m(r, c));
    }
    text += '\n';
  }
  write_text(path, text);
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace msbdl::io
