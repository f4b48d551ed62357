#pragma once

#include "crom/types.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace crom {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Little-endian binary stream writer used by every artifact format.
class BinaryWriter {
 public:
  BinaryWriter(const std::filesystem::path& path, std::string_view magic);

  void u8(std::uint8_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void string(const std::string& s);
  void f64_array(const double* data, std::size_t count) { raw(data, count * sizeof(double)); }
  /// Column-major payload without dimensions.
  void dense(const Matrix& m) { f64_array(m.data(), static_cast<std::size_t>(m.size())); }
  void vector_with_size(const Vector& v);
  /// rows, cols, nnz as u64, then (row u64, col u64, value f64) per entry.
  void sparse(const SparseMatrix& m);
  void finish();

 private:
  void raw(const void* data, std::size_t bytes);
  std::ofstream out_;
  std::filesystem::path path_;
};

class BinaryReader {
 public:
  BinaryReader(const std::filesystem::path& path, std::string_view magic);

  std::uint8_t u8() { return scalar<std::uint8_t>(); }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  double f64() { return scalar<double>(); }
  std::string string();
  void f64_array(double* data, std::size_t count) { raw(data, count * sizeof(double)); }
  Matrix dense(Index rows, Index cols);
  Vector vector_with_size();
  SparseMatrix sparse();
  bool at_end();

 private:
  template <typename T>
  T scalar() {
    T v{};
    raw(&v, sizeof v);
    return v;
  }
  void raw(void* data, std::size_t bytes);
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace crom
