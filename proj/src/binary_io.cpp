#include "crom/binary_io.hpp"

#include <vector>

namespace crom {

BinaryWriter::BinaryWriter(const std::filesystem::path& path, std::string_view magic)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  require(out_.good(), "cannot open " + path.string() + " for writing");
  raw(magic.data(), magic.size());
}

void BinaryWriter::raw(const void* data, std::size_t bytes) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  require(out_.good(), "write failed on " + path_.string());
}

void BinaryWriter::string(const std::string& s) {
  u64(s.size());
  raw(s.data(), s.size());
}

void BinaryWriter::vector_with_size(const Vector& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  f64_array(v.data(), static_cast<std::size_t>(v.size()));
}

void BinaryWriter::sparse(const SparseMatrix& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  u64(static_cast<std::uint64_t>(m.nonZeros()));
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      u64(static_cast<std::uint64_t>(it.row()));
      u64(static_cast<std::uint64_t>(it.col()));
      f64(it.value());
    }
}

void BinaryWriter::finish() {
  out_.flush();
  require(out_.good(), "write failed on " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path, std::string_view magic)
    : in_(path, std::ios::binary), path_(path) {
  require(in_.good(), "cannot open " + path.string());
  std::string header(magic.size(), '\0');
  in_.read(header.data(), static_cast<std::streamsize>(header.size()));
  require(in_.good() && header == magic, path.string() + ": bad magic, expected " + std::string(magic));
}

void BinaryReader::raw(void* data, std::size_t bytes) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  require(in_.good(), path_.string() + ": truncated file");
}

std::string BinaryReader::string() {
  const auto n = u64();
  require(n < (1u << 20), path_.string() + ": implausible string length");
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

Matrix BinaryReader::dense(Index rows, Index cols) {
  Matrix m(rows, cols);
  f64_array(m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

Vector BinaryReader::vector_with_size() {
  const auto n = u64();
  Vector v(static_cast<Index>(n));
  f64_array(v.data(), n);
  return v;
}

SparseMatrix BinaryReader::sparse() {
  const auto rows = static_cast<Index>(u64());
  const auto cols = static_cast<Index>(u64());
  const auto nnz = u64();
  std::vector<Triplet> triplets;
  triplets.reserve(nnz);
  for (std::uint64_t k = 0; k < nnz; ++k) {
    const auto r = static_cast<Index>(u64());
    const auto c = static_cast<Index>(u64());
    const double v = f64();
    require(r < rows && c < cols, path_.string() + ": sparse entry out of range");
    triplets.emplace_back(r, c, v);
  }
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

bool BinaryReader::at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

}  // namespace crom
