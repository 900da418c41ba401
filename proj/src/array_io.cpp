#include "romsuite/array_io.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace romsuite {

namespace {

void write_dims(std::ofstream& out, std::uint64_t rows, std::uint64_t cols) {
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
}

}  // namespace

void write_matrix(const std::filesystem::path& file, const Matrix& m) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + file.string());
  write_dims(out, static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()));
  // Stored row-major regardless of Eigen's in-memory default.
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + file.string());
}

Matrix read_matrix(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + file.string());
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw std::runtime_error("truncated header: " + file.string());
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> row(cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(cols * sizeof(double)));
    if (!in) throw std::runtime_error("truncated payload: " + file.string());
    for (std::uint64_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return m;
}

void write_vector(const std::filesystem::path& file, const Vector& v) {
  Matrix m(v.size(), 1);
  m.col(0) = v;
  write_matrix(file, m);
}

Vector read_vector(const std::filesystem::path& file) {
  Matrix m = read_matrix(file);
  if (m.cols() != 1 && m.rows() != 1)
    throw std::runtime_error("not a vector: " + file.string());
  if (m.cols() == 1) return m.col(0);
  return m.row(0).transpose();
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + file.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + file.string());
  out << text;
}

}  // namespace romsuite
