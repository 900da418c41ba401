#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>

namespace romsuite {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Binary array container: two little-endian u64 dims (rows, cols) followed
// by row-major f64 payload. All persisted matrices in the toolkit use this
// layout so artifacts stay language-neutral.
void write_matrix(const std::filesystem::path& file, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& file);

void write_vector(const std::filesystem::path& file, const Vector& v);
Vector read_vector(const std::filesystem::path& file);

std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, const std::string& text);

}  // namespace romsuite
