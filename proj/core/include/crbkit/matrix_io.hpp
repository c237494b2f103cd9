#pragma once

#include "crbkit/sym_matrix.hpp"

#include <Eigen/Dense>

#include <filesystem>

namespace crb {

/// Plain-text matrix format: first line "n m", then n rows of m
/// whitespace-separated decimals. Throws IoError on malformed input.
Eigen::MatrixXd read_dense_matrix(const std::filesystem::path& path);

void write_dense_matrix(const std::filesystem::path& path,
                        const Eigen::MatrixXd& a);

/// Reads a square matrix and symmetrizes it into a SymMatrix.
SymMatrix read_sym_matrix(const std::filesystem::path& path);

}  // namespace crb
