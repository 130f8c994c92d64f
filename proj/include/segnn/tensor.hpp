#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace segnn {

// Dense row-major matrix of doubles. Node representations are rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Matrix& m);

// Raises glibc's mmap and trim thresholds so large temporaries are reused
// instead of mapped and unmapped on every allocation. No-op elsewhere.
void tune_allocator();

struct Triplet {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;
};

// Compressed sparse row matrix. Column indices are strictly increasing within
// each row and row offsets are monotone.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  // Validates the CSR invariants; throws ShapeError when violated.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint32_t> offsets,
               std::vector<std::uint32_t> indices, std::vector<double> values);

  // Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);
  static SparseMatrix identity(std::size_t n);
  // Keeps entries with |v| > 0.
  static SparseMatrix from_dense(const Matrix& dense);
  static SparseMatrix block_diagonal(std::span<const SparseMatrix* const> blocks);
  // Stacks blocks with equal column counts on top of each other.
  static SparseMatrix vstack(std::span<const SparseMatrix* const> blocks);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }
  const std::vector<std::uint32_t>& offsets() const { return offsets_; }
  const std::vector<std::uint32_t>& indices() const { return indices_; }
  const std::vector<double>& values() const { return values_; }

  // this * x
  Matrix multiply(const Matrix& x) const;
  // transpose(this) * x, without materialising the transpose
  Matrix multiply_transposed(const Matrix& x) const;
  Matrix to_dense() const;
  SparseMatrix transpose() const;

  bool operator==(const SparseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> offsets_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

}  // namespace segnn
