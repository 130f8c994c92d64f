#include "segnn/tensor.hpp"

#include <algorithm>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "segnn/errors.hpp"

namespace segnn {

std::string shape_string(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint32_t> offsets,
                           std::vector<std::uint32_t> indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      offsets_(std::move(offsets)),
      indices_(std::move(indices)),
      values_(std::move(values)) {
  if (offsets_.size() != rows_ + 1 || offsets_.front() != 0 ||
      offsets_.back() != indices_.size() || indices_.size() != values_.size()) {
    throw ShapeError("inconsistent CSR arrays");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (offsets_[r] > offsets_[r + 1]) throw ShapeError("CSR row offsets are not monotone");
    for (std::uint32_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      if (indices_[k] >= cols_) throw ShapeError("CSR column index out of range");
      if (k > offsets_[r] && indices_[k] <= indices_[k - 1]) {
        throw ShapeError("CSR column indices not strictly increasing in row " +
                         std::to_string(r));
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::uint32_t> offsets(rows + 1, 0);
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  indices.reserve(triplets.size());
  values.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& t = triplets[i];
    if (t.row >= rows || t.col >= cols) throw ShapeError("triplet outside matrix shape");
    if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
      values.back() += t.value;
      continue;
    }
    indices.push_back(t.col);
    values.push_back(t.value);
    ++offsets[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  return SparseMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::uint32_t> offsets(n + 1);
  std::vector<std::uint32_t> indices(n);
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < n; ++i) indices[i] = static_cast<std::uint32_t>(i);
  return SparseMatrix(n, n, std::move(offsets), std::move(indices), std::vector<double>(n, 1.0));
}

SparseMatrix SparseMatrix::from_dense(const Matrix& dense) {
  const auto rows = static_cast<std::size_t>(dense.rows());
  const auto cols = static_cast<std::size_t>(dense.cols());
  std::vector<std::uint32_t> offsets(rows + 1, 0);
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      if (v != 0.0) {
        indices.push_back(static_cast<std::uint32_t>(c));
        values.push_back(v);
      }
    }
    offsets[r + 1] = static_cast<std::uint32_t>(indices.size());
  }
  return SparseMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
}

SparseMatrix SparseMatrix::block_diagonal(std::span<const SparseMatrix* const> blocks) {
  std::size_t rows = 0, cols = 0, nnz = 0;
  for (const auto* b : blocks) {
    rows += b->rows();
    cols += b->cols();
    nnz += b->nnz();
  }
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  offsets.reserve(rows + 1);
  indices.reserve(nnz);
  values.reserve(nnz);
  offsets.push_back(0);
  std::uint32_t col_base = 0;
  for (const auto* b : blocks) {
    for (std::size_t r = 0; r < b->rows(); ++r) {
      for (std::uint32_t k = b->offsets_[r]; k < b->offsets_[r + 1]; ++k) {
        indices.push_back(col_base + b->indices_[k]);
        values.push_back(b->values_[k]);
      }
      offsets.push_back(static_cast<std::uint32_t>(indices.size()));
    }
    col_base += static_cast<std::uint32_t>(b->cols());
  }
  return SparseMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
}

SparseMatrix SparseMatrix::vstack(std::span<const SparseMatrix* const> blocks) {
  if (blocks.empty()) return SparseMatrix();
  const std::size_t cols = blocks[0]->cols();
  std::size_t rows = 0, nnz = 0;
  for (const auto* b : blocks) {
    if (b->cols() != cols) {
      throw ShapeError("vstack: column counts " + std::to_string(cols) + " and " +
                       std::to_string(b->cols()));
    }
    rows += b->rows();
    nnz += b->nnz();
  }
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  offsets.reserve(rows + 1);
  indices.reserve(nnz);
  values.reserve(nnz);
  offsets.push_back(0);
  for (const auto* b : blocks) {
    indices.insert(indices.end(), b->indices_.begin(), b->indices_.end());
    values.insert(values.end(), b->values_.begin(), b->values_.end());
    const std::uint32_t base = offsets.back();
    for (std::size_t r = 1; r <= b->rows(); ++r) offsets.push_back(base + b->offsets_[r]);
  }
  return SparseMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
}

Matrix SparseMatrix::multiply(const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != cols_) {
    throw ShapeError("spmm: sparse (" + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     ") times dense " + shape_string(x));
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows_), x.cols());
  for (std::size_t r = 0; r < rows_; ++r) {
    auto row = out.row(static_cast<Eigen::Index>(r));
    for (std::uint32_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      row.noalias() += values_[k] * x.row(indices_[k]);
    }
  }
  return out;
}

Matrix SparseMatrix::multiply_transposed(const Matrix& x) const {
  if (static_cast<std::size_t>(x.rows()) != rows_) {
    throw ShapeError("spmm^T: sparse (" + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     ")^T times dense " + shape_string(x));
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(cols_), x.cols());
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto src = x.row(static_cast<Eigen::Index>(r));
    for (std::uint32_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      out.row(indices_[k]).noalias() += values_[k] * src;
    }
  }
  return out;
}

Matrix SparseMatrix::to_dense() const {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::uint32_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      out(static_cast<Eigen::Index>(r), indices_[k]) = values_[k];
    }
  }
  return out;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::uint32_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      t.push_back({indices_[k], static_cast<std::uint32_t>(r), values_[k]});
    }
  }
  return from_triplets(cols_, rows_, std::move(t));
}

}  // namespace segnn
