#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <vector>

namespace stjm {

struct SparseEntry {
  int row;
  int col;  // row <= col
  double value;
};

// Symmetric sparse matrix stored as the upper triangle in triplet form.
// Houses all structure and precision matrices.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;
  explicit SparseSymmetric(int dim) : dim_(dim) {
    if (dim <= 0) throw std::invalid_argument("SparseSymmetric: dim must be positive");
  }

  int dim() const { return dim_; }
  const std::vector<SparseEntry>& entries() const { return entries_; }

  // Accumulates value at (i, j); folded into the upper triangle.
  void add(int i, int j, double value) {
    if (i < 0 || j < 0 || i >= dim_ || j >= dim_)
      throw std::out_of_range("SparseSymmetric::add: index out of range");
    if (i > j) std::swap(i, j);
    entries_.push_back({i, j, value});
  }

  // Full symmetric Eigen matrix (both triangles), duplicates summed.
  Eigen::SparseMatrix<double> to_eigen() const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(entries_.size() * 2);
    for (const auto& e : entries_) {
      trips.emplace_back(e.row, e.col, e.value);
      if (e.row != e.col) trips.emplace_back(e.col, e.row, e.value);
    }
    Eigen::SparseMatrix<double> m(dim_, dim_);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
  }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(to_eigen()); }

  static SparseSymmetric from_eigen_upper(const Eigen::SparseMatrix<double>& m) {
    if (m.rows() != m.cols())
      throw std::invalid_argument("SparseSymmetric: matrix must be square");
    SparseSymmetric out(static_cast<int>(m.rows()));
    for (int k = 0; k < m.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
        if (it.row() <= it.col()) out.add(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    return out;
  }

 private:
  int dim_ = 0;
  std::vector<SparseEntry> entries_;
};

}  // namespace stjm
