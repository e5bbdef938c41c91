#pragma once

#include <vector>

#include "confflow/common.hpp"

namespace confflow {

// Square banded matrix with kl sub- and ku super-diagonals, LAPACK band
// storage with kl extra fill rows so the factorization can pivot in place.
// Every linear system in this project is bandwidth 2 (tridiagonal interior
// stencil plus three-point one-sided boundary rows).
class BandedMatrix {
 public:
  BandedMatrix(int n, int kl, int ku)
      : n_(n), kl_(kl), ku_(ku), ld_(2 * kl + ku + 1), a_(size_t(ld_) * n, 0.0) {}

  int size() const { return n_; }
  int kl() const { return kl_; }
  int ku() const { return ku_; }

  double& at(int i, int j) {
    check_index(i, j);
    return a_[size_t(j) * ld_ + (kl_ + ku_ + i - j)];
  }
  double get(int i, int j) const {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) return 0.0;
    if (j - i > ku_ + kl_ || i - j > kl_) return 0.0;
    return a_[size_t(j) * ld_ + (kl_ + ku_ + i - j)];
  }

  // In-place LU with partial pivoting (row swaps stay inside the band).
  // Throws numerical_error on an exactly singular pivot.
  void factor();

  // Solve with the factored matrix.
  Field solve(Field rhs) const;

  bool factored() const { return factored_; }

 private:
  void check_index(int i, int j) const {
    if (i < 0 || j < 0 || i >= n_ || j >= n_ || j - i > ku_ + kl_ || i - j > kl_)
      throw numerical_error("banded index out of band");
  }

  int n_, kl_, ku_, ld_;
  std::vector<double> a_;
  std::vector<int> piv_;
  bool factored_ = false;
};

}  // namespace confflow
