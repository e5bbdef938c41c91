#include "confflow/banded.hpp"

#include <algorithm>
#include <cmath>

namespace confflow {

// dgbtrf-style banded Gaussian elimination with partial pivoting.
void BandedMatrix::factor() {
  piv_.assign(n_, 0);
  auto entry = [&](int i, int j) -> double& {
    return a_[size_t(j) * ld_ + (kl_ + ku_ + i - j)];
  };

  for (int j = 0; j < n_; ++j) {
    int ilast = std::min(j + kl_, n_ - 1);
    int p = j;
    double best = std::abs(entry(j, j));
    for (int i = j + 1; i <= ilast; ++i) {
      double v = std::abs(entry(i, j));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    piv_[j] = p;
    if (best == 0.0) throw numerical_error("banded factorization: singular pivot");

    int jlast = std::min(j + kl_ + ku_, n_ - 1);
    if (p != j) {
      for (int k = j; k <= jlast; ++k) std::swap(entry(j, k), entry(p, k));
    }
    double d = entry(j, j);
    for (int i = j + 1; i <= ilast; ++i) {
      double l = entry(i, j) / d;
      entry(i, j) = l;
      if (l != 0.0)
        for (int k = j + 1; k <= jlast; ++k) entry(i, k) -= l * entry(j, k);
    }
  }
  factored_ = true;
}

Field BandedMatrix::solve(Field rhs) const {
  if (!factored_) throw numerical_error("banded solve before factor");
  check_same_size(rhs, size_t(n_), "banded solve");
  auto entry = [&](int i, int j) -> double {
    return a_[size_t(j) * ld_ + (kl_ + ku_ + i - j)];
  };

  for (int j = 0; j < n_; ++j) {
    if (piv_[j] != j) std::swap(rhs[j], rhs[piv_[j]]);
    int ilast = std::min(j + kl_, n_ - 1);
    for (int i = j + 1; i <= ilast; ++i) rhs[i] -= entry(i, j) * rhs[j];
  }
  for (int i = n_ - 1; i >= 0; --i) {
    int jlast = std::min(i + kl_ + ku_, n_ - 1);
    double s = rhs[i];
    for (int j = i + 1; j <= jlast; ++j) s -= entry(i, j) * rhs[j];
    rhs[i] = s / entry(i, i);
  }
  return rhs;
}

}  // namespace confflow
