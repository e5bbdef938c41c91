#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace confflow {

// Error families; the CLI maps them to exit codes (config 2, numerical 3,
// non-convergence 4).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct nonconvergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scalar samples at every grid node.
using Field = std::vector<double>;

// Scalar data on the two boundary points x=0 and x=L.
struct BoundaryPair {
  double left = 0.0;
  double right = 0.0;
};

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Compensated summation; keeps quadrature defects at the few-ulp level so the
// exact discrete identities can be tested against eps-sized tolerances.
class KahanSum {
 public:
  void add(double v) {
    double y = v - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

// splitmix64; used for seeded perturbations and randomized tests so that runs
// are byte-reproducible across platforms.
struct SplitMix64 {
  uint64_t state;
  explicit SplitMix64(uint64_t seed = 0) : state(seed) {}
  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // uniform in [0,1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

inline double sup_norm(const Field& u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

inline double min_of(const Field& u) {
  double m = kInf;
  for (double v : u) m = std::min(m, v);
  return m;
}

inline double max_of(const Field& u) {
  double m = -kInf;
  for (double v : u) m = std::max(m, v);
  return m;
}

inline bool all_finite(const Field& u) {
  for (double v : u)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool all_positive(const Field& u) {
  for (double v : u)
    if (!(v > 0.0)) return false;
  return true;
}

inline bool all_negative(const Field& u) {
  for (double v : u)
    if (!(v < 0.0)) return false;
  return true;
}

inline void check_same_size(const Field& u, size_t n, const char* what) {
  if (u.size() != n)
    throw numerical_error(std::string(what) + ": field size " +
                          std::to_string(u.size()) + " does not match grid " +
                          std::to_string(n));
}

}  // namespace confflow
