#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tfdgqme {

using cplx = std::complex<double>;
using Eigen::Index;

inline constexpr cplx kI{0.0, 1.0};

/// Electronic basis states. Donor is index 0 so that sigma_z |D> = +|D>.
enum Electronic : int { kDonor = 0, kAcceptor = 1 };

/// Liouville-space index of |j><k| in (DD, DA, AD, AA) ordering.
constexpr int liouville_index(int j, int k) { return 2 * j + k; }

inline constexpr int kDD = liouville_index(kDonor, kDonor);
inline constexpr int kDA = liouville_index(kDonor, kAcceptor);
inline constexpr int kAD = liouville_index(kAcceptor, kDonor);
inline constexpr int kAA = liouville_index(kAcceptor, kAcceptor);

inline const char* liouville_label(int idx) {
  static const char* labels[] = {"DD", "DA", "AD", "AA"};
  return labels[idx];
}

/// Raised for malformed input: bad parameters, configs, files or dimensions.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical stage fails (non-finite values, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace tfdgqme
