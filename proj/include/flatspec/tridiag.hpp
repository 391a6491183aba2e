#pragma once

#include <stdexcept>
#include <string>

#include "flatspec/linalg.hpp"

namespace flatspec {

// Symmetric tridiagonal matrix: diag has length m, offdiag length m - 1.
struct SymTridiag {
  Vec diag;
  Vec offdiag;

  std::size_t size() const { return diag.size(); }
  Mat dense() const;
};

struct TridiagEigen {
  Vec eigenvalues;        // ascending
  Vec first_components;   // first entry of each normalized eigenvector
  Mat vectors;            // column i is eigenvector i; empty unless requested
};

class TridiagConvergenceError : public std::runtime_error {
 public:
  TridiagConvergenceError(std::size_t index, std::size_t iterations)
      : std::runtime_error("sym_tridiag_eigen: eigenvalue " + std::to_string(index) +
                           " did not converge after " + std::to_string(iterations) +
                           " implicit QL iterations"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Implicit-shift QL. Only the first row of the eigenvector matrix is
// accumulated unless want_vectors is set, which makes the cost O(m^2).
TridiagEigen sym_tridiag_eigen(const SymTridiag& t, bool want_vectors = false);

}  // namespace flatspec
