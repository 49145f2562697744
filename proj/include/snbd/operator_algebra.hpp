#pragma once

// Dense complex linear algebra shared by the whole engine: a row-major square
// matrix type, Kronecker products, partial traces, Hermitian eigensolver,
// matrix exponential and the Hilbert-Schmidt inner product.

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace snbd {

using cplx = std::complex<double>;
using ComplexVector = std::vector<cplx>;

inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr std::size_t kDefaultDimensionLimit = 4096;

// Largest full-space dimension any routine will build. Reads SNBD_MAX_DIM once.
std::size_t dimension_limit();

class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  explicit ComplexMatrix(std::size_t dim);
  ComplexMatrix(std::size_t dim, std::vector<cplx> row_major);
  ComplexMatrix(std::initializer_list<std::initializer_list<cplx>> rows);

  static ComplexMatrix identity(std::size_t dim);
  static ComplexMatrix zero(std::size_t dim) { return ComplexMatrix(dim); }
  static ComplexMatrix diagonal(std::span<const cplx> diag);
  static ComplexMatrix projector(std::span<const cplx> v);  // |v><v|

  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return dim_ == 0; }

  cplx& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  ComplexMatrix adjoint() const;
  cplx trace() const;
  double hs_norm() const;
  // ||M - M^dag||_HS
  double hermiticity_defect() const;
  bool is_hermitian(double rel_tol = kHermitianTolerance) const;
  bool all_finite() const;

  ComplexMatrix& operator+=(const ComplexMatrix& o);
  ComplexMatrix& operator-=(const ComplexMatrix& o);
  ComplexMatrix& operator*=(cplx s);

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(ComplexMatrix a, cplx s) { return a *= s; }
  friend ComplexMatrix operator*(cplx s, ComplexMatrix a) { return a *= s; }
  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);
  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<cplx> data_;
};

ComplexVector operator*(const ComplexMatrix& m, std::span<const cplx> v);

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexVector kron(std::span<const cplx> a, std::span<const cplx> b);

// Reduced operator on particle `keep`; dims lists every factor's dimension.
ComplexMatrix partial_trace(const ComplexMatrix& m, std::span<const std::size_t> dims,
                            std::size_t keep);

struct HermitianEigen {
  std::vector<double> values;  // ascending
  ComplexMatrix vectors;       // column j belongs to values[j]
  ComplexVector column(std::size_t j) const;
};

// Eigenvectors are phase-fixed: the largest-magnitude component of each is real
// and positive.
HermitianEigen herm_eig(const ComplexMatrix& m);
std::vector<double> herm_eigvals(const ComplexMatrix& m);

// Scaling-and-squaring Taylor exponential.
ComplexMatrix matrix_exp(const ComplexMatrix& m);
inline constexpr double kMatrixExpNormLimit = 1e3;

// Tr{a^dag b}
cplx hs_inner(const ComplexMatrix& a, const ComplexMatrix& b);

ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix hermitian_part(const ComplexMatrix& m);
double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b);
// (1/2) sum |eig(a - b)|
double trace_distance(const ComplexMatrix& a, const ComplexMatrix& b);

cplx inner(std::span<const cplx> a, std::span<const cplx> b);  // <a|b>
double norm(std::span<const cplx> v);

// Pauli matrices, handy for tests, fixtures and the CLI shorthand names.
namespace pauli {
ComplexMatrix x();
ComplexMatrix y();
ComplexMatrix z();
}  // namespace pauli

}  // namespace snbd
