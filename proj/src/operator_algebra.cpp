#include "snbd/operator_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include <Eigen/Dense>

#include "snbd/errors.hpp"

namespace snbd {

namespace {

using EigenRowMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw ShapeError(std::string(op) + ": dimension mismatch (" + std::to_string(a.dim()) +
                     " vs " + std::to_string(b.dim()) + ")");
  }
}

double one_norm(const ComplexMatrix& m) {
  double best = 0.0;
  for (std::size_t j = 0; j < m.dim(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m.dim(); ++i) col += std::abs(m(i, j));
    best = std::max(best, col);
  }
  return best;
}

}  // namespace

std::size_t dimension_limit() {
  static const std::size_t limit = [] {
    if (const char* env = std::getenv("SNBD_MAX_DIM")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return kDefaultDimensionLimit;
  }();
  return limit;
}

ComplexMatrix::ComplexMatrix(std::size_t dim) : dim_(dim), data_(dim * dim) {}

ComplexMatrix::ComplexMatrix(std::size_t dim, std::vector<cplx> row_major)
    : dim_(dim), data_(std::move(row_major)) {
  if (data_.size() != dim * dim) {
    throw ShapeError("ComplexMatrix: expected " + std::to_string(dim * dim) + " entries, got " +
                     std::to_string(data_.size()));
  }
}

ComplexMatrix::ComplexMatrix(std::initializer_list<std::initializer_list<cplx>> rows)
    : dim_(rows.size()) {
  data_.reserve(dim_ * dim_);
  for (const auto& row : rows) {
    if (row.size() != dim_) throw ShapeError("ComplexMatrix: rows must form a square matrix");
    data_.insert(data_.end(), row.begin(), row.end());
  }
}

ComplexMatrix ComplexMatrix::identity(std::size_t dim) {
  ComplexMatrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::diagonal(std::span<const cplx> diag) {
  ComplexMatrix m(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

ComplexMatrix ComplexMatrix::projector(std::span<const cplx> v) {
  ComplexMatrix m(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = v[i] * std::conj(v[j]);
  return m;
}

ComplexMatrix ComplexMatrix::adjoint() const {
  ComplexMatrix r(dim_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j) r(j, i) = std::conj((*this)(i, j));
  return r;
}

cplx ComplexMatrix::trace() const {
  cplx t = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
  return t;
}

double ComplexMatrix::hs_norm() const {
  double s = 0.0;
  for (const auto& z : data_) s += std::norm(z);
  return std::sqrt(s);
}

double ComplexMatrix::hermiticity_defect() const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < dim_; ++j)
      s += std::norm((*this)(i, j) - std::conj((*this)(j, i)));
  return std::sqrt(s);
}

bool ComplexMatrix::is_hermitian(double rel_tol) const {
  const double scale = hs_norm();
  return hermiticity_defect() <= rel_tol * (scale > 0.0 ? scale : 1.0);
}

bool ComplexMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

ComplexMatrix& ComplexMatrix::operator+=(const ComplexMatrix& o) {
  require_same_dim(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

ComplexMatrix& ComplexMatrix::operator-=(const ComplexMatrix& o) {
  require_same_dim(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

ComplexMatrix& ComplexMatrix::operator*=(cplx s) {
  for (auto& z : data_) z *= s;
  return *this;
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_dim(a, b, "operator*");
  const std::size_t n = a.dim();
  ComplexMatrix r(n);
  if (n >= 32) {
    Eigen::Map<const EigenRowMatrix> ea(a.data().data(), n, n);
    Eigen::Map<const EigenRowMatrix> eb(b.data().data(), n, n);
    Eigen::Map<EigenRowMatrix> er(r.data().data(), n, n);
    er.noalias() = ea * eb;
    return r;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const cplx aik = a(i, k);
      for (std::size_t j = 0; j < n; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

ComplexVector operator*(const ComplexMatrix& m, std::span<const cplx> v) {
  if (v.size() != m.dim()) throw ShapeError("matrix-vector product: dimension mismatch");
  ComplexVector r(m.dim());
  for (std::size_t i = 0; i < m.dim(); ++i) {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < m.dim(); ++j) acc += m(i, j) * v[j];
    r[i] = acc;
  }
  return r;
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t da = a.dim(), db = b.dim();
  if (da == 0 || db == 0) throw ShapeError("kron: empty operand");
  if (da > dimension_limit() / db) {
    throw DimensionLimitError("kron: product dimension " + std::to_string(da) + "x" +
                              std::to_string(db) + " exceeds limit " +
                              std::to_string(dimension_limit()));
  }
  ComplexMatrix r(da * db);
  for (std::size_t i = 0; i < da; ++i)
    for (std::size_t j = 0; j < da; ++j) {
      const cplx aij = a(i, j);
      if (aij == cplx(0.0)) continue;
      for (std::size_t k = 0; k < db; ++k)
        for (std::size_t l = 0; l < db; ++l) r(i * db + k, j * db + l) = aij * b(k, l);
    }
  return r;
}

ComplexVector kron(std::span<const cplx> a, std::span<const cplx> b) {
  ComplexVector r(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k) r[i * b.size() + k] = a[i] * b[k];
  return r;
}

ComplexMatrix partial_trace(const ComplexMatrix& m, std::span<const std::size_t> dims,
                            std::size_t keep) {
  if (keep >= dims.size()) throw ShapeError("partial_trace: kept index out of range");
  std::size_t total = 1, left = 1, right = 1;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k] == 0) throw ShapeError("partial_trace: zero dimension");
    total *= dims[k];
    if (k < keep) left *= dims[k];
    if (k > keep) right *= dims[k];
  }
  if (total != m.dim()) {
    throw ShapeError("partial_trace: product of dims " + std::to_string(total) +
                     " does not match matrix dimension " + std::to_string(m.dim()));
  }
  const std::size_t d = dims[keep];
  ComplexMatrix r(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      cplx acc = 0.0;
      for (std::size_t l = 0; l < left; ++l)
        for (std::size_t q = 0; q < right; ++q)
          acc += m((l * d + i) * right + q, (l * d + j) * right + q);
      r(i, j) = acc;
    }
  return r;
}

ComplexVector HermitianEigen::column(std::size_t j) const {
  ComplexVector v(vectors.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = vectors(i, j);
  return v;
}

namespace {

Eigen::MatrixXcd checked_hermitian_copy(const ComplexMatrix& m) {
  if (m.empty()) throw ShapeError("herm_eig: empty matrix");
  if (!m.all_finite()) throw ContractError("herm_eig: non-finite entries");
  if (!m.is_hermitian()) {
    throw ContractError("herm_eig: input is not Hermitian (defect " +
                        std::to_string(m.hermiticity_defect()) + ")");
  }
  const auto n = static_cast<Eigen::Index>(m.dim());
  Eigen::Map<const EigenRowMatrix> em(m.data().data(), n, n);
  Eigen::MatrixXcd sym = 0.5 * (em + em.adjoint());
  return sym;
}

}  // namespace

HermitianEigen herm_eig(const ComplexMatrix& m) {
  const Eigen::MatrixXcd sym = checked_hermitian_copy(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(sym, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw RangeError("herm_eig: eigensolver did not converge");

  const std::size_t n = m.dim();
  HermitianEigen out;
  out.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  out.vectors = ComplexMatrix(n);
  const auto& vecs = solver.eigenvectors();
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t pivot = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::abs(vecs(i, j));
      if (a > best + 1e-12) {
        best = a;
        pivot = i;
      }
    }
    const cplx phase = std::conj(vecs(pivot, j)) / std::abs(vecs(pivot, j));
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = vecs(i, j) * phase;
    out.vectors(pivot, j) = std::abs(vecs(pivot, j));
  }
  return out;
}

std::vector<double> herm_eigvals(const ComplexMatrix& m) {
  if (m.dim() == 2) {
    // Closed form keeps the per-record positivity monitor cheap.
    if (!m.all_finite()) throw ContractError("herm_eigvals: non-finite entries");
    if (!m.is_hermitian()) throw ContractError("herm_eigvals: input is not Hermitian");
    const double a = m(0, 0).real(), d = m(1, 1).real();
    const cplx b = 0.5 * (m(0, 1) + std::conj(m(1, 0)));
    const double mean = 0.5 * (a + d);
    const double radius = std::hypot(0.5 * (a - d), std::abs(b));
    return {mean - radius, mean + radius};
  }
  const Eigen::MatrixXcd sym = checked_hermitian_copy(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw RangeError("herm_eigvals: eigensolver did not converge");
  return {solver.eigenvalues().data(), solver.eigenvalues().data() + m.dim()};
}

ComplexMatrix matrix_exp(const ComplexMatrix& m) {
  if (m.empty()) throw ShapeError("matrix_exp: empty matrix");
  if (!m.all_finite()) throw RangeError("matrix_exp: non-finite entries");
  const double norm1 = one_norm(m);
  if (norm1 > kMatrixExpNormLimit) {
    throw RangeError("matrix_exp: 1-norm " + std::to_string(norm1) + " above supported range " +
                     std::to_string(kMatrixExpNormLimit));
  }
  int squarings = 0;
  if (norm1 > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.25)));
  ComplexMatrix scaled = m * cplx(std::ldexp(1.0, -squarings));

  // Taylor series of the scaled matrix; ||scaled|| <= 1/4 so 18 terms reach
  // well below double precision.
  const std::size_t n = m.dim();
  ComplexMatrix result = ComplexMatrix::identity(n);
  ComplexMatrix term = ComplexMatrix::identity(n);
  for (int k = 1; k <= 30; ++k) {
    term = term * scaled;
    term *= cplx(1.0 / k);
    result += term;
    if (term.hs_norm() <= 1e-18 * result.hs_norm()) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

cplx hs_inner(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_dim(a, b, "hs_inner");
  cplx acc = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += std::conj(da[i]) * db[i];
  return acc;
}

ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a * b - b * a;
}

ComplexMatrix hermitian_part(const ComplexMatrix& m) {
  ComplexMatrix r(m.dim());
  for (std::size_t i = 0; i < m.dim(); ++i)
    for (std::size_t j = 0; j < m.dim(); ++j) r(i, j) = 0.5 * (m(i, j) + std::conj(m(j, i)));
  return r;
}

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_dim(a, b, "max_abs_diff");
  double best = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    best = std::max(best, std::abs(a.data()[i] - b.data()[i]));
  return best;
}

double trace_distance(const ComplexMatrix& a, const ComplexMatrix& b) {
  const auto evals = herm_eigvals(hermitian_part(a - b));
  double s = 0.0;
  for (double e : evals) s += std::abs(e);
  return 0.5 * s;
}

cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw ShapeError("inner: dimension mismatch");
  cplx acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

double norm(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

namespace pauli {
ComplexMatrix x() { return {{0.0, 1.0}, {1.0, 0.0}}; }
ComplexMatrix y() { return {{0.0, cplx(0.0, -1.0)}, {cplx(0.0, 1.0), 0.0}}; }
ComplexMatrix z() { return {{1.0, 0.0}, {0.0, -1.0}}; }
}  // namespace pauli

}  // namespace snbd
