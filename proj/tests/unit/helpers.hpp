#pragma once

#include <complex>
#include <random>

#include "snbd/operator_algebra.hpp"
#include "snbd/system_model.hpp"

namespace testutil {

using snbd::ComplexMatrix;
using snbd::cplx;

inline ComplexMatrix random_matrix(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> g;
  ComplexMatrix m(n);
  for (auto& z : m.data()) z = {g(gen), g(gen)};
  return m;
}

inline ComplexMatrix random_hermitian(std::size_t n, std::mt19937_64& gen) {
  return snbd::hermitian_part(random_matrix(n, gen));
}

inline ComplexMatrix random_density(std::size_t n, std::mt19937_64& gen) {
  const ComplexMatrix a = random_matrix(n, gen);
  ComplexMatrix rho = snbd::hermitian_part(a * a.adjoint());
  rho *= 1.0 / rho.trace().real();
  return rho;
}

// v -> (v + S v S) / 2, the swap-symmetric part.
inline ComplexMatrix swap_symmetrize(const ComplexMatrix& v, std::size_t m) {
  const ComplexMatrix s = snbd::swap_operator(m);
  ComplexMatrix out = v + s * v * s;
  out *= 0.5;
  return out;
}

inline snbd::ParticleSpec spin(double omega0) {
  snbd::ParticleSpec p;
  p.dim = 2;
  p.h = snbd::pauli::z() * cplx(omega0 / 2.0);
  return p;
}

inline ComplexMatrix heisenberg(double j) {
  using namespace snbd;
  ComplexMatrix v = kron(pauli::x(), pauli::x()) + kron(pauli::y(), pauli::y()) + kron(pauli::z(), pauli::z());
  return v * cplx(j);
}

inline snbd::ComplexVector up() { return {1.0, 0.0}; }
inline snbd::ComplexVector down() { return {0.0, 1.0}; }

// Two Zeeman-split spins with Heisenberg coupling J from |up, down>.
inline snbd::SystemSpec benchmark(double omega0 = 1.0, double j = 0.2) {
  using namespace snbd;
  const auto terms = decompose_pair_interaction(heisenberg(j), 2);
  return make_system({spin(omega0), spin(omega0)}, terms,
                     {ComplexMatrix::projector(up()), ComplexMatrix::projector(down())});
}

}  // namespace testutil
