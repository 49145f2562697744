#include "snbd/exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "snbd/errors.hpp"

namespace snbd {

ComplexMatrix initial_product_density(const SystemSpec& spec) {
  validate(spec);
  spec.full_dim();
  ComplexMatrix rho = spec.initial.front();
  for (std::size_t k = 1; k < spec.size(); ++k) rho = kron(rho, spec.initial[k]);
  return rho;
}

ComplexVector initial_product_vector(const SystemSpec& spec) {
  validate(spec);
  spec.full_dim();
  ComplexVector psi{1.0};
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const auto eig = herm_eig(spec.initial[k]);
    if (std::abs(eig.values.back() - 1.0) > 1e-10)
      throw ContractError("particle " + std::to_string(k) +
                          ": initial density is not a pure state");
    psi = kron(psi, eig.column(eig.values.size() - 1));
  }
  return psi;
}

namespace {

struct Propagator {
  HermitianEigen eig;

  explicit Propagator(const SystemSpec& spec) : eig(herm_eig(assemble_full_hamiltonian(spec))) {}

  ComplexMatrix unitary(double t) const {
    const std::size_t n = eig.values.size();
    ComplexMatrix u(n);
    // U = V diag(exp(-i E t)) V^dag
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        cplx acc = 0.0;
        for (std::size_t q = 0; q < n; ++q)
          acc += eig.vectors(i, q) * std::polar(1.0, -eig.values[q] * t) * std::conj(eig.vectors(j, q));
        u(i, j) = acc;
      }
    return u;
  }
};

}  // namespace

std::vector<FullState> propagate_exact(const SystemSpec& spec, std::span<const double> t_grid) {
  const ComplexMatrix rho0 = initial_product_density(spec);
  const Propagator prop(spec);
  std::vector<FullState> states;
  states.reserve(t_grid.size());
  for (double t : t_grid) {
    const ComplexMatrix u = prop.unitary(t);
    states.push_back({t, hermitian_part(u * rho0 * u.adjoint())});
  }
  return states;
}

std::vector<ComplexVector> propagate_exact_pure(const SystemSpec& spec, std::span<const cplx> psi0,
                                                std::span<const double> t_grid) {
  validate(spec);
  if (psi0.size() != spec.full_dim()) throw ShapeError("propagate_exact_pure: state dimension mismatch");
  const Propagator prop(spec);
  const std::size_t n = psi0.size();
  // Coefficients in the energy eigenbasis.
  ComplexVector coeff(n);
  for (std::size_t q = 0; q < n; ++q) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::conj(prop.eig.vectors(i, q)) * psi0[i];
    coeff[q] = acc;
  }
  std::vector<ComplexVector> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    ComplexVector psi(n);
    for (std::size_t q = 0; q < n; ++q) {
      const cplx c = coeff[q] * std::polar(1.0, -prop.eig.values[q] * t);
      for (std::size_t i = 0; i < n; ++i) psi[i] += prop.eig.vectors(i, q) * c;
    }
    out.push_back(std::move(psi));
  }
  return out;
}

namespace {

int permutation_sign(const std::vector<std::size_t>& perm) {
  int sign = 1;
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (seen[i]) continue;
    std::size_t len = 0;
    for (std::size_t j = i; !seen[j]; j = perm[j]) {
      seen[j] = true;
      ++len;
    }
    if (len % 2 == 0) sign = -sign;
  }
  return sign;
}

ComplexVector project_group(std::span<const cplx> v, std::span<const std::size_t> dims,
                            const std::vector<std::size_t>& members, bool antisymmetric) {
  const std::size_t n = dims.size();
  std::vector<std::size_t> strides(n, 1);
  for (std::size_t k = n - 1; k-- > 0;) strides[k] = strides[k + 1] * dims[k + 1];

  std::vector<std::size_t> perm(members.size());
  std::iota(perm.begin(), perm.end(), 0);
  double permutations = 0.0;
  ComplexVector out(v.size());
  std::vector<std::size_t> digits(n);
  do {
    const double sign = antisymmetric ? permutation_sign(perm) : 1.0;
    for (std::size_t idx = 0; idx < v.size(); ++idx) {
      if (v[idx] == cplx(0.0)) continue;
      for (std::size_t k = 0; k < n; ++k) digits[k] = (idx / strides[k]) % dims[k];
      std::size_t target = idx;
      for (std::size_t g = 0; g < members.size(); ++g) {
        const std::size_t from = members[g];
        const std::size_t to = members[perm[g]];
        target -= digits[to] * strides[to];
        target += digits[from] * strides[to];
      }
      out[target] += sign * v[idx];
    }
    permutations += 1.0;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (auto& z : out) z /= permutations;
  return out;
}

}  // namespace

ComplexVector symmetrize_vector(std::span<const cplx> v, const SystemSpec& spec) {
  if (v.size() != spec.full_dim()) throw ShapeError("symmetrize_vector: dimension mismatch");
  const auto dims = spec.dims();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < spec.size(); ++k)
    if (spec.particles[k].statistics != Statistics::distinguishable)
      groups[spec.particles[k].group].push_back(k);

  ComplexVector out(v.begin(), v.end());
  const double input_norm = norm(v);
  for (const auto& [id, members] : groups) {
    if (members.size() < 2) continue;
    if (members.size() > kMaxGroupSize)
      throw ContractError("symmetrize_vector: group '" + id + "' exceeds " +
                          std::to_string(kMaxGroupSize) + " particles");
    for (std::size_t m : members)
      if (dims[m] != dims[members.front()])
        throw ContractError("symmetrize_vector: group '" + id + "' has unequal dimensions");
    const bool fermions = spec.particles[members.front()].statistics == Statistics::fermion;
    out = project_group(out, dims, members, fermions);
  }
  const double projected = norm(out);
  if (!(projected > 1e-12 * std::max(input_norm, 1e-300)))
    throw NullProjectionError("symmetry projection annihilates the state");
  for (auto& z : out) z /= projected;
  return out;
}

std::vector<double> exact_observable(std::span<const FullState> states, const ObservableSpec& obs) {
  const ComplexMatrix a = observable_operator(obs);
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) {
    if (s.rho.dim() != a.dim()) throw ShapeError("exact_observable: dimension mismatch");
    out.push_back((a * s.rho).trace().real());
  }
  return out;
}

}  // namespace snbd
