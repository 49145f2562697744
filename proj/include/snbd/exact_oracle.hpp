#pragma once

// Exact Liouville-von Neumann propagation of the full N-body density at desk
// scale, used as ground truth for the stochastic engine.

#include <span>
#include <vector>

#include "snbd/ensemble.hpp"
#include "snbd/operator_algebra.hpp"
#include "snbd/system_model.hpp"

namespace snbd {

struct FullState {
  double t = 0.0;
  ComplexMatrix rho;
};

ComplexMatrix initial_product_density(const SystemSpec& spec);

// Product vector (x)_k |phi_k> when every initial density is rank one;
// throws ContractError for mixed initial states.
ComplexVector initial_product_vector(const SystemSpec& spec);

// rho(t) = U(t) rho(0) U(t)^dag with U(t) = exp(-i H t) built from the
// eigendecomposition of the full Hamiltonian.
std::vector<FullState> propagate_exact(const SystemSpec& spec, std::span<const double> t_grid);

// Pure-state variant: |psi(t)> = U(t)|psi(0)>.
std::vector<ComplexVector> propagate_exact_pure(const SystemSpec& spec, std::span<const cplx> psi0,
                                                std::span<const double> t_grid);

// Projects onto the symmetric (bosons) or antisymmetric (fermions) subspace of
// every identical-particle group, then normalizes.
ComplexVector symmetrize_vector(std::span<const cplx> v, const SystemSpec& spec);

inline constexpr std::size_t kMaxGroupSize = 6;

std::vector<double> exact_observable(std::span<const FullState> states, const ObservableSpec& obs);

}  // namespace snbd
