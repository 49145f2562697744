#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "snbd/operator_algebra.hpp"

namespace snbd {

enum class Statistics { distinguishable, boson, fermion };

struct ParticleSpec {
  std::size_t dim = 0;
  ComplexMatrix h;  // 1-body Hamiltonian (hbar = 1)
  Statistics statistics = Statistics::distinguishable;
  std::string group;  // identical-particle group id; empty when distinguishable

  friend bool operator==(const ParticleSpec&, const ParticleSpec&) = default;
};

// omega * prod_k ops[k], applied to every particle pair k < l.
struct InteractionTerm {
  double omega = 0.0;
  std::vector<ComplexMatrix> ops;  // one Hermitian operator per particle

  friend bool operator==(const InteractionTerm&, const InteractionTerm&) = default;
};

// One term of a decomposed two-body operator: omega * (op (x) op).
struct PairTerm {
  double omega = 0.0;
  ComplexMatrix op;
};

struct SystemSpec {
  std::vector<ParticleSpec> particles;
  std::vector<InteractionTerm> terms;
  std::vector<ComplexMatrix> initial;  // product initial state, one density per particle

  std::size_t size() const noexcept { return particles.size(); }
  std::vector<std::size_t> dims() const;
  // Product of particle dimensions; throws DimensionLimitError past the limit.
  std::size_t full_dim() const;
  double max_abs_omega() const;

  friend bool operator==(const SystemSpec&, const SystemSpec&) = default;
};

// Throws ContractError (or ConfigError-free ContractError subclasses) on the
// first violated invariant, naming the offending particle or term.
void validate(const SystemSpec& spec);

// Builds a system whose pairs all interact through the same decomposed terms;
// zero-weight terms are dropped.
SystemSpec make_system(std::vector<ParticleSpec> particles, std::span<const PairTerm> pair_terms,
                       std::vector<ComplexMatrix> initial);

// Hilbert-Schmidt orthonormal Hermitian basis: I/sqrt(m) followed by the
// generalized Gell-Mann matrices (symmetric, antisymmetric, diagonal).
std::vector<ComplexMatrix> build_hermitian_basis(std::size_t m);

// Two-particle exchange operator on C^m (x) C^m.
ComplexMatrix swap_operator(std::size_t m);

inline constexpr double kTermDropTolerance = 1e-12;

std::vector<PairTerm> decompose_pair_interaction(const ComplexMatrix& v, std::size_t m);
ComplexMatrix reconstruct_pair_interaction(std::span<const PairTerm> terms, std::size_t m);

ComplexMatrix assemble_full_hamiltonian(const SystemSpec& spec);

// I (x) ... (x) op (x) ... (x) I with op in slot k.
ComplexMatrix embed_operator(const ComplexMatrix& op, std::size_t k,
                             std::span<const std::size_t> dims);

}  // namespace snbd
