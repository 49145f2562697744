#include "snbd/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "snbd/errors.hpp"

namespace snbd {

namespace {

std::string particle_label(std::size_t k) { return "particle " + std::to_string(k); }

}  // namespace

std::vector<std::size_t> SystemSpec::dims() const {
  std::vector<std::size_t> d;
  d.reserve(particles.size());
  for (const auto& p : particles) d.push_back(p.dim);
  return d;
}

std::size_t SystemSpec::full_dim() const {
  std::size_t total = 1;
  for (const auto& p : particles) {
    if (p.dim == 0 || total > dimension_limit() / p.dim) {
      throw DimensionLimitError("full N-body dimension exceeds limit " +
                                std::to_string(dimension_limit()) +
                                " (set SNBD_MAX_DIM to raise it)");
    }
    total *= p.dim;
  }
  return total;
}

double SystemSpec::max_abs_omega() const {
  double best = 0.0;
  for (const auto& t : terms) best = std::max(best, std::abs(t.omega));
  return best;
}

void validate(const SystemSpec& spec) {
  const std::size_t n = spec.particles.size();
  if (n == 0) throw ContractError("system has no particles");

  for (std::size_t k = 0; k < n; ++k) {
    const auto& p = spec.particles[k];
    if (p.dim == 0) throw ContractError(particle_label(k) + ": dimension must be positive");
    if (p.h.dim() != p.dim) {
      throw ShapeError(particle_label(k) + ": Hamiltonian dimension " + std::to_string(p.h.dim()) +
                       " does not match particle dimension " + std::to_string(p.dim));
    }
    if (!p.h.all_finite() || !p.h.is_hermitian())
      throw ContractError(particle_label(k) + ": Hamiltonian is not Hermitian");
    if (p.statistics != Statistics::distinguishable && p.group.empty())
      throw ContractError(particle_label(k) + ": identical particle without a group id");
    for (std::size_t j = 0; j < k; ++j) {
      const auto& q = spec.particles[j];
      if (p.group.empty() || q.group != p.group) continue;
      if (q.statistics != p.statistics)
        throw ContractError(particle_label(k) + ": group '" + p.group + "' mixes statistics");
      if (q.dim != p.dim || max_abs_diff(q.h, p.h) > kHermitianTolerance * (1.0 + p.h.hs_norm()))
        throw ContractError(particle_label(k) + ": group '" + p.group +
                            "' members must share dimension and Hamiltonian");
    }
  }

  for (std::size_t s = 0; s < spec.terms.size(); ++s) {
    const auto& term = spec.terms[s];
    const std::string label = "interaction term " + std::to_string(s);
    if (!std::isfinite(term.omega) || term.omega == 0.0)
      throw ContractError(label + ": omega must be finite and nonzero");
    if (term.ops.size() != n)
      throw ShapeError(label + ": expected one operator per particle");
    for (std::size_t k = 0; k < n; ++k) {
      if (term.ops[k].dim() != spec.particles[k].dim)
        throw ShapeError(label + ": operator dimension mismatch for " + particle_label(k));
      if (!term.ops[k].all_finite() || !term.ops[k].is_hermitian())
        throw ContractError(label + ": operator for " + particle_label(k) + " is not Hermitian");
    }
  }

  if (spec.initial.size() != n)
    throw ShapeError("initial state must list one density per particle");
  for (std::size_t k = 0; k < n; ++k) {
    const auto& rho = spec.initial[k];
    if (rho.dim() != spec.particles[k].dim)
      throw ShapeError(particle_label(k) + ": initial density dimension mismatch");
    if (!rho.all_finite() || !rho.is_hermitian())
      throw ContractError(particle_label(k) + ": initial density is not Hermitian");
    const cplx tr = rho.trace();
    if (std::abs(tr - 1.0) > 1e-12)
      throw ContractError(particle_label(k) + ": initial density has trace " +
                          std::to_string(tr.real()) + ", expected 1");
    const auto evals = herm_eigvals(rho);
    if (evals.front() < -1e-12)
      throw ContractError(particle_label(k) + ": initial density has negative eigenvalue " +
                          std::to_string(evals.front()));
  }
}

SystemSpec make_system(std::vector<ParticleSpec> particles, std::span<const PairTerm> pair_terms,
                       std::vector<ComplexMatrix> initial) {
  SystemSpec spec;
  spec.particles = std::move(particles);
  spec.initial = std::move(initial);
  for (const auto& pt : pair_terms) {
    if (pt.omega == 0.0) continue;
    InteractionTerm term;
    term.omega = pt.omega;
    term.ops.assign(spec.particles.size(), pt.op);
    spec.terms.push_back(std::move(term));
  }
  validate(spec);
  return spec;
}

std::vector<ComplexMatrix> build_hermitian_basis(std::size_t m) {
  if (m == 0) throw ContractError("build_hermitian_basis: dimension must be positive");
  std::vector<ComplexMatrix> basis;
  basis.reserve(m * m);
  basis.push_back(ComplexMatrix::identity(m) * cplx(1.0 / std::sqrt(static_cast<double>(m))));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = j + 1; k < m; ++k) {
      ComplexMatrix sym(m), anti(m);
      sym(j, k) = sym(k, j) = inv_sqrt2;
      anti(j, k) = cplx(0.0, -inv_sqrt2);
      anti(k, j) = cplx(0.0, inv_sqrt2);
      basis.push_back(std::move(sym));
      basis.push_back(std::move(anti));
    }
  for (std::size_t l = 1; l < m; ++l) {
    ComplexMatrix diag(m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(l * (l + 1)));
    for (std::size_t j = 0; j < l; ++j) diag(j, j) = scale;
    diag(l, l) = -static_cast<double>(l) * scale;
    basis.push_back(std::move(diag));
  }
  return basis;
}

ComplexMatrix swap_operator(std::size_t m) {
  ComplexMatrix s(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) s(i * m + j, j * m + i) = 1.0;
  return s;
}

std::vector<PairTerm> decompose_pair_interaction(const ComplexMatrix& v, std::size_t m) {
  if (m == 0 || v.dim() != m * m)
    throw ShapeError("decompose_pair_interaction: expected a " + std::to_string(m * m) +
                     "-dimensional two-particle operator");
  if (!v.all_finite() || !v.is_hermitian())
    throw ContractError("decompose_pair_interaction: interaction is not Hermitian");
  const ComplexMatrix s = swap_operator(m);
  const double scale = std::max(v.hs_norm(), 1.0);
  if ((s * v * s - v).hs_norm() > kHermitianTolerance * scale)
    throw UnsupportedInteractionError(
        "pair interaction is not symmetric under particle exchange; shared-operator "
        "decomposition requires S V S = V");

  const auto basis = build_hermitian_basis(m);
  const std::size_t nb = basis.size();
  Eigen::MatrixXd coeff(nb, nb);
  for (std::size_t a = 0; a < nb; ++a)
    for (std::size_t b = a; b < nb; ++b) {
      const double c = hs_inner(kron(basis[a], basis[b]), v).real();
      coeff(a, b) = c;
      coeff(b, a) = c;
    }
  coeff = 0.5 * (coeff + coeff.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(coeff);
  if (solver.info() != Eigen::Success)
    throw RangeError("decompose_pair_interaction: eigensolver did not converge");
  const auto& weights = solver.eigenvalues();
  const double max_weight = weights.cwiseAbs().maxCoeff();

  std::vector<PairTerm> terms;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    if (std::abs(weights(j)) <= kTermDropTolerance * max_weight || max_weight == 0.0) continue;
    Eigen::VectorXd c = solver.eigenvectors().col(j);
    Eigen::Index pivot = 0;
    c.cwiseAbs().maxCoeff(&pivot);
    if (c(pivot) < 0.0) c = -c;
    ComplexMatrix op(m);
    for (std::size_t a = 0; a < nb; ++a) op += basis[a] * cplx(c(static_cast<Eigen::Index>(a)));
    terms.push_back({weights(j), hermitian_part(op)});
  }
  std::stable_sort(terms.begin(), terms.end(), [](const PairTerm& x, const PairTerm& y) {
    return std::abs(x.omega) > std::abs(y.omega);
  });
  return terms;
}

ComplexMatrix reconstruct_pair_interaction(std::span<const PairTerm> terms, std::size_t m) {
  ComplexMatrix v(m * m);
  for (const auto& t : terms) {
    if (t.op.dim() != m) throw ShapeError("reconstruct_pair_interaction: operator dimension mismatch");
    v += kron(t.op, t.op) * cplx(t.omega);
  }
  return v;
}

ComplexMatrix embed_operator(const ComplexMatrix& op, std::size_t k,
                             std::span<const std::size_t> dims) {
  if (k >= dims.size() || op.dim() != dims[k]) throw ShapeError("embed_operator: slot mismatch");
  ComplexMatrix result;
  for (std::size_t j = 0; j < dims.size(); ++j) {
    const ComplexMatrix factor = j == k ? op : ComplexMatrix::identity(dims[j]);
    result = result.empty() ? factor : kron(result, factor);
  }
  return result;
}

ComplexMatrix assemble_full_hamiltonian(const SystemSpec& spec) {
  const std::size_t dim = spec.full_dim();
  const auto dims = spec.dims();
  const std::size_t n = spec.size();
  ComplexMatrix h(dim);
  for (std::size_t k = 0; k < n; ++k) h += embed_operator(spec.particles[k].h, k, dims);
  for (const auto& term : spec.terms)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k + 1; l < n; ++l) {
        ComplexMatrix product;
        for (std::size_t j = 0; j < n; ++j) {
          const ComplexMatrix factor =
              (j == k || j == l) ? term.ops[j] : ComplexMatrix::identity(dims[j]);
          product = product.empty() ? factor : kron(product, factor);
        }
        h += product * cplx(term.omega);
      }
  return hermitian_part(h);
}

}  // namespace snbd
