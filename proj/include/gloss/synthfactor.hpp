#pragma once

// Factor model of paired toxic / non-toxic representations:
//   x⁺ = a⁺μ + α·Bf + B̃f̃ + u⁺,   x⁻ = a⁻μ + B̃f̃ + u⁻
// with B, B̃ and μ mutually orthogonal, shared context f̃ within a pair,
// a± ~ N(1, 0.1), f, f̃ ~ N(0, I) and u± ~ N(0, σ_u² I).

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gloss/tensor.hpp"

namespace gloss {

struct FactorSpec {
  std::size_t dim = 64;
  std::size_t toxic_rank = 2;
  std::size_t context_rank = 4;
  std::size_t samples = 256;
  double alpha_tox = 5.0;
  double sigma_u = 0.1;
  bool shared_scale = false;  // draw a⁻ = a⁺
  std::uint64_t seed = 0;

  void validate() const;
};

struct FactorBases {
  Tensor2D toxic;    // k x D, orthonormal rows
  Tensor2D context;  // k̃ x D
  Vector mean;       // unit norm
};

/// Seeded Gaussian rows orthonormalized in the order toxic, context, mean.
FactorBases make_bases(const FactorSpec& spec);
/// Throws InvalidArgument reporting the largest orthonormality deviation above 1e-8.
void validate_bases(const FactorBases& bases);

struct FactorSample {
  Tensor2D toxic;            // X⁺, n x D
  Tensor2D nontoxic;         // X⁻
  Tensor2D toxic_basis;      // B as rows
  Tensor2D factors;          // f, n x k
  Tensor2D context_factors;  // f̃, n x k̃
};

FactorSample generate_pairs(const FactorSpec& spec);
FactorSample generate_pairs(const FactorSpec& spec, const FactorBases& bases);

/// max over (a, b) of |mean_i f_ia·f̃_ib|.
double cross_factor_correlation(const FactorSample& s);

struct RecoveryRow {
  double alpha_tox = 0.0;
  double sigma_u = 0.0;
  std::uint64_t seed = 0;
  double angle_deg = 0.0;
};

/// Angle between span(B) and the top toxic_rank right singular vectors of
/// mean_center(X⁺ − X⁻) computed with k_extract components. Seed i of each
/// sweep point is spec.seed + i; rows come out in (alpha, seed) order.
double recovery_angle(const FactorSpec& spec, std::size_t k_extract);
std::vector<RecoveryRow> recovery_experiment(const FactorSpec& spec, std::size_t k_extract,
                                             const std::vector<double>& alphas, std::size_t n_seeds,
                                             std::size_t threads = 1);

}  // namespace gloss
