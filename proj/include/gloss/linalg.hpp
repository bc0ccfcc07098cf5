#pragma once

// Dense linear algebra at desk scale: Jacobi eigensolver, Gram-route thin SVD,
// uncentered PCA, projectors and subspace comparison. All routines are pure and
// deterministic; singular vectors follow a fixed sign convention.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gloss/tensor.hpp"

namespace gloss::linalg {

/// Eigen-decomposition of a symmetric matrix. `vectors` holds one unit
/// eigenvector per row, ordered by descending eigenvalue.
struct SymmetricEigen {
  Vector values;
  Tensor2D vectors;
};

/// Cyclic Jacobi rotations until off-diagonal mass is at rounding level.
SymmetricEigen eigen_symmetric(const Tensor2D& s);

struct SvdResult {
  Vector singular_values;               // descending, >= 0
  Tensor2D right_vectors;               // one unit row per singular value
  std::optional<Tensor2D> left_vectors;  // one unit row per singular value
};

/// Flips `v` in place so its largest-magnitude entry is positive (first index wins ties).
/// Returns true when a flip happened.
bool canonicalize_sign(std::span<double> v);

/// Top-k singular triplets via the eigendecomposition of the smaller Gram matrix.
/// Throws InvalidArgument when k == 0, k > min(rows, cols) or the input is non-finite.
SvdResult svd_thin(const Tensor2D& m, std::size_t k, bool want_left = false);

/// Subtracts column means. Throws on an empty matrix.
Tensor2D mean_center(const Tensor2D& m);

struct PrincipalComponents {
  Tensor2D basis;            // r x d, orthonormal rows
  Vector explained_ratio;    // sigma_i^2 / sum sigma^2 over every singular value
  std::size_t rank = 0;
};

/// Uncentered PCA of unit-norm direction rows; keeps the smallest r whose
/// cumulative explained ratio reaches eta.
PrincipalComponents principal_components_detail(const Tensor2D& directions, double eta);
Tensor2D principal_components(const Tensor2D& directions, double eta);

/// Largest |G - I| entry of the row Gram matrix.
double orthonormality_deviation(const Tensor2D& basis);

/// P = Σ vᵢvᵢᵀ for orthonormal rows vᵢ. Throws when rows deviate from
/// orthonormal by more than 1e-6.
Tensor2D projector_from_basis(const Tensor2D& basis);

/// u·v / (‖u‖‖v‖), clamped to [-1, 1]. Throws on zero-norm inputs.
double cosine(std::span<const double> u, std::span<const double> v);

/// Largest canonical angle between the row spans of two orthonormal bases, in degrees.
double principal_angle(const Tensor2D& a, const Tensor2D& b);

/// Solves a·x = b for symmetric positive-definite a (Cholesky).
Vector solve_spd(const Tensor2D& a, std::span<const double> b);

/// Modified Gram-Schmidt (two passes) over the rows; throws on rank deficiency.
Tensor2D orthonormalize_rows(const Tensor2D& m);

}  // namespace gloss::linalg
