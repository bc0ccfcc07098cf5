#include "gloss/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "gloss/error.hpp"

namespace gloss::linalg {

namespace {

constexpr int kMaxSweeps = 100;

void rotate(Tensor2D& a, std::size_t i, std::size_t j, std::size_t k, std::size_t l,
            double s, double tau) {
  const double g = a(i, j);
  const double h = a(k, l);
  a(i, j) = g - s * (h + g * tau);
  a(k, l) = h + s * (g - h * tau);
}

}  // namespace

SymmetricEigen eigen_symmetric(const Tensor2D& s) {
  const std::size_t n = s.rows();
  if (n != s.cols()) throw InvalidArgument("eigen_symmetric: matrix is not square");
  if (!s.all_finite()) throw InvalidArgument("eigen_symmetric: non-finite input");

  Tensor2D a = s;
  Tensor2D v = Tensor2D::identity(n);
  Vector d(n), b(n), z(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i] = b[i] = a(i, i);

  // Jacobi with threshold sweeps; rotations accumulate into the columns of v.
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::abs(a(p, q));
    if (off == 0.0) break;

    const double thresh = sweep < 3 ? 0.2 * off / static_cast<double>(n * n) : 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double g = 100.0 * std::abs(a(p, q));
        if (sweep > 3 && std::abs(d[p]) + g == std::abs(d[p]) &&
            std::abs(d[q]) + g == std::abs(d[q])) {
          a(p, q) = 0.0;
          continue;
        }
        if (std::abs(a(p, q)) <= thresh) continue;

        const double h = d[q] - d[p];
        double t;
        if (std::abs(h) + g == std::abs(h)) {
          t = a(p, q) / h;
        } else {
          const double theta = 0.5 * h / a(p, q);
          t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        const double tau = sn / (1.0 + c);
        const double hh = t * a(p, q);
        z[p] -= hh;
        z[q] += hh;
        d[p] -= hh;
        d[q] += hh;
        a(p, q) = 0.0;
        for (std::size_t j = 0; j < p; ++j) rotate(a, j, p, j, q, sn, tau);
        for (std::size_t j = p + 1; j < q; ++j) rotate(a, p, j, j, q, sn, tau);
        for (std::size_t j = q + 1; j < n; ++j) rotate(a, p, j, q, j, sn, tau);
        for (std::size_t j = 0; j < n; ++j) rotate(v, j, p, j, q, sn, tau);
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      b[p] += z[p];
      d[p] = b[p];
      z[p] = 0.0;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return d[x] > d[y]; });

  SymmetricEigen out{Vector(n), Tensor2D(n, n)};
  for (std::size_t r = 0; r < n; ++r) {
    out.values[r] = d[order[r]];
    for (std::size_t c = 0; c < n; ++c) out.vectors(r, c) = v(c, order[r]);
  }
  return out;
}

bool canonicalize_sign(std::span<double> v) {
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > best_mag) {
      best_mag = std::abs(v[i]);
      best = i;
    }
  }
  if (v.empty() || v[best] >= 0.0) return false;
  for (double& x : v) x = -x;
  return true;
}

namespace {

// Completes rows [0, filled) of `basis` with unit vectors orthogonal to them,
// drawn from the standard basis in index order.
void complete_orthonormal(Tensor2D& basis, std::size_t filled) {
  const std::size_t dim = basis.cols();
  std::size_t next = filled;
  for (std::size_t e = 0; e < dim && next < basis.rows(); ++e) {
    Vector cand(dim, 0.0);
    cand[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t r = 0; r < next; ++r) {
        const double proj = dot(basis.row(r), cand);
        for (std::size_t c = 0; c < dim; ++c) cand[c] -= proj * basis(r, c);
      }
    const double n = norm(cand);
    if (n < 1e-6) continue;
    for (std::size_t c = 0; c < dim; ++c) basis(next, c) = cand[c] / n;
    ++next;
  }
}

void reorthonormalize(Tensor2D& rows, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    auto ri = rows.row(i);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < i; ++j) {
        const double proj = dot(rows.row(j), ri);
        auto rj = rows.row(j);
        for (std::size_t c = 0; c < ri.size(); ++c) ri[c] -= proj * rj[c];
      }
    const double n = norm(ri);
    for (double& x : ri) x /= n;
  }
}

}  // namespace

SvdResult svd_thin(const Tensor2D& m, std::size_t k, bool want_left) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (k == 0 || k > std::min(rows, cols)) {
    throw InvalidArgument("svd_thin: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(rows, cols)) + "]");
  }
  if (!m.all_finite()) throw InvalidArgument("svd_thin: non-finite input");

  SvdResult out;
  out.singular_values.resize(k);
  out.right_vectors = Tensor2D(k, cols);

  if (cols <= rows) {
    // Right vectors are eigenvectors of mᵀm directly.
    const SymmetricEigen eig = eigen_symmetric(gram_cols(m));
    for (std::size_t i = 0; i < k; ++i) {
      out.singular_values[i] = std::sqrt(std::max(eig.values[i], 0.0));
      for (std::size_t c = 0; c < cols; ++c) out.right_vectors(i, c) = eig.vectors(i, c);
    }
  } else {
    // Wide input: eigenvectors of m·mᵀ are left vectors; map them through mᵀ.
    const SymmetricEigen eig = eigen_symmetric(gram_rows(m));
    const double top = std::sqrt(std::max(eig.values[0], 0.0));
    std::size_t filled = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double sigma = std::sqrt(std::max(eig.values[i], 0.0));
      out.singular_values[i] = sigma;
      if (sigma > 1e-7 * top && sigma > 0.0 && filled == i) {
        const Vector v = matvec_t(m, eig.vectors.row(i));
        for (std::size_t c = 0; c < cols; ++c) out.right_vectors(i, c) = v[c] / sigma;
        ++filled;
      }
    }
    reorthonormalize(out.right_vectors, filled);
    complete_orthonormal(out.right_vectors, filled);
  }

  for (std::size_t i = 0; i < k; ++i) canonicalize_sign(out.right_vectors.row(i));

  if (want_left) {
    Tensor2D left(k, rows);
    for (std::size_t i = 0; i < k; ++i) {
      if (out.singular_values[i] <= 0.0) continue;
      const Vector u = matvec(m, out.right_vectors.row(i));
      for (std::size_t r = 0; r < rows; ++r) left(i, r) = u[r] / out.singular_values[i];
    }
    out.left_vectors = std::move(left);
  }
  return out;
}

Tensor2D mean_center(const Tensor2D& m) {
  if (m.rows() == 0 || m.cols() == 0) throw InvalidArgument("mean_center: empty matrix");
  Vector mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  for (double& x : mean) x /= static_cast<double>(m.rows());
  Tensor2D out = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) -= mean[c];
  return out;
}

PrincipalComponents principal_components_detail(const Tensor2D& directions, double eta) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw InvalidArgument("principal_components: eta must lie in (0, 1]");
  if (directions.rows() == 0 || directions.cols() == 0)
    throw InvalidArgument("principal_components: no directions");
  for (std::size_t r = 0; r < directions.rows(); ++r) {
    const double n = norm(directions.row(r));
    if (std::abs(n - 1.0) > 1e-6)
      throw InvalidArgument("principal_components: row " + std::to_string(r) +
                            " is not unit norm (" + std::to_string(n) + ")");
  }

  const std::size_t full = std::min(directions.rows(), directions.cols());
  const SvdResult svd = svd_thin(directions, full);
  double total = 0.0;
  for (double s : svd.singular_values) total += s * s;

  PrincipalComponents out;
  out.explained_ratio.resize(full);
  for (std::size_t i = 0; i < full; ++i)
    out.explained_ratio[i] = svd.singular_values[i] * svd.singular_values[i] / total;

  double cumulative = 0.0;
  std::size_t r = 0;
  while (r < full) {
    cumulative += out.explained_ratio[r];
    ++r;
    if (cumulative >= eta - 1e-12) break;
  }
  out.rank = r;
  out.basis = Tensor2D(r, directions.cols());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t c = 0; c < directions.cols(); ++c) out.basis(i, c) = svd.right_vectors(i, c);
  return out;
}

Tensor2D principal_components(const Tensor2D& directions, double eta) {
  return principal_components_detail(directions, eta).basis;
}

double orthonormality_deviation(const Tensor2D& basis) {
  const Tensor2D g = gram_rows(basis);
  return max_abs_diff(g, Tensor2D::identity(basis.rows()));
}

Tensor2D projector_from_basis(const Tensor2D& basis) {
  if (basis.rows() == 0) throw InvalidArgument("projector_from_basis: empty basis");
  const double dev = orthonormality_deviation(basis);
  if (dev > 1e-6)
    throw InvalidArgument("projector_from_basis: basis not orthonormal (max Gram deviation " +
                          std::to_string(dev) + ")");
  return gram_cols(basis);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw InvalidArgument("cosine: dimension mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu <= 1e-12 || nv <= 1e-12) throw InvalidArgument("cosine: zero-norm input");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double principal_angle(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols())
    throw InvalidArgument("principal_angle: ambient dimension mismatch (" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  if (a.rows() == 0 || b.rows() == 0) throw InvalidArgument("principal_angle: empty basis");

  // `small` spans the lower-rank subspace; its canonical angles to `big` are measured.
  const Tensor2D& small = a.rows() <= b.rows() ? a : b;
  const Tensor2D& big = a.rows() <= b.rows() ? b : a;
  const Tensor2D cross = matmul_bt(small, big);
  const SvdResult cs = svd_thin(cross, std::min(cross.rows(), cross.cols()));
  const double cos_min = std::min(1.0, cs.singular_values.back());
  if (cos_min < 0.7) return std::acos(cos_min) * 180.0 / std::numbers::pi;

  // Near-aligned spans: the sine route keeps precision for tiny angles.
  Tensor2D residual = small;
  const Tensor2D back = matmul(cross, big);
  for (std::size_t i = 0; i < residual.size(); ++i) residual.data()[i] -= back.data()[i];
  const SvdResult rs = svd_thin(residual, std::min(residual.rows(), residual.cols()));
  const double sin_max = std::min(1.0, rs.singular_values.front());
  return std::asin(sin_max) * 180.0 / std::numbers::pi;
}

Vector solve_spd(const Tensor2D& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (n != a.cols() || b.size() != n) throw InvalidArgument("solve_spd: shape mismatch");
  Tensor2D l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t p = 0; p < j; ++p) diag -= l(j, p) * l(j, p);
    if (!(diag > 0.0)) throw NumericError("solve_spd: matrix is not positive definite");
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / l(j, j);
    }
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * y[p];
    y[i] = s / l(i, i);
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t p = ii + 1; p < n; ++p) s -= l(p, ii) * x[p];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

Tensor2D orthonormalize_rows(const Tensor2D& m) {
  Tensor2D out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto ri = out.row(i);
    const double before = norm(ri);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < i; ++j) {
        const double proj = dot(out.row(j), ri);
        auto rj = out.row(j);
        for (std::size_t c = 0; c < ri.size(); ++c) ri[c] -= proj * rj[c];
      }
    const double n = norm(ri);
    if (n <= 1e-10 * std::max(before, 1.0))
      throw NumericError("orthonormalize_rows: row " + std::to_string(i) + " is dependent");
    for (double& x : ri) x /= n;
  }
  return out;
}

}  // namespace gloss::linalg
