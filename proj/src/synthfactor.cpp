#include "gloss/synthfactor.hpp"

#include <algorithm>
#include <cmath>

#include "gloss/error.hpp"
#include "gloss/linalg.hpp"
#include "gloss/parallel.hpp"
#include "gloss/rng.hpp"

namespace gloss {

void FactorSpec::validate() const {
  if (toxic_rank == 0) throw InvalidArgument("factor spec: toxic_rank must be >= 1");
  if (toxic_rank + context_rank + 1 > dim)
    throw InvalidArgument("factor spec: toxic_rank + context_rank + 1 must not exceed dim");
  if (samples < 2) throw InvalidArgument("factor spec: samples must be >= 2");
  if (!(alpha_tox >= 0.0) || !std::isfinite(alpha_tox)) throw InvalidArgument("factor spec: alpha_tox must be >= 0");
  if (!(sigma_u >= 0.0) || !std::isfinite(sigma_u)) throw InvalidArgument("factor spec: sigma_u must be >= 0");
}

FactorBases make_bases(const FactorSpec& spec) {
  spec.validate();
  const std::size_t k = spec.toxic_rank;
  const std::size_t kc = spec.context_rank;
  Rng rng(spec.seed, 1);
  Tensor2D g(k + kc + 1, spec.dim);
  for (double& v : g.data()) v = rng.normal();
  const Tensor2D q = linalg::orthonormalize_rows(g);
  FactorBases b;
  b.toxic = Tensor2D(k, spec.dim);
  b.context = Tensor2D(kc, spec.dim);
  for (std::size_t i = 0; i < k; ++i) std::copy_n(q.row(i).begin(), spec.dim, b.toxic.row(i).begin());
  for (std::size_t i = 0; i < kc; ++i) std::copy_n(q.row(k + i).begin(), spec.dim, b.context.row(i).begin());
  b.mean = q.row_vector(k + kc);
  validate_bases(b);
  return b;
}

void validate_bases(const FactorBases& b) {
  const std::size_t dim = b.mean.size();
  if (b.toxic.cols() != dim || (b.context.rows() > 0 && b.context.cols() != dim))
    throw InvalidArgument("factor bases: dimension mismatch");
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < b.toxic.rows(); ++i) rows.push_back(b.toxic.row_vector(i));
  for (std::size_t i = 0; i < b.context.rows(); ++i) rows.push_back(b.context.row_vector(i));
  rows.push_back(b.mean);
  const double dev = linalg::orthonormality_deviation(Tensor2D::from_rows(rows));
  if (dev > 1e-8)
    throw InvalidArgument("factor bases violate orthogonality: max deviation " + std::to_string(dev));
}

FactorSample generate_pairs(const FactorSpec& spec) { return generate_pairs(spec, make_bases(spec)); }

FactorSample generate_pairs(const FactorSpec& spec, const FactorBases& bases) {
  spec.validate();
  validate_bases(bases);
  if (bases.mean.size() != spec.dim || bases.toxic.rows() != spec.toxic_rank ||
      bases.context.rows() != spec.context_rank)
    throw InvalidArgument("factor bases do not match the spec");
  const std::size_t n = spec.samples;
  const std::size_t dim = spec.dim;
  FactorSample s;
  s.toxic = Tensor2D(n, dim);
  s.nontoxic = Tensor2D(n, dim);
  s.toxic_basis = bases.toxic;
  s.factors = Tensor2D(n, spec.toxic_rank);
  s.context_factors = Tensor2D(n, spec.context_rank);

  Rng rng(spec.seed, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double a_pos = rng.normal(1.0, 0.1);
    const double a_neg = spec.shared_scale ? a_pos : rng.normal(1.0, 0.1);
    auto f = s.factors.row(i);
    auto fc = s.context_factors.row(i);
    for (double& v : f) v = rng.normal();
    for (double& v : fc) v = rng.normal();
    auto xp = s.toxic.row(i);
    auto xn = s.nontoxic.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      double shared = 0.0;
      for (std::size_t c = 0; c < spec.context_rank; ++c) shared += fc[c] * bases.context(c, j);
      double toxic = 0.0;
      for (std::size_t c = 0; c < spec.toxic_rank; ++c) toxic += f[c] * bases.toxic(c, j);
      xp[j] = a_pos * bases.mean[j] + spec.alpha_tox * toxic + shared;
      xn[j] = a_neg * bases.mean[j] + shared;
    }
    if (spec.sigma_u > 0.0) {
      for (double& v : xp) v += spec.sigma_u * rng.normal();
      for (double& v : xn) v += spec.sigma_u * rng.normal();
    }
  }
  return s;
}

double cross_factor_correlation(const FactorSample& s) {
  const std::size_t n = s.factors.rows();
  double worst = 0.0;
  for (std::size_t a = 0; a < s.factors.cols(); ++a) {
    for (std::size_t b = 0; b < s.context_factors.cols(); ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += s.factors(i, a) * s.context_factors(i, b);
      worst = std::max(worst, std::abs(acc / static_cast<double>(n)));
    }
  }
  return worst;
}

double recovery_angle(const FactorSpec& spec, std::size_t k_extract) {
  if (k_extract < spec.toxic_rank) throw InvalidArgument("recovery: k_extract must be >= toxic_rank");
  if (k_extract > std::min(spec.samples, spec.dim)) throw InvalidArgument("recovery: k_extract exceeds min(samples, dim)");
  const FactorSample s = generate_pairs(spec);
  Tensor2D diff = s.toxic;
  for (std::size_t j = 0; j < diff.size(); ++j) diff.data()[j] -= s.nontoxic.data()[j];
  const linalg::SvdResult svd = linalg::svd_thin(linalg::mean_center(diff), k_extract);
  Tensor2D top(spec.toxic_rank, spec.dim);
  for (std::size_t i = 0; i < spec.toxic_rank; ++i)
    std::copy_n(svd.right_vectors.row(i).begin(), spec.dim, top.row(i).begin());
  return linalg::principal_angle(top, s.toxic_basis);
}

std::vector<RecoveryRow> recovery_experiment(const FactorSpec& spec, std::size_t k_extract,
                                             const std::vector<double>& alphas, std::size_t n_seeds,
                                             std::size_t threads) {
  if (alphas.empty() || n_seeds == 0) throw InvalidArgument("recovery: need at least one alpha and one seed");
  std::vector<RecoveryRow> rows(alphas.size() * n_seeds);
  parallel_for(rows.size(), threads, [&](std::size_t idx) {
    FactorSpec s = spec;
    s.alpha_tox = alphas[idx / n_seeds];
    s.seed = spec.seed + idx % n_seeds;
    rows[idx] = {s.alpha_tox, s.sigma_u, s.seed, recovery_angle(s, k_extract)};
  });
  return rows;
}

}  // namespace gloss
