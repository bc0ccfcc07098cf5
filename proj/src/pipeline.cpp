#include "gloss/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gloss/error.hpp"
#include "gloss/io.hpp"
#include "gloss/linalg.hpp"
#include "gloss/parallel.hpp"

namespace gloss {

std::vector<SentencePair> load_pairs(const std::filesystem::path& path) {
  std::vector<SentencePair> pairs;
  std::size_t row = 0;
  for (const auto& j : io::read_jsonl(path)) {
    ++row;
    if (!j.contains("toxic") || !j.contains("nontoxic") || !j["toxic"].is_string() || !j["nontoxic"].is_string())
      throw FormatError(path.string() + ": row " + std::to_string(row) +
                        " needs string fields \"toxic\" and \"nontoxic\"");
    pairs.push_back({j["toxic"].get<std::string>(), j["nontoxic"].get<std::string>()});
  }
  return pairs;
}

namespace {

bool rank_before(const DirectionCandidate& a, const DirectionCandidate& b) {
  if (a.tox != b.tox) return a.tox > b.tox;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.svd_rank < b.svd_rank;
}

}  // namespace

ContrastiveRows collect_ffn_outputs(const ModelBundle& bundle, const std::vector<SentencePair>& pairs,
                                    const std::vector<std::size_t>& layers, std::size_t threads) {
  const std::size_t n = pairs.size();
  const std::size_t d = bundle.config.d;
  const std::set<std::size_t> capture(layers.begin(), layers.end());
  for (std::size_t l : layers)
    if (l >= bundle.config.n_layers)
      throw InvalidArgument("extraction layer " + std::to_string(l) + " out of range (model has " +
                            std::to_string(bundle.config.n_layers) + ")");

  // Tokenize up front so every failure names its row before any forward pass.
  std::vector<std::vector<TokenId>> ids(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[2 * i] = tokenize(bundle.vocab, pairs[i].toxic);
    ids[2 * i + 1] = tokenize(bundle.vocab, pairs[i].nontoxic);
    if (ids[2 * i].empty() || ids[2 * i + 1].empty())
      throw InvalidArgument("pair " + std::to_string(i) + " has an empty sentence");
  }

  ContrastiveRows rows;
  rows.toxic.assign(layers.size(), Tensor2D(n, d));
  rows.nontoxic.assign(layers.size(), Tensor2D(n, d));
  parallel_for(2 * n, threads, [&](std::size_t s) {
    const ForwardResult fr = forward(bundle, ids[s], capture);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const Tensor2D& o = fr.trace.at(layers[li]).ffn_out;
      auto src = o.row(o.rows() - 1);
      Tensor2D& dst = (s % 2 == 0) ? rows.toxic[li] : rows.nontoxic[li];
      std::copy(src.begin(), src.end(), dst.row(s / 2).begin());
    }
  });
  return rows;
}

Extraction extract_candidates(const ModelBundle& bundle, const std::vector<SentencePair>& pairs,
                              const std::vector<std::size_t>& layers, std::size_t k, std::size_t threads) {
  if (pairs.empty()) throw InvalidArgument("extract: empty pair dataset");
  if (layers.empty()) throw InvalidArgument("extract: no extraction layers");
  if (k == 0) throw InvalidArgument("extract: k must be >= 1");
  if (k > pairs.size())
    throw InvalidArgument("extract: k = " + std::to_string(k) + " exceeds the number of pairs N = " +
                          std::to_string(pairs.size()));
  if (k > bundle.config.d)
    throw InvalidArgument("extract: k = " + std::to_string(k) + " exceeds model width " +
                          std::to_string(bundle.config.d));

  const ContrastiveRows rows = collect_ffn_outputs(bundle, pairs, layers, threads);
  Extraction ex;
  ex.n_pairs = pairs.size();
  ex.k = k;
  ex.spectra.resize(layers.size());
  std::vector<std::vector<DirectionCandidate>> per_layer(layers.size());
  parallel_for(layers.size(), threads, [&](std::size_t li) {
    Tensor2D diff = rows.toxic[li];
    for (std::size_t j = 0; j < diff.size(); ++j) diff.data()[j] -= rows.nontoxic[li].data()[j];
    const double scale = std::max(1.0, frobenius_norm(diff));
    const Tensor2D t = linalg::mean_center(diff);
    const linalg::SvdResult svd = linalg::svd_thin(t, k);
    LayerSpectrum& spec = ex.spectra[li];
    spec.layer = layers[li];
    spec.singular_values = svd.singular_values;
    for (std::size_t i = 0; i < k; ++i) {
      if (svd.singular_values[i] <= 1e-10 * scale) break;
      DirectionCandidate c;
      c.direction = svd.right_vectors.row_vector(i);
      c.layer = layers[li];
      c.svd_rank = i;
      c.singular_value = svd.singular_values[i];
      per_layer[li].push_back(std::move(c));
    }
    spec.degenerate = per_layer[li].empty();
  });
  for (auto& v : per_layer)
    for (auto& c : v) ex.candidates.push_back(std::move(c));
  std::stable_sort(ex.candidates.begin(), ex.candidates.end(), [](const auto& a, const auto& b) {
    return a.layer != b.layer ? a.layer < b.layer : a.svd_rank < b.svd_rank;
  });
  return ex;
}

std::vector<DirectionCandidate> rank_candidates(std::vector<DirectionCandidate> cands, const ModelBundle& bundle,
                                                const Lexicon& lex, std::size_t m) {
  if (cands.empty()) throw InvalidArgument("rank: no candidates to rank");
  for (auto& c : cands) {
    OrientedScore s = score_both_signs(c.direction, bundle, lex, m);
    // Record the flip relative to the extracted orientation.
    c.flipped = s.flipped;
    c.direction = std::move(s.direction);
    c.tox = s.score;
  }
  std::stable_sort(cands.begin(), cands.end(), rank_before);
  return cands;
}

Selection select_high(std::vector<DirectionCandidate>& cands, double strictness) {
  if (cands.empty()) throw InvalidArgument("select: no candidates");
  if (std::isnan(strictness)) throw InvalidArgument("select: strictness is NaN");
  const double n = static_cast<double>(cands.size());
  Selection sel;
  sel.strictness = strictness;
  for (const auto& c : cands) sel.mu += c.tox;
  sel.mu /= n;
  double var = 0.0;
  for (const auto& c : cands) var += (c.tox - sel.mu) * (c.tox - sel.mu);
  sel.sigma = std::sqrt(var / n);
  // σ = 0 pins τ to μ for any strictness, including ±∞.
  sel.tau = sel.sigma == 0.0 ? sel.mu : sel.mu + strictness * sel.sigma;

  for (std::size_t i = 0; i < cands.size(); ++i) {
    cands[i].selected = cands[i].tox > sel.tau;
    if (cands[i].selected) sel.high.push_back(i);
  }
  if (sel.high.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
      if (rank_before(cands[i], cands[best])) best = i;
    cands[best].selected = true;
    sel.high.push_back(best);
    sel.fallback = true;
  }
  return sel;
}

ToxicSubspace build_subspace(const std::vector<DirectionCandidate>& cands, const Selection& sel, double eta) {
  if (sel.high.empty()) throw InvalidArgument("subspace: empty selection");
  std::vector<Vector> rows;
  ToxicSubspace s;
  for (std::size_t i : sel.high) {
    if (i >= cands.size()) throw InvalidArgument("subspace: selection index out of range");
    rows.push_back(cands[i].direction);
    s.provenance.push_back(cands[i]);
  }
  const linalg::PrincipalComponents pc = linalg::principal_components_detail(Tensor2D::from_rows(rows), eta);
  s.basis = pc.basis;
  s.projector = linalg::projector_from_basis(pc.basis);
  s.explained_ratio = pc.explained_ratio;
  s.tau = sel.tau;
  s.mu = sel.mu;
  s.sigma = sel.sigma;
  s.strictness = sel.strictness;
  s.eta = eta;
  s.fallback = sel.fallback;
  return s;
}

EditResult edit_weights(const ModelBundle& bundle, const Tensor2D& basis, std::size_t lo, std::size_t hi) {
  const std::size_t d = bundle.config.d;
  if (lo > hi || hi >= bundle.config.n_layers)
    throw InvalidArgument("edit: layer range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                          "] outside model depth " + std::to_string(bundle.config.n_layers));
  if (!basis.empty() && basis.cols() != d)
    throw InvalidArgument("edit: subspace dimension " + std::to_string(basis.cols()) + " != model width " +
                          std::to_string(d));

  EditResult res{bundle, {}};
  res.report.layer_lo = lo;
  res.report.layer_hi = hi;
  const std::size_t r = basis.empty() ? 0 : basis.rows();
  for (std::size_t l = lo; l <= hi; ++l) {
    LayerWeights& w = res.bundle.layers[l];
    Tensor2D values = value_vectors(w, bundle.config.ffn_kind);
    LayerEdit le;
    le.layer = l;
    double removed_sq = 0.0;
    Vector coeff(r);
    for (std::size_t i = 0; i < values.rows(); ++i) {
      auto v = values.row(i);
      for (std::size_t a = 0; a < r; ++a) coeff[a] = dot(basis.row(a), v);
      Vector removed(d, 0.0);
      for (std::size_t a = 0; a < r; ++a) {
        auto b = basis.row(a);
        for (std::size_t j = 0; j < d; ++j) removed[j] += coeff[a] * b[j];
      }
      for (std::size_t j = 0; j < d; ++j) {
        v[j] -= removed[j];
        removed_sq += removed[j] * removed[j];
      }
      for (std::size_t a = 0; a < r; ++a) le.residual = std::max(le.residual, std::abs(dot(basis.row(a), v)));
    }
    if (!values.all_finite()) throw NumericError("edit: non-finite value vectors in layer " + std::to_string(l));
    le.removed_norm = std::sqrt(removed_sq);
    set_value_vectors(w, bundle.config.ffn_kind, values);
    res.report.max_residual = std::max(res.report.max_residual, le.residual);
    res.report.layers.push_back(le);
  }
  return res;
}

GlossResult run_gloss(const ModelBundle& bundle, const std::vector<SentencePair>& pairs, const Lexicon& lex,
                      const GlossParams& p) {
  GlossResult g;
  try {
    g.extraction = extract_candidates(bundle, pairs, p.extract_layers, p.k, p.threads);
  } catch (const std::exception& e) {
    throw StageError("extract", e.what());
  }
  if (g.extraction.candidates.empty())
    throw StageError("extract", "degenerate contrastive matrix: no layer has a non-zero singular value");
  try {
    g.ranked = rank_candidates(g.extraction.candidates, bundle, lex, p.m);
  } catch (const std::exception& e) {
    throw StageError("rank", e.what());
  }
  try {
    g.selection = select_high(g.ranked, p.strictness);
    g.subspace = build_subspace(g.ranked, g.selection, p.eta);
  } catch (const std::exception& e) {
    throw StageError("subspace", e.what());
  }
  try {
    g.edit = edit_weights(bundle, g.subspace.basis, p.edit_lo, p.edit_hi);
  } catch (const std::exception& e) {
    throw StageError("edit", e.what());
  }
  return g;
}

}  // namespace gloss
