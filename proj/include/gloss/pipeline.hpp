#pragma once

// Contrastive extraction, vocabulary ranking, adaptive selection, global PCA
// subspace, and projection editing of FFN value vectors.

#include <cstddef>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gloss/lens.hpp"
#include "gloss/model.hpp"

namespace gloss {

struct SentencePair {
  std::string toxic;
  std::string nontoxic;
};

/// JSONL rows of {"toxic": ..., "nontoxic": ...}.
std::vector<SentencePair> load_pairs(const std::filesystem::path& path);

struct DirectionCandidate {
  Vector direction;  // unit norm
  std::size_t layer = 0;
  std::size_t svd_rank = 0;
  double singular_value = 0.0;
  double tox = 0.0;
  bool flipped = false;   // orientation chosen by the lens differs from the SVD sign
  bool selected = false;
};

struct LayerSpectrum {
  std::size_t layer = 0;
  Vector singular_values;  // top-k of the centered contrastive matrix
  bool degenerate = false;  // no singular value above the noise floor
};

struct Extraction {
  std::vector<DirectionCandidate> candidates;  // (layer, svd_rank) order
  std::vector<LayerSpectrum> spectra;
  std::size_t n_pairs = 0;
  std::size_t k = 0;
};

/// Last-token FFN outputs of layer ℓ for every sentence, as rows.
struct ContrastiveRows {
  std::vector<Tensor2D> toxic;     // one matrix per requested layer, N x d
  std::vector<Tensor2D> nontoxic;
};
ContrastiveRows collect_ffn_outputs(const ModelBundle& bundle, const std::vector<SentencePair>& pairs,
                                    const std::vector<std::size_t>& layers, std::size_t threads = 1);

/// Top-k right singular vectors of mean_center(X⁺ − X⁻) for each layer. Singular
/// values at rounding level are reported but yield no candidate.
Extraction extract_candidates(const ModelBundle& bundle, const std::vector<SentencePair>& pairs,
                              const std::vector<std::size_t>& layers, std::size_t k, std::size_t threads = 1);

/// Orients every candidate with score_both_signs and sorts by tox descending,
/// then (layer, svd_rank) ascending.
std::vector<DirectionCandidate> rank_candidates(std::vector<DirectionCandidate> cands, const ModelBundle& bundle,
                                                const Lexicon& lex, std::size_t m);

struct Selection {
  std::vector<std::size_t> high;  // indices into the candidate list, ascending
  double mu = 0.0;
  double sigma = 0.0;  // population
  double tau = 0.0;
  double strictness = 0.0;
  bool fallback = false;  // nothing exceeded tau; the top-ranked candidate was kept
};

/// τ = μ + ασ over all scores; keeps tox > τ.
Selection select_high(std::vector<DirectionCandidate>& cands, double strictness);

struct ToxicSubspace {
  Tensor2D basis;      // r x d
  Tensor2D projector;  // d x d
  double tau = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double strictness = 0.0;
  double eta = 0.0;
  Vector explained_ratio;
  bool fallback = false;
  std::vector<DirectionCandidate> provenance;  // the selected candidates

  std::size_t rank() const { return basis.rows(); }
};

ToxicSubspace build_subspace(const std::vector<DirectionCandidate>& cands, const Selection& sel, double eta);

struct LayerEdit {
  std::size_t layer = 0;
  double removed_norm = 0.0;  // ‖P·W‖_F
  double residual = 0.0;      // max |b·w| over basis rows b and edited value vectors w
};

struct EditReport {
  std::size_t layer_lo = 0;
  std::size_t layer_hi = 0;  // inclusive
  std::vector<LayerEdit> layers;
  double max_residual = 0.0;
};

struct EditResult {
  ModelBundle bundle;
  EditReport report;
};

/// Replaces each value vector v in layers [lo, hi] with v − Bᵀ(Bv). Nothing
/// else in the bundle changes. An empty basis is a no-op.
EditResult edit_weights(const ModelBundle& bundle, const Tensor2D& basis, std::size_t lo, std::size_t hi);

struct GlossParams {
  std::vector<std::size_t> extract_layers;
  std::size_t k = 5;
  double strictness = 1.0;
  double eta = 0.9;
  std::size_t m = 100;
  std::size_t edit_lo = 0;
  std::size_t edit_hi = 0;
  std::size_t threads = 1;
};

struct GlossResult {
  Extraction extraction;
  std::vector<DirectionCandidate> ranked;
  Selection selection;
  ToxicSubspace subspace;
  EditResult edit;
};

/// Failure inside one pipeline stage; `stage` is extract, rank, subspace or edit.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause)
      : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

GlossResult run_gloss(const ModelBundle& bundle, const std::vector<SentencePair>& pairs, const Lexicon& lex,
                      const GlossParams& params);

}  // namespace gloss
