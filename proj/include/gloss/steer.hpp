#pragma once

// Mechanistic experiments on FFN value vectors: a linear toxicity probe, probe-
// ranked vector selection for interventions, residual-stream shifts, cross-layer
// direction similarity, and least-squares reconstruction of a removed direction.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gloss/model.hpp"

namespace gloss {

struct LabeledText {
  std::string text;
  int label = 0;  // 1 = toxic
};

/// JSONL rows of {"text": ..., "label": 0|1}.
std::vector<LabeledText> load_labeled_texts(const std::filesystem::path& path);

struct ProbeExample {
  Vector x;
  int label = 0;
};

struct Probe {
  Vector weight;
  double bias = 0.0;
  double accuracy = 0.0;  // training accuracy at threshold 0
};

/// Full-batch gradient descent on mean logistic loss + (l2/2)‖w‖², from zero.
Probe train_probe(const std::vector<ProbeExample>& examples, double l2, std::size_t steps, double lr);
double probe_logit(const Probe& probe, std::span<const double> x);

/// Last-token hidden state after `layer` for each text.
std::vector<ProbeExample> probe_examples(const ModelBundle& bundle, const std::vector<LabeledText>& texts,
                                         std::size_t layer, std::size_t threads = 1);

/// Indices of the layer's value vectors by cos(vᵢ, W_toxic) descending; lower index wins ties.
/// A zero value vector scores 0.
std::vector<std::size_t> rank_vectors_by_probe(const ModelBundle& bundle, const Probe& probe, std::size_t layer);

enum class SelectionScope { per_layer, global };
std::string to_string(SelectionScope scope);
SelectionScope selection_scope_from_string(const std::string& name);

/// Top-k probe-aligned (or, with most_toxic = false, anti-aligned) value vectors:
/// k per layer, or k overall ranked across the given layers.
std::map<std::size_t, std::vector<std::size_t>> select_vectors(const ModelBundle& bundle, const Probe& probe,
                                                               const std::vector<std::size_t>& layers,
                                                               std::size_t k, SelectionScope scope,
                                                               bool most_toxic = true);

/// x + α·d, with d unit within 1e-6.
Vector cross_layer_shift(std::span<const double> x, std::span<const double> d, double alpha);

/// |cos| between every pair of directions; symmetric with unit diagonal.
Tensor2D direction_similarity_matrix(const std::vector<Vector>& directions);

struct Reconstruction {
  Vector coefficients;
  double cosine = 0.0;  // between Σ cᵢvᵢ and the target; 0 when the combination vanishes
};

/// Least squares over the rows of `remaining` via ridge-regularised normal equations.
Reconstruction reconstruct_direction(const Tensor2D& remaining, std::span<const double> target);

/// Mean over every token position of the residual stream after `layer`.
Vector mean_activation(const ModelBundle& bundle, const std::vector<std::vector<TokenId>>& texts,
                       std::size_t layer);

}  // namespace gloss
