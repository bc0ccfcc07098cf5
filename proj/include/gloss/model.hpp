#pragma once

// Desk-scale decoder-only transformer: tied embeddings, learned absolute
// positions, pre-norm (RMS) causal attention, and a two-layer or gated FFN
// written explicitly as a coefficient-weighted sum of value vectors.

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gloss/intervention.hpp"
#include "gloss/tensor.hpp"

namespace gloss {

using TokenId = std::size_t;

enum class FfnKind { two_layer, gated };

std::string to_string(FfnKind kind);
FfnKind ffn_kind_from_string(const std::string& name);

struct ModelConfig {
  std::size_t d = 0;
  std::size_t d_m = 0;
  std::size_t n_layers = 0;
  std::size_t n_heads = 1;
  std::size_t vocab_size = 0;
  FfnKind ffn_kind = FfnKind::two_layer;
  std::size_t max_seq = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  Tensor2D attn_q, attn_k, attn_v, attn_o;  // d x d, applied as W·x
  Vector attn_norm_gain;                    // d
  Vector ffn_norm_gain;                     // d
  // two_layer: m = GELU(ffn_in·x); value vectors are rows of ffn_out.
  Tensor2D ffn_in;   // d_m x d
  Tensor2D ffn_out;  // d_m x d
  // gated: m = SiLU(ffn_gate·x) ⊙ (ffn_up·x); value vectors are columns of ffn_down.
  Tensor2D ffn_gate;  // d_m x d
  Tensor2D ffn_up;    // d_m x d
  Tensor2D ffn_down;  // d x d_m
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Id of an exact token string; 0 (<unk>) when absent.
  TokenId id(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct ModelBundle {
  ModelConfig config;
  Tensor2D embedding;  // vocab_size x d, tied input/output
  Tensor2D position;   // max_seq x d
  std::vector<LayerWeights> layers;
  Vocabulary vocab;

  /// Checks every tensor shape against config; throws InvalidArgument naming the tensor.
  void validate() const;
};

/// Allocates a zero-initialised bundle with neutral norm gains.
ModelBundle make_empty_bundle(const ModelConfig& config, std::vector<std::string> vocab);

/// Value vectors of one layer as rows (d_m x d), independent of storage orientation.
Tensor2D value_vectors(const LayerWeights& layer, FfnKind kind);
/// Writes value vectors (d_m x d rows) back into the layer's output projection.
void set_value_vectors(LayerWeights& layer, FfnKind kind, const Tensor2D& vectors);

double gelu(double x);
double silu(double x);

struct FfnResult {
  Vector coeffs;  // m, length d_m
  Vector out;     // Σ mᵢvᵢ, length d
};

Vector ffn_coefficients(std::span<const double> x, const LayerWeights& w, FfnKind kind);
Vector ffn_combine(std::span<const double> coeffs, const LayerWeights& w, FfnKind kind);
FfnResult ffn_two_layer(std::span<const double> x, const LayerWeights& w);
FfnResult ffn_gated(std::span<const double> x, const LayerWeights& w);

/// x / RMS(x) · gain, with RMS(x) = sqrt(mean(x²) + 1e-6).
Vector rms_normalize(std::span<const double> x, std::span<const double> gain);

/// Per-layer captured activations; one row per token position.
struct LayerTrace {
  std::size_t layer = 0;
  Tensor2D hidden_in;   // x^ℓ
  Tensor2D attn_out;    // attention contribution added to the residual
  Tensor2D ffn_coeffs;  // m^ℓ (after any intervention)
  Tensor2D ffn_out;     // o^ℓ
  Tensor2D hidden_out;  // x̃^ℓ = x^ℓ + attn + o^ℓ
};

struct ActivationTrace {
  std::vector<LayerTrace> layers;
  const LayerTrace* find(std::size_t layer) const;
  const LayerTrace& at(std::size_t layer) const;
};

struct ForwardResult {
  Tensor2D logits;  // seq x vocab
  ActivationTrace trace;
};

ForwardResult forward(const ModelBundle& bundle, std::span<const TokenId> tokens,
                      const std::set<std::size_t>& capture = {},
                      const SteeringSpec* intervene = nullptr);

/// Greedy continuation (argmax, lowest id wins ties). Once the sequence exceeds
/// max_seq only the trailing max_seq tokens are fed back.
std::vector<TokenId> generate_greedy(const ModelBundle& bundle, std::span<const TokenId> prompt,
                                     std::size_t n_new, const SteeringSpec* intervene = nullptr);

/// Whitespace tokenizer over the bundle vocabulary; unknown words map to 0.
std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text);
std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> ids);

}  // namespace gloss
