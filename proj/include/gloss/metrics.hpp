#pragma once

// Generation-quality metrics: perplexity, n-gram fluency entropy, TF-IDF
// consistency, and a lexicon-overlap toxicity proxy.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gloss/lens.hpp"
#include "gloss/model.hpp"

namespace gloss {

/// Sum of −ln p(xᵢ | x_{<i}) over positions 1..t-1 of a single window.
struct NllSum {
  double total = 0.0;
  std::size_t count = 0;
};

NllSum nll_from_logits(const Tensor2D& logits, std::span<const TokenId> tokens);
NllSum nll(const ModelBundle& bundle, std::span<const TokenId> tokens);

double perplexity_from_logits(const Tensor2D& logits, std::span<const TokenId> tokens);
/// exp(mean NLL), natural log. Needs at least two tokens, at most max_seq.
double perplexity(const ModelBundle& bundle, std::span<const TokenId> tokens);

enum class FluencyMode {
  as_written,  // −(2/3)Σg₂log₂g₂ + (4/3)Σg₃log₂g₃, i.e. (2/3)H₂ − (4/3)H₃
  entropy,     // (2/3)H₂ + (4/3)H₃
};

std::string to_string(FluencyMode mode);
FluencyMode fluency_mode_from_string(const std::string& name);

double fluency_entropy(std::span<const std::string> tokens, FluencyMode mode);

/// Whitespace split followed by token normalization.
std::vector<std::string> metric_terms(std::string_view text);

/// Cosine of TF-IDF vectors; TF = count/length, IDF = ln((1+N)/(1+df)) + 1 over `corpus`.
double consistency_tfidf(std::string_view generated, std::string_view reference,
                         std::span<const std::string> corpus);

/// Fraction of the first `window` tokens found in the lexicon; the denominator
/// is min(window, token count), and an empty generation scores 0.
double toxicity_proxy(std::span<const std::string> tokens, const Lexicon& lex, std::size_t window = 10);

struct EvalReport {
  double toxicity_proxy = 0.0;
  double ppl = 0.0;
  double fluency = 0.0;
  FluencyMode fluency_mode = FluencyMode::entropy;
  double consistency = 0.0;
  std::size_t n_prompts = 0;
  std::size_t n_generated_tokens = 0;
  std::size_t n_ppl_tokens = 0;
};

}  // namespace gloss
