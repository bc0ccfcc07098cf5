#include "gloss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "gloss/error.hpp"

namespace gloss {

NllSum nll_from_logits(const Tensor2D& logits, std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw InvalidArgument("perplexity: needs at least 2 tokens");
  if (logits.rows() != tokens.size()) throw InvalidArgument("perplexity: logits/tokens length mismatch");
  NllSum s;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    const auto row = logits.row(t);
    const TokenId next = tokens[t + 1];
    if (next >= row.size()) throw InvalidArgument("perplexity: token id out of range");
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    s.total += -(row[next] - mx - std::log(z));
    ++s.count;
  }
  return s;
}

NllSum nll(const ModelBundle& bundle, std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw InvalidArgument("perplexity: needs at least 2 tokens");
  return nll_from_logits(forward(bundle, tokens).logits, tokens);
}

double perplexity_from_logits(const Tensor2D& logits, std::span<const TokenId> tokens) {
  const NllSum s = nll_from_logits(logits, tokens);
  return std::exp(s.total / static_cast<double>(s.count));
}

double perplexity(const ModelBundle& bundle, std::span<const TokenId> tokens) {
  const NllSum s = nll(bundle, tokens);
  return std::exp(s.total / static_cast<double>(s.count));
}

std::string to_string(FluencyMode mode) { return mode == FluencyMode::entropy ? "entropy" : "as_written"; }

FluencyMode fluency_mode_from_string(const std::string& name) {
  if (name == "entropy") return FluencyMode::entropy;
  if (name == "as_written") return FluencyMode::as_written;
  throw InvalidArgument("unknown fluency mode '" + name + "'");
}

namespace {

// −Σ g log₂ g over the empirical n-gram distribution.
double ngram_entropy(std::span<const std::string> tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  const double total = static_cast<double>(tokens.size() + 1 - n);
  double h = 0.0;
  for (const auto& [gram, c] : counts) {
    const double g = static_cast<double>(c) / total;
    h -= g * std::log2(g);
  }
  return h;
}

}  // namespace

double fluency_entropy(std::span<const std::string> tokens, FluencyMode mode) {
  if (tokens.size() < 3) throw InvalidArgument("fluency_entropy: needs at least 3 tokens");
  const double h2 = ngram_entropy(tokens, 2);
  const double h3 = ngram_entropy(tokens, 3);
  return mode == FluencyMode::entropy ? (2.0 / 3.0) * h2 + (4.0 / 3.0) * h3 : (2.0 / 3.0) * h2 - (4.0 / 3.0) * h3;
}

std::vector<std::string> metric_terms(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(normalize_token(w));
  return out;
}

double consistency_tfidf(std::string_view generated, std::string_view reference,
                         std::span<const std::string> corpus) {
  const auto gen = metric_terms(generated);
  const auto ref = metric_terms(reference);
  if (gen.empty()) throw InvalidArgument("consistency_tfidf: generated text is empty");
  if (ref.empty()) throw InvalidArgument("consistency_tfidf: reference text is empty");
  if (corpus.empty()) throw InvalidArgument("consistency_tfidf: corpus must hold at least one document");

  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    auto terms = metric_terms(doc);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (const auto& t : terms) ++df[t];
  }
  const double n_docs = static_cast<double>(corpus.size());
  auto weights = [&](const std::vector<std::string>& terms) {
    std::map<std::string, double> w;
    for (const auto& t : terms) w[t] += 1.0;
    for (auto& [t, c] : w) {
      const auto it = df.find(t);
      const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
      c = (c / static_cast<double>(terms.size())) * (std::log((1.0 + n_docs) / (1.0 + d)) + 1.0);
    }
    return w;
  };
  const auto wg = weights(gen);
  const auto wr = weights(ref);
  double dotp = 0.0, ng = 0.0, nr = 0.0;
  for (const auto& [t, v] : wg) {
    ng += v * v;
    const auto it = wr.find(t);
    if (it != wr.end()) dotp += v * it->second;
  }
  for (const auto& [t, v] : wr) nr += v * v;
  return std::clamp(dotp / std::sqrt(ng * nr), 0.0, 1.0);
}

double toxicity_proxy(std::span<const std::string> tokens, const Lexicon& lex, std::size_t window) {
  if (window == 0) throw InvalidArgument("toxicity_proxy: window must be >= 1");
  const std::size_t n = std::min(window, tokens.size());
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (lex.contains(tokens[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace gloss
