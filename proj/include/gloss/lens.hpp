#pragma once

// Logit lens: read a residual-stream direction through the tied embedding,
// and score how much of its top-m vocabulary falls in a bad-word lexicon.

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gloss/model.hpp"

namespace gloss {

struct RankedToken {
  TokenId id = 0;
  std::string token;
  double score = 0.0;
};

using TokenRanking = std::vector<RankedToken>;

/// Top-k rows of E·u, descending; equal scores keep the lower id first.
TokenRanking project_to_vocab(std::span<const double> u, const ModelBundle& bundle, std::size_t k);

/// Lowercase ASCII and drop one leading word-boundary marker (' ', "Ġ" or "▁").
std::string normalize_token(std::string_view token);

class Lexicon {
 public:
  static Lexicon load(const std::filesystem::path& path);
  static Lexicon from_terms(const std::vector<std::string>& terms, std::string source = "<memory>");

  bool contains(std::string_view token) const;  // token is normalized first
  std::size_t size() const { return terms_.size(); }
  const std::set<std::string>& terms() const { return terms_; }
  const std::string& source() const { return source_; }

 private:
  std::set<std::string> terms_;
  std::string source_;
};

/// |top-m(E·v) ∩ lexicon| / m.
double tox_score(std::span<const double> v, const ModelBundle& bundle, const Lexicon& lex, std::size_t m);

struct OrientedScore {
  Vector direction;
  double score = 0.0;
  bool flipped = false;  // relative to the input v
};

/// Picks the better-scoring of v and −v. On a tie the sign-canonical orientation
/// (largest-magnitude entry positive) is returned, so the result does not depend
/// on the sign of the input.
OrientedScore score_both_signs(std::span<const double> v, const ModelBundle& bundle, const Lexicon& lex,
                               std::size_t m);

}  // namespace gloss
