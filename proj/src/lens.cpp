#include "gloss/lens.hpp"

#include <algorithm>
#include <numeric>

#include "gloss/error.hpp"
#include "gloss/io.hpp"
#include "gloss/linalg.hpp"

namespace gloss {

TokenRanking project_to_vocab(std::span<const double> u, const ModelBundle& bundle, std::size_t k) {
  const Tensor2D& e = bundle.embedding;
  if (u.size() != e.cols())
    throw InvalidArgument("project_to_vocab: direction has dimension " + std::to_string(u.size()) +
                          ", model has " + std::to_string(e.cols()));
  if (k == 0 || k > e.rows())
    throw InvalidArgument("project_to_vocab: k must be in [1, " + std::to_string(e.rows()) + "]");
  const Vector r = matvec(e, u);
  std::vector<TokenId> ids(r.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&r](TokenId a, TokenId b) { return r[a] > r[b] || (r[a] == r[b] && a < b); });
  TokenRanking out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids[i], bundle.vocab.token(ids[i]), r[ids[i]]});
  return out;
}

std::string normalize_token(std::string_view token) {
  if (token.starts_with("\xC4\xA0")) {
    token.remove_prefix(2);
  } else if (token.starts_with("\xE2\x96\x81")) {
    token.remove_prefix(3);
  } else if (token.starts_with(' ')) {
    token.remove_prefix(1);
  }
  std::string out(token);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

Lexicon Lexicon::from_terms(const std::vector<std::string>& terms, std::string source) {
  Lexicon lex;
  lex.source_ = std::move(source);
  for (const auto& t : terms) {
    std::string n = normalize_token(t);
    if (!n.empty()) lex.terms_.insert(std::move(n));
  }
  if (lex.terms_.empty()) throw InvalidArgument("lexicon '" + lex.source_ + "' is empty");
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  std::vector<std::string> terms;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    terms.push_back(line);
  }
  return from_terms(terms, path.string());
}

bool Lexicon::contains(std::string_view token) const { return terms_.count(normalize_token(token)) > 0; }

double tox_score(std::span<const double> v, const ModelBundle& bundle, const Lexicon& lex, std::size_t m) {
  if (m == 0) throw InvalidArgument("tox_score: m must be >= 1");
  if (m > bundle.config.vocab_size)
    throw InvalidArgument("tox_score: m = " + std::to_string(m) + " exceeds vocab_size " +
                          std::to_string(bundle.config.vocab_size));
  std::size_t hits = 0;
  for (const auto& t : project_to_vocab(v, bundle, m))
    if (lex.contains(t.token)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(m);
}

OrientedScore score_both_signs(std::span<const double> v, const ModelBundle& bundle, const Lexicon& lex,
                               std::size_t m) {
  Vector canon(v.begin(), v.end());
  const bool canon_flipped = linalg::canonicalize_sign(canon);
  const Vector other = scaled(canon, -1.0);
  const double s_canon = tox_score(canon, bundle, lex, m);
  const double s_other = tox_score(other, bundle, lex, m);
  if (s_other > s_canon) return {other, s_other, !canon_flipped};
  return {canon, s_canon, canon_flipped};
}

}  // namespace gloss
