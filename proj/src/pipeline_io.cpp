#include "gloss/pipeline_io.hpp"

#include "gloss/error.hpp"
#include "gloss/io.hpp"
#include "gloss/linalg.hpp"

namespace gloss {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("artifact field '") + key + "': " + e.what());
  }
}

}  // namespace

json matrix_to_json(const Tensor2D& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(m.row_vector(r));
  return rows;
}

Tensor2D matrix_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("matrix must be an array of rows");
  if (j.empty()) return {};
  std::vector<Vector> rows;
  for (const auto& r : j) rows.push_back(r.get<Vector>());
  for (const auto& r : rows)
    if (r.size() != rows.front().size()) throw FormatError("matrix rows have unequal length");
  return Tensor2D::from_rows(rows);
}

json candidate_to_json(const DirectionCandidate& c) {
  return json{{"layer", c.layer},       {"svd_rank", c.svd_rank}, {"singular_value", c.singular_value},
              {"tox", c.tox},           {"flipped", c.flipped},   {"selected", c.selected},
              {"direction", c.direction}};
}

DirectionCandidate candidate_from_json(const json& j) {
  DirectionCandidate c;
  c.layer = field<std::size_t>(j, "layer");
  c.svd_rank = field<std::size_t>(j, "svd_rank");
  c.singular_value = field<double>(j, "singular_value");
  c.tox = field<double>(j, "tox");
  c.flipped = field<bool>(j, "flipped");
  c.selected = field<bool>(j, "selected");
  c.direction = field<Vector>(j, "direction");
  if (c.direction.empty()) throw FormatError("candidate with empty direction");
  return c;
}

json candidates_to_json(const std::vector<DirectionCandidate>& cands) {
  json a = json::array();
  for (const auto& c : cands) a.push_back(candidate_to_json(c));
  return a;
}

std::vector<DirectionCandidate> candidates_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("candidate list must be an array");
  std::vector<DirectionCandidate> out;
  for (const auto& c : j) out.push_back(candidate_from_json(c));
  return out;
}

json extraction_to_json(const Extraction& ex) {
  json spectra = json::array();
  for (const auto& s : ex.spectra)
    spectra.push_back({{"layer", s.layer}, {"singular_values", s.singular_values}, {"degenerate", s.degenerate}});
  return json{{"n_pairs", ex.n_pairs}, {"k", ex.k}, {"spectra", spectra},
              {"candidates", candidates_to_json(ex.candidates)}};
}

Extraction extraction_from_json(const json& j) {
  Extraction ex;
  ex.n_pairs = field<std::size_t>(j, "n_pairs");
  ex.k = field<std::size_t>(j, "k");
  for (const auto& s : field<json>(j, "spectra"))
    ex.spectra.push_back({field<std::size_t>(s, "layer"), field<Vector>(s, "singular_values"),
                          field<bool>(s, "degenerate")});
  ex.candidates = candidates_from_json(field<json>(j, "candidates"));
  return ex;
}

json subspace_to_json(const ToxicSubspace& s) {
  return json{{"rank", s.rank()},
              {"dim", s.basis.cols()},
              {"tau", s.tau},
              {"mu", s.mu},
              {"sigma", s.sigma},
              {"strictness", s.strictness},
              {"eta", s.eta},
              {"explained_ratio", s.explained_ratio},
              {"fallback", s.fallback},
              {"basis", matrix_to_json(s.basis)},
              {"selected", candidates_to_json(s.provenance)}};
}

ToxicSubspace subspace_from_json(const json& j) {
  ToxicSubspace s;
  s.basis = matrix_from_json(field<json>(j, "basis"));
  if (s.basis.rows() != field<std::size_t>(j, "rank")) throw FormatError("subspace rank does not match basis");
  s.projector = linalg::projector_from_basis(s.basis);
  s.tau = field<double>(j, "tau");
  s.mu = field<double>(j, "mu");
  s.sigma = field<double>(j, "sigma");
  s.strictness = field<double>(j, "strictness");
  s.eta = field<double>(j, "eta");
  s.explained_ratio = field<Vector>(j, "explained_ratio");
  s.fallback = field<bool>(j, "fallback");
  s.provenance = candidates_from_json(field<json>(j, "selected"));
  return s;
}

json edit_report_to_json(const EditReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers)
    layers.push_back({{"layer", l.layer}, {"removed_norm", l.removed_norm}, {"residual", l.residual}});
  return json{{"layer_range", {r.layer_lo, r.layer_hi}}, {"max_residual", r.max_residual}, {"layers", layers}};
}

std::string extraction_csv(const Extraction& ex) {
  std::string out = "layer,svd_rank,singular_value\n";
  for (const auto& c : ex.candidates)
    out += std::to_string(c.layer) + "," + std::to_string(c.svd_rank) + "," + io::format_real(c.singular_value) + "\n";
  return out;
}

std::string ranked_csv(const std::vector<DirectionCandidate>& cands) {
  std::string out = "layer,svd_rank,singular_value,tox,flipped\n";
  for (const auto& c : cands)
    out += std::to_string(c.layer) + "," + std::to_string(c.svd_rank) + "," + io::format_real(c.singular_value) +
           "," + io::format_real(c.tox) + "," + (c.flipped ? "1" : "0") + "\n";
  return out;
}

std::string selection_csv(const std::vector<DirectionCandidate>& cands) {
  std::string out = "layer,svd_rank,singular_value,tox,selected\n";
  for (const auto& c : cands)
    out += std::to_string(c.layer) + "," + std::to_string(c.svd_rank) + "," + io::format_real(c.singular_value) +
           "," + io::format_real(c.tox) + "," + (c.selected ? "1" : "0") + "\n";
  return out;
}

}  // namespace gloss
