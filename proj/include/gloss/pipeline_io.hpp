#pragma once

// JSON/CSV forms of the pipeline artifacts. Reals are written in shortest
// round-trip form so a staged run reloads exactly what it wrote.

#include <string>
#include <vector>

#include <json.hpp>

#include "gloss/pipeline.hpp"

namespace gloss {

nlohmann::json candidate_to_json(const DirectionCandidate& c);
DirectionCandidate candidate_from_json(const nlohmann::json& j);

nlohmann::json candidates_to_json(const std::vector<DirectionCandidate>& cands);
std::vector<DirectionCandidate> candidates_from_json(const nlohmann::json& j);

nlohmann::json extraction_to_json(const Extraction& ex);
Extraction extraction_from_json(const nlohmann::json& j);

nlohmann::json subspace_to_json(const ToxicSubspace& s);
ToxicSubspace subspace_from_json(const nlohmann::json& j);

nlohmann::json edit_report_to_json(const EditReport& r);

nlohmann::json matrix_to_json(const Tensor2D& m);
Tensor2D matrix_from_json(const nlohmann::json& j);

/// layer,svd_rank,singular_value
std::string extraction_csv(const Extraction& ex);
/// layer,svd_rank,singular_value,tox,flipped
std::string ranked_csv(const std::vector<DirectionCandidate>& cands);
/// layer,svd_rank,singular_value,tox,selected
std::string selection_csv(const std::vector<DirectionCandidate>& cands);

}  // namespace gloss
