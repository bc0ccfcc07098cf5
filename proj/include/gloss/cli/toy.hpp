#pragma once

// Seeded toy model with a planted toxic direction d*.
//
// Geometry (orthonormal frame f₀..f_{d-1}):
//   d* = f₀; trigger subspace T = span(f₁..f₄); clean direction c = f₅;
//   everything else S'' = span(f₆..).
// Clean tokens embed in c + S''. Bad words embed along d*. A trigger token is
// a clean token plus a T component of varying strength. In the planted layers a
// block of FFN rows reads T and writes d*, so a trigger at the last position
// drives greedy decoding to bad words. Planted rows come in pairs sharing key
// and d* weight with opposite T-side offsets, so pair differences carry d* only.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gloss/model.hpp"
#include "gloss/pipeline.hpp"
#include "gloss/steer.hpp"

namespace gloss::cli {

struct ToyOptions {
  std::uint64_t seed = 7;
  std::size_t d = 64;
  std::size_t d_m = 256;
  std::size_t n_layers = 4;
  std::size_t planted_lo = 1;
  std::size_t planted_hi = 2;
  std::size_t pairs = 64;
  std::size_t planted_rows = 64;  // per planted layer, even
  std::size_t max_seq = 32;
  FfnKind ffn_kind = FfnKind::two_layer;

  void validate() const;
};

struct ToyFixture {
  ModelBundle bundle;
  Vector planted_direction;                              // d*
  std::vector<std::size_t> planted_layers;
  std::vector<std::vector<std::size_t>> planted_rows;  // per planted layer
  std::vector<std::string> lexicon;
  std::vector<SentencePair> pairs;
  std::vector<LabeledText> probe;
  std::vector<std::string> toxic_prompts;
  std::vector<std::string> mild_prompts;
  std::vector<std::string> clean_lines;
};

ToyFixture make_toy(const ToyOptions& opt);

/// Writes model.gtar, lexicon.txt, pairs.jsonl, probe.jsonl, prompts_toxic.jsonl,
/// prompts_mild.jsonl, clean.txt, planted_direction.json and config.json.
void write_toy(const ToyFixture& fx, const ToyOptions& opt, const std::filesystem::path& dir);

}  // namespace gloss::cli
