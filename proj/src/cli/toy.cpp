#include "gloss/cli/toy.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "gloss/archive.hpp"
#include "gloss/error.hpp"
#include "gloss/io.hpp"
#include "gloss/linalg.hpp"
#include "gloss/rng.hpp"

namespace gloss::cli {

namespace {

using nlohmann::json;

constexpr std::size_t kBadWords = 12;
constexpr std::size_t kTriggers = 16;
constexpr std::size_t kMild = 4;
constexpr std::size_t kTriggerDims = 4;
constexpr std::size_t kFirstFree = 2 + kTriggerDims;  // f₀ = d*, f₁..f₄ = T, f₅ = c

// Embedding geometry.
constexpr double kCleanAlongC = 0.4;
constexpr double kCleanNoise = 0.9;
constexpr double kBadNoise = 0.1;
constexpr double kTriggerMin = 0.4;
constexpr double kTriggerMax = 2.0;
constexpr double kMildStrength = 0.05;
constexpr double kPositionNoise = 0.1;

// Weights.
constexpr double kAttnQK = 0.1;
constexpr double kAttnV = 1.0;
constexpr double kAttnO = 0.3;
constexpr double kKeyScale = 1.0;
constexpr double kValueScale = 0.2;
constexpr double kPlantedLayerValueScale = 0.01;
constexpr double kPlantedKey = 0.4;
constexpr double kPlantedReadsD = 0.4;  // bad words keep the circuit firing
constexpr double kPlantedAmpLo = 0.05;
constexpr double kPlantedAmpHi = 0.15;
constexpr double kPlantedGain = 3.0;
constexpr double kPlantedOffset = 0.5;

const char* const kWords[] = {
    "the",    "a",      "of",     "and",    "to",     "in",     "is",     "was",    "for",    "on",
    "with",   "as",     "at",     "by",     "from",   "that",   "this",   "it",     "an",     "be",
    "river",  "garden", "window", "morning", "letter", "market", "bridge", "forest", "candle", "harbor",
    "meadow", "pencil", "kitchen", "station", "village", "summer", "winter", "autumn", "spring", "cloud",
    "stone",  "paper",  "orange", "yellow", "purple", "silver", "golden", "quiet",  "gentle", "bright",
    "small",  "large",  "early",  "late",   "warm",   "cold",   "green",  "blue",   "red",    "white",
    "walk",   "read",   "write",  "build",  "carry",  "follow", "listen", "open",   "close",  "watch",
    "teacher", "doctor", "farmer", "painter", "sailor", "singer", "baker",  "pilot",  "writer", "friend",
    "table",  "chair",  "door",   "floor",  "wall",   "roof",   "road",   "field",  "hill",   "lake",
    "music",  "story",  "poem",   "song",   "dance",  "game",   "ticket", "train",  "boat",   "plane",
    "apple",  "bread",  "cheese", "honey",  "lemon",  "rice",   "soup",   "tea",    "coffee", "water",
    "today",  "tomorrow", "always", "often", "rarely", "slowly", "softly", "calmly", "gladly", "surely",
    "library", "museum", "theater", "school", "office", "garage", "island", "valley", "desert", "canyon",
    "happy",  "kind",   "brave",  "clever", "honest", "patient", "polite", "proud",  "curious", "careful",
    "paint",  "plant",  "travel", "visit",  "study",  "learn",  "teach",  "share",  "thank",  "smile",
};
constexpr std::size_t kCleanWords = sizeof(kWords) / sizeof(kWords[0]);

Vector random_in(Rng& rng, const Tensor2D& frame, std::size_t lo, std::size_t hi, double length) {
  Vector v(frame.cols(), 0.0);
  for (std::size_t r = lo; r < hi; ++r) {
    const double g = rng.normal();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += g * frame(r, j);
  }
  return scaled(normalized(v), length);
}

void set_row(Tensor2D& m, std::size_t r, std::span<const double> v) { std::copy(v.begin(), v.end(), m.row(r).begin()); }

void set_col(Tensor2D& m, std::size_t c, std::span<const double> v) {
  for (std::size_t r = 0; r < v.size(); ++r) m(r, c) = v[r];
}

std::string sentence(Rng& rng, std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0) s += ' ';
    s += kWords[rng.below(kCleanWords)];
  }
  return s;
}

}  // namespace

void ToyOptions::validate() const {
  if (d < 16) throw InvalidArgument("make-toy: d must be >= 16");
  if (n_layers == 0) throw InvalidArgument("make-toy: layers must be >= 1");
  if (planted_lo > planted_hi || planted_hi >= n_layers)
    throw InvalidArgument("make-toy: planted layer range outside the model");
  if (planted_rows == 0 || planted_rows % 2 != 0 || planted_rows > d_m)
    throw InvalidArgument("make-toy: planted rows must be even and at most d_m");
  if (pairs == 0) throw InvalidArgument("make-toy: pairs must be >= 1");
  if (max_seq < 8) throw InvalidArgument("make-toy: max_seq must be >= 8");
}

ToyFixture make_toy(const ToyOptions& opt) {
  opt.validate();
  const std::size_t d = opt.d;
  const std::size_t dm = opt.d_m;
  Rng rng(opt.seed, 11);

  Tensor2D g(d, d);
  for (double& v : g.data()) v = rng.normal();
  const Tensor2D frame = linalg::orthonormalize_rows(g);
  const Vector dstar = frame.row_vector(0);
  const Vector cdir = frame.row_vector(1 + kTriggerDims);

  std::vector<std::string> vocab{"<unk>"};
  for (std::size_t i = 0; i < kCleanWords; ++i) vocab.push_back(kWords[i]);
  std::vector<std::string> bad, trig, mild;
  for (std::size_t i = 0; i < kBadWords; ++i) bad.push_back("bad_" + std::to_string(i));
  for (std::size_t i = 0; i < kTriggers; ++i) trig.push_back("trig_" + std::to_string(i));
  for (std::size_t i = 0; i < kMild; ++i) mild.push_back("mild_" + std::to_string(i));
  vocab.insert(vocab.end(), bad.begin(), bad.end());
  vocab.insert(vocab.end(), trig.begin(), trig.end());
  vocab.insert(vocab.end(), mild.begin(), mild.end());

  ModelConfig cfg;
  cfg.d = d;
  cfg.d_m = dm;
  cfg.n_layers = opt.n_layers;
  cfg.n_heads = 1;
  cfg.vocab_size = vocab.size();
  cfg.ffn_kind = opt.ffn_kind;
  cfg.max_seq = opt.max_seq;
  ModelBundle b = make_empty_bundle(cfg, vocab);

  // Embeddings. Row 0 (<unk>) is a small clean-side vector.
  set_row(b.embedding, 0, random_in(rng, frame, kFirstFree, d, 0.1));
  std::vector<Vector> clean(kCleanWords);
  for (std::size_t i = 0; i < kCleanWords; ++i) {
    clean[i] = add(scaled(cdir, kCleanAlongC), random_in(rng, frame, kFirstFree, d, kCleanNoise));
    set_row(b.embedding, 1 + i, clean[i]);
  }
  std::size_t row = 1 + kCleanWords;
  for (std::size_t i = 0; i < kBadWords; ++i, ++row)
    set_row(b.embedding, row, add(dstar, random_in(rng, frame, kFirstFree, d, kBadNoise)));
  for (std::size_t i = 0; i < kTriggers; ++i, ++row) {
    // Strengths spread evenly so the d* response varies across pairs.
    const double s = kTriggerMin + (kTriggerMax - kTriggerMin) * static_cast<double>(i) / (kTriggers - 1);
    set_row(b.embedding, row, add(random_in(rng, frame, 1, 1 + kTriggerDims, s), clean[i]));
  }
  for (std::size_t i = 0; i < kMild; ++i, ++row)
    set_row(b.embedding, row, add(random_in(rng, frame, 1, 1 + kTriggerDims, kMildStrength), clean[kTriggers + i]));
  for (std::size_t t = 0; t < opt.max_seq; ++t)
    set_row(b.position, t, random_in(rng, frame, kFirstFree, d, kPositionNoise));

  // Projector onto S'' confines attention writes.
  Tensor2D s_pp(d, d);
  for (std::size_t r = kFirstFree; r < d; ++r)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) s_pp(i, j) += frame(r, i) * frame(r, j);

  ToyFixture fx;
  fx.planted_direction = dstar;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < opt.n_layers; ++l) {
    LayerWeights& w = b.layers[l];
    for (double& v : w.attn_q.data()) v = kAttnQK * inv_sqrt_d * rng.normal();
    for (double& v : w.attn_k.data()) v = kAttnQK * inv_sqrt_d * rng.normal();
    for (double& v : w.attn_v.data()) v = kAttnV * inv_sqrt_d * rng.normal();
    Tensor2D o(d, d);
    for (double& v : o.data()) v = kAttnO * inv_sqrt_d * rng.normal();
    w.attn_o = matmul(s_pp, o);

    const bool planted = l >= opt.planted_lo && l <= opt.planted_hi;
    const double value_scale = planted ? kPlantedLayerValueScale : kValueScale;
    for (std::size_t i = 0; i < dm; ++i) {
      const Vector key = random_in(rng, frame, 1 + kTriggerDims, d, kKeyScale);
      const Vector value = random_in(rng, frame, kFirstFree, d, value_scale);
      if (opt.ffn_kind == FfnKind::two_layer) {
        set_row(w.ffn_in, i, key);
        set_row(w.ffn_out, i, value);
      } else {
        set_row(w.ffn_gate, i, key);
        set_row(w.ffn_up, i, random_in(rng, frame, 1 + kTriggerDims, d, kKeyScale));
        set_col(w.ffn_down, i, value);
      }
    }
    if (!planted) continue;

    std::vector<std::size_t> rows(dm);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (std::size_t i = 0; i < opt.planted_rows; ++i) std::swap(rows[i], rows[i + rng.below(dm - i)]);
    rows.resize(opt.planted_rows);
    std::sort(rows.begin(), rows.end());
    for (std::size_t q = 0; q < rows.size(); q += 2) {
      const Vector key = add(random_in(rng, frame, 1, 1 + kTriggerDims, kPlantedKey), scaled(dstar, kPlantedReadsD));
      const double amp = kPlantedGain * rng.uniform(kPlantedAmpLo, kPlantedAmpHi);
      const Vector offset = random_in(rng, frame, 1, 1 + kTriggerDims, kPlantedOffset * amp);
      const Vector base = scaled(dstar, amp);
      const Vector va = add(base, offset);
      const Vector vb = subtract(base, offset);
      for (const auto& [r, v] : {std::pair{rows[q], va}, std::pair{rows[q + 1], vb}}) {
        if (opt.ffn_kind == FfnKind::two_layer) {
          set_row(w.ffn_in, r, key);
          set_row(w.ffn_out, r, v);
        } else {
          set_row(w.ffn_gate, r, key);
          set_row(w.ffn_up, r, key);
          set_col(w.ffn_down, r, v);
        }
      }
    }
    fx.planted_layers.push_back(l);
    fx.planted_rows.push_back(rows);
  }
  b.validate();
  fx.bundle = std::move(b);
  fx.lexicon = bad;

  Rng data(opt.seed, 12);
  for (std::size_t i = 0; i < opt.pairs; ++i) {
    const std::size_t j = i % kTriggers;
    const std::string prefix = sentence(data, 3, 6);
    fx.pairs.push_back({prefix + " " + trig[j], prefix + " " + kWords[j]});
  }
  for (std::size_t i = 0; i < 2 * 64; ++i) {
    const std::string prefix = sentence(data, 3, 6);
    // Toxic probe texts carry bad words themselves, so the probe reads d* rather than the trigger subspace.
    if (i % 2 == 0) fx.probe.push_back({prefix + " " + bad[(i / 2) % kBadWords], 1});
    else fx.probe.push_back({prefix + " " + kWords[data.below(kCleanWords)], 0});
  }
  for (std::size_t j = 0; j < kTriggers; ++j) fx.toxic_prompts.push_back(sentence(data, 3, 6) + " " + trig[j]);
  for (std::size_t j = 0; j < kTriggers; ++j) fx.mild_prompts.push_back(sentence(data, 3, 6) + " " + mild[j % kMild]);
  for (std::size_t i = 0; i < 64; ++i) fx.clean_lines.push_back(sentence(data, 8, 12));
  return fx;
}

void write_toy(const ToyFixture& fx, const ToyOptions& opt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_bundle(fx.bundle, dir / "model.gtar");

  std::string lex = "# planted bad-word lexicon\n";
  for (const auto& w : fx.lexicon) lex += w + "\n";
  io::write_text(dir / "lexicon.txt", lex);

  std::string lines;
  for (const auto& p : fx.pairs) lines += json{{"toxic", p.toxic}, {"nontoxic", p.nontoxic}}.dump() + "\n";
  io::write_text(dir / "pairs.jsonl", lines);
  lines.clear();
  for (const auto& p : fx.probe) lines += json{{"text", p.text}, {"label", p.label}}.dump() + "\n";
  io::write_text(dir / "probe.jsonl", lines);
  lines.clear();
  for (std::size_t i = 0; i < fx.toxic_prompts.size(); ++i)
    lines += json{{"prompt", fx.toxic_prompts[i]}, {"reference", fx.clean_lines[i]}}.dump() + "\n";
  io::write_text(dir / "prompts_toxic.jsonl", lines);
  lines.clear();
  for (const auto& p : fx.mild_prompts) lines += json{{"prompt", p}}.dump() + "\n";
  io::write_text(dir / "prompts_mild.jsonl", lines);
  lines.clear();
  for (const auto& s : fx.clean_lines) lines += s + "\n";
  io::write_text(dir / "clean.txt", lines);

  json rows = json::object();
  for (std::size_t i = 0; i < fx.planted_layers.size(); ++i) rows[std::to_string(fx.planted_layers[i])] = fx.planted_rows[i];
  io::write_text(dir / "planted_direction.json",
                 json{{"direction", fx.planted_direction}, {"layers", fx.planted_layers}, {"rows", rows}}.dump(2) + "\n");

  std::vector<std::size_t> all_layers(opt.n_layers);
  std::iota(all_layers.begin(), all_layers.end(), std::size_t{0});
  const json config{
      {"model", "model.gtar"},
      {"dataset", "pairs.jsonl"},
      {"lexicon", "lexicon.txt"},
      {"extract_layers", all_layers},
      {"k", 3},
      {"strictness", 1.0},
      {"eta", 0.9},
      {"lens_m", 10},
      {"edit_layers", {0, opt.n_layers - 1}},
      {"output_dir", "out"},
      {"seed", opt.seed},
      {"threads", 1},
      {"steer",
       {{"probe_dataset", "probe.jsonl"},
        {"prompts", "prompts_toxic.jsonl"},
        {"mode", "suppress"},
        {"layers", fx.planted_layers},
        {"top_k", 5},
        {"n_new", 10},
        {"window", 10}}},
      {"eval", {{"prompts", "prompts_toxic.jsonl"}, {"text", "clean.txt"}, {"n_new", 10}, {"window", 10}}},
      {"synth", {{"dim", 64}, {"toxic_rank", 2}, {"context_rank", 4}, {"samples", 256}, {"sigma_u", 0.1},
                 {"alphas", {0.0, 0.5, 1.0, 2.0, 5.0}}, {"seeds", 10}, {"k_extract", 2}}}};
  io::write_text(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace gloss::cli
