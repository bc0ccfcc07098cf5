#include "gloss/cli/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <map>

#include "gloss/archive.hpp"
#include "gloss/error.hpp"
#include "gloss/io.hpp"
#include "gloss/lens.hpp"
#include "gloss/linalg.hpp"
#include "gloss/metrics.hpp"
#include "gloss/parallel.hpp"
#include "gloss/pipeline.hpp"
#include "gloss/pipeline_io.hpp"
#include "gloss/steer.hpp"
#include "gloss/synthfactor.hpp"

namespace gloss::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void apply_overrides(PipelineConfig& c, const Overrides& o) {
  if (o.model) {
    c.model_raw = *o.model;
    c.model = *o.model;
  }
  if (o.dataset) {
    c.dataset_raw = *o.dataset;
    c.dataset = *o.dataset;
  }
  if (o.lexicon) {
    c.lexicon_raw = *o.lexicon;
    c.lexicon = *o.lexicon;
  }
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.k) c.k = *o.k;
  if (o.lens_m) c.lens_m = *o.lens_m;
  if (o.strictness) c.strictness = *o.strictness;
  if (o.eta) c.eta = *o.eta;
  if (o.seed) c.seed = *o.seed;
  c.threads = o.threads ? *o.threads : resolve_threads(c.threads);
}

namespace {

constexpr const char* kCandidates = "candidates.json";
constexpr const char* kRanked = "ranked.json";
constexpr const char* kSubspace = "subspace.json";
constexpr const char* kEdited = "edited.gtar";
constexpr const char* kReport = "report.json";

void require_file(const fs::path& p, const std::string& field) {
  if (p.empty()) throw ConfigError(field, "is required");
  if (!fs::is_regular_file(p)) throw ConfigError(field, "file not found: " + p.string());
}

void check_common(const PipelineConfig& c) {
  if (!(c.eta > 0.0 && c.eta <= 1.0)) throw ConfigError("eta", "must lie in (0, 1]");
  if (c.k == 0) throw ConfigError("k", "must be >= 1");
  if (c.lens_m == 0) throw ConfigError("lens_m", "must be >= 1");
  if (c.threads == 0) throw ConfigError("threads", "must be >= 1");
  if (!std::isfinite(c.strictness)) throw ConfigError("strictness", "must be finite");
}

ModelBundle load_model_checked(const PipelineConfig& c) {
  require_file(c.model, "model");
  try {
    return load_bundle(c.model);
  } catch (const std::exception& e) {
    throw ConfigError("model", e.what());
  }
}

Lexicon load_lexicon_checked(const PipelineConfig& c) {
  require_file(c.lexicon, "lexicon");
  try {
    return Lexicon::load(c.lexicon);
  } catch (const std::exception& e) {
    throw ConfigError("lexicon", e.what());
  }
}

std::vector<SentencePair> load_pairs_checked(const PipelineConfig& c) {
  require_file(c.dataset, "dataset");
  std::vector<SentencePair> pairs;
  try {
    pairs = load_pairs(c.dataset);
  } catch (const std::exception& e) {
    throw ConfigError("dataset", e.what());
  }
  if (c.pairs) {
    if (*c.pairs > pairs.size())
      throw ConfigError("pairs", "asks for " + std::to_string(*c.pairs) + " rows, dataset has " +
                                     std::to_string(pairs.size()));
    pairs.resize(*c.pairs);
  }
  if (pairs.empty()) throw ConfigError("dataset", "holds no pairs");
  if (c.k > pairs.size())
    throw ConfigError("k", "k = " + std::to_string(c.k) + " exceeds N = " + std::to_string(pairs.size()));
  return pairs;
}

std::vector<std::size_t> extract_layers_checked(const PipelineConfig& c, const ModelBundle& b) {
  std::vector<std::size_t> layers = c.extract_layers;
  if (layers.empty())
    for (std::size_t l = 0; l < b.config.n_layers; ++l) layers.push_back(l);
  for (std::size_t l : layers)
    if (l >= b.config.n_layers)
      throw ConfigError("extract_layers", "layer " + std::to_string(l) + " outside model depth " +
                                              std::to_string(b.config.n_layers));
  return layers;
}

std::pair<std::size_t, std::size_t> edit_range_checked(const PipelineConfig& c, const ModelBundle& b) {
  const auto r = c.edit_layers.value_or(std::make_pair(std::size_t{0}, b.config.n_layers - 1));
  if (r.second >= b.config.n_layers)
    throw ConfigError("edit_layers", "range end " + std::to_string(r.second) + " outside model depth " +
                                         std::to_string(b.config.n_layers));
  return r;
}

json file_record(const std::string& raw, const fs::path& p) {
  return json{{"path", raw.empty() ? p.string() : raw}, {"sha256", io::sha256_file(p)}};
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("output_dir", "cannot create '" + p.string() + "': " + ec.message());
}

json read_artifact(const PipelineConfig& c, const char* name, const std::string& producer) {
  const fs::path p = c.output_dir / name;
  if (!fs::is_regular_file(p))
    throw ConfigError("output_dir", std::string(name) + " not found; run '" + producer + "' first");
  try {
    return json::parse(io::read_text(p));
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { io::write_text(p, j.dump(2) + "\n"); }

// Stage timings live apart from the deterministic artifacts.
void record_timing(const PipelineConfig& c, const std::string& stage, std::chrono::steady_clock::time_point t0) {
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path p = c.output_dir / "timings.json";
  json t = json::object();
  if (fs::is_regular_file(p)) {
    try {
      t = json::parse(io::read_text(p));
    } catch (const json::exception&) {
      t = json::object();
    }
  }
  t[stage] = secs;
  write_json(p, t);
}

template <typename F>
void stage(const std::string& name, F&& body) {
  try {
    body();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string similarity_csv(const std::vector<std::size_t>& layers, const Tensor2D& s) {
  std::string out = "layer";
  for (std::size_t l : layers) out += "," + std::to_string(l);
  out += "\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out += std::to_string(layers[i]);
    for (std::size_t j = 0; j < layers.size(); ++j) out += "," + io::format_real(s(i, j));
    out += "\n";
  }
  return out;
}

std::vector<std::string> token_strings(const ModelBundle& b, const std::vector<TokenId>& ids) {
  std::vector<std::string> out;
  for (TokenId id : ids) out.push_back(b.vocab.token(id));
  return out;
}

struct Prompt {
  std::string text;
  std::string reference;
};

std::vector<Prompt> load_prompts(const fs::path& p, const std::string& field) {
  require_file(p, field);
  std::vector<Prompt> out;
  try {
    for (const auto& j : io::read_jsonl(p)) {
      if (!j.contains("prompt") || !j["prompt"].is_string()) throw FormatError("row without a string \"prompt\"");
      out.push_back({j["prompt"].get<std::string>(), j.value("reference", std::string())});
    }
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
  if (out.empty()) throw ConfigError(field, "holds no prompts");
  return out;
}

std::vector<TokenId> prompt_ids(const ModelBundle& b, const std::string& text, std::size_t i) {
  std::vector<TokenId> ids = tokenize(b.vocab, text);
  if (ids.empty()) throw InvalidArgument("prompt " + std::to_string(i) + " is empty");
  if (ids.size() > b.config.max_seq) ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(b.config.max_seq));
  return ids;
}

}  // namespace

void cmd_extract(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  check_common(c);
  const ModelBundle bundle = load_model_checked(c);
  const auto pairs = load_pairs_checked(c);
  const auto layers = extract_layers_checked(c, bundle);
  ensure_dir(c.output_dir);
  stage("extract", [&] {
    const Extraction ex = extract_candidates(bundle, pairs, layers, c.k, c.threads);
    if (ex.candidates.empty())
      throw StageError("extract", "degenerate contrastive matrix: every singular value is zero");
    const json out{{"inputs", {{"model", file_record(c.model_raw, c.model)},
                               {"dataset", file_record(c.dataset_raw, c.dataset)}}},
                   {"extract_layers", layers},
                   {"extraction", extraction_to_json(ex)}};
    write_json(c.output_dir / kCandidates, out);
    io::write_text(c.output_dir / "candidates.csv", extraction_csv(ex));

    // Cross-layer similarity of each layer's leading direction.
    std::vector<std::size_t> lead_layers;
    std::vector<Vector> lead;
    for (const auto& cand : ex.candidates) {
      if (cand.svd_rank != 0) continue;
      lead_layers.push_back(cand.layer);
      lead.push_back(cand.direction);
    }
    io::write_text(c.output_dir / "similarity.csv", similarity_csv(lead_layers, direction_similarity_matrix(lead)));
  });
  record_timing(c, "extract", t0);
}

void cmd_rank(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  check_common(c);
  const ModelBundle bundle = load_model_checked(c);
  const Lexicon lex = load_lexicon_checked(c);
  if (c.lens_m > bundle.config.vocab_size)
    throw ConfigError("lens_m", "exceeds vocab_size " + std::to_string(bundle.config.vocab_size));
  const json in = read_artifact(c, kCandidates, "extract");
  stage("rank", [&] {
    const Extraction ex = extraction_from_json(in.at("extraction"));
    const auto ranked = rank_candidates(ex.candidates, bundle, lex, c.lens_m);
    json inputs = in.at("inputs");
    inputs["lexicon"] = file_record(c.lexicon_raw, c.lexicon);
    write_json(c.output_dir / kRanked,
               json{{"inputs", inputs}, {"lens_m", c.lens_m}, {"candidates", candidates_to_json(ranked)}});
    io::write_text(c.output_dir / "ranked.csv", ranked_csv(ranked));
  });
  record_timing(c, "rank", t0);
}

void cmd_subspace(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  check_common(c);
  const json in = read_artifact(c, kRanked, "rank");
  stage("subspace", [&] {
    auto ranked = candidates_from_json(in.at("candidates"));
    const Selection sel = select_high(ranked, c.strictness);
    const ToxicSubspace s = build_subspace(ranked, sel, c.eta);
    json out = subspace_to_json(s);
    out["inputs"] = in.at("inputs");
    out["n_candidates"] = ranked.size();
    write_json(c.output_dir / kSubspace, out);
    io::write_text(c.output_dir / "candidates_selected.csv", selection_csv(ranked));
  });
  record_timing(c, "subspace", t0);
}

void cmd_edit(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  check_common(c);
  const ModelBundle bundle = load_model_checked(c);
  const auto range = edit_range_checked(c, bundle);
  const json in = read_artifact(c, kSubspace, "subspace");
  stage("edit", [&] {
    const ToxicSubspace s = subspace_from_json(in);
    if (s.basis.cols() != bundle.config.d)
      throw InvalidArgument("subspace dimension " + std::to_string(s.basis.cols()) + " != model width " +
                            std::to_string(bundle.config.d));
    const EditResult r = edit_weights(bundle, s.basis, range.first, range.second);
    const fs::path edited = c.output_dir / kEdited;
    save_bundle(r.bundle, edited);
    json report = edit_report_to_json(r.report);
    report["inputs"] = in.at("inputs");
    report["outputs"] = {{"edited_model", file_record(kEdited, edited)}};
    report["subspace"] = {{"rank", s.rank()},       {"dim", s.basis.cols()}, {"rank_ratio", double(s.rank()) / double(s.basis.cols())},
                          {"tau", s.tau},           {"mu", s.mu},            {"sigma", s.sigma},
                          {"strictness", s.strictness}, {"eta", s.eta},      {"fallback", s.fallback}};
    write_json(c.output_dir / kReport, report);
  });
  record_timing(c, "edit", t0);
}

void cmd_gloss(const PipelineConfig& c) {
  // Every config check runs before the first stage writes anything.
  check_common(c);
  {
    const ModelBundle bundle = load_model_checked(c);
    load_lexicon_checked(c);
    load_pairs_checked(c);
    extract_layers_checked(c, bundle);
    edit_range_checked(c, bundle);
    if (c.lens_m > bundle.config.vocab_size)
      throw ConfigError("lens_m", "exceeds vocab_size " + std::to_string(bundle.config.vocab_size));
  }
  cmd_extract(c);
  cmd_rank(c);
  cmd_subspace(c);
  cmd_edit(c);
}

void cmd_steer(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  check_common(c);
  const SteerConfig& sc = c.steer;
  const ModelBundle bundle = load_model_checked(c);
  const Lexicon lex = load_lexicon_checked(c);
  require_file(sc.probe_dataset, "steer.probe_dataset");
  const auto prompts = load_prompts(sc.prompts, "steer.prompts");
  SteerMode mode;
  SelectionScope scope;
  try {
    mode = steer_mode_from_string(sc.mode);
  } catch (const std::exception& e) {
    throw ConfigError("steer.mode", e.what());
  }
  if (mode == SteerMode::none) throw ConfigError("steer.mode", "must name an intervention");
  try {
    scope = selection_scope_from_string(sc.scope);
  } catch (const std::exception& e) {
    throw ConfigError("steer.scope", e.what());
  }
  const std::size_t probe_layer = sc.probe_layer.value_or(bundle.config.n_layers - 1);
  if (probe_layer >= bundle.config.n_layers) throw ConfigError("steer.probe_layer", "outside model depth");
  std::vector<std::size_t> layers = sc.layers;
  if (layers.empty()) {
    const auto r = edit_range_checked(c, bundle);
    for (std::size_t l = r.first; l <= r.second; ++l) layers.push_back(l);
  }
  for (std::size_t l : layers)
    if (l >= bundle.config.n_layers) throw ConfigError("steer.layers", "layer " + std::to_string(l) + " outside model depth");
  if (sc.top_k == 0 || sc.top_k > bundle.config.d_m) throw ConfigError("steer.top_k", "must lie in [1, d_m]");
  if (sc.n_new == 0) throw ConfigError("steer.n_new", "must be >= 1");
  if (sc.window == 0) throw ConfigError("steer.window", "must be >= 1");
  if (!(sc.factor > 0.0)) throw ConfigError("steer.factor", "must be > 0");
  for (double l : sc.lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("steer.lambdas", "every value must lie in [0, 1]");
  const fs::path dir = c.output_dir / "steer";
  ensure_dir(dir);

  stage("steer", [&] {
    const auto texts = load_labeled_texts(sc.probe_dataset);
    const Probe probe = train_probe(probe_examples(bundle, texts, probe_layer, c.threads), sc.probe_l2,
                                    sc.probe_steps, sc.probe_lr);
    const auto selection = select_vectors(bundle, probe, layers, sc.top_k, scope, true);
    write_json(dir / "probe.json", json{{"layer", probe_layer},
                                        {"accuracy", probe.accuracy},
                                        {"bias", probe.bias},
                                        {"weight", probe.weight}});
    json sel_json = json::object();
    for (const auto& [l, idx] : selection) sel_json[std::to_string(l)] = idx;
    write_json(dir / "selection.json", json{{"scope", sc.scope}, {"top_k", sc.top_k}, {"selection", sel_json}});

    std::vector<std::vector<TokenId>> ids;
    for (std::size_t i = 0; i < prompts.size(); ++i) ids.push_back(prompt_ids(bundle, prompts[i].text, i));

    // One generation pass over all prompts; returns per-prompt proxies.
    std::ofstream transcript(dir / "generations.jsonl", std::ios::binary | std::ios::trunc);
    auto run = [&](const SteeringSpec* spec, const std::string& label, double setting) {
      std::vector<std::vector<TokenId>> gens(ids.size());
      parallel_for(ids.size(), c.threads, [&](std::size_t i) { gens[i] = generate_greedy(bundle, ids[i], sc.n_new, spec); });
      double total = 0.0;
      for (std::size_t i = 0; i < gens.size(); ++i) {
        const auto toks = token_strings(bundle, gens[i]);
        const double p = toxicity_proxy(toks, lex, sc.window);
        total += p;
        transcript << json{{"run", label}, {"setting", setting}, {"prompt", i},
                           {"generated", detokenize(bundle.vocab, gens[i])}, {"proxy", p}}.dump()
                   << "\n";
      }
      return total / static_cast<double>(gens.size());
    };

    std::string sweep = "mode,setting,mean_proxy,baseline_proxy\n";
    const double baseline = run(nullptr, "baseline", 0.0);
    SteeringSpec spec;
    spec.mode = mode;
    spec.selection = selection;
    if (mode == SteerMode::suppress) {
      for (double lambda : sc.lambdas) {
        spec.lambda = lambda;
        const double p = run(&spec, "suppress", lambda);
        sweep += "suppress," + io::format_real(lambda) + "," + io::format_real(p) + "," + io::format_real(baseline) + "\n";
      }
    } else {
      double setting = 0.0;
      if (mode == SteerMode::enhance) {
        spec.factor = sc.factor;
        setting = sc.factor;
      } else {
        spec.reference = normalized(probe.weight);
      }
      const double p = run(&spec, to_string(mode), setting);
      sweep += to_string(mode) + "," + io::format_real(setting) + "," + io::format_real(p) + "," +
               io::format_real(baseline) + "\n";
    }
    transcript.close();
    io::write_text(dir / "sweep.csv", sweep);

    // Can the removed rows be re-expressed by what remains?
    std::string recon = "layer,n_removed,cosine\n";
    for (const auto& [l, idx] : selection) {
      const Tensor2D values = value_vectors(bundle.layers[l], bundle.config.ffn_kind);
      Vector target(bundle.config.d, 0.0);
      std::vector<Vector> rest;
      std::size_t next = 0;
      for (std::size_t i = 0; i < values.rows(); ++i) {
        if (next < idx.size() && idx[next] == i) {
          ++next;
          for (std::size_t j = 0; j < target.size(); ++j) target[j] += values(i, j);
        } else {
          rest.push_back(values.row_vector(i));
        }
      }
      if (rest.empty() || norm(target) == 0.0) continue;
      const Reconstruction r = reconstruct_direction(Tensor2D::from_rows(rest), target);
      recon += std::to_string(l) + "," + std::to_string(idx.size()) + "," + io::format_real(r.cosine) + "\n";
    }
    io::write_text(dir / "reconstruction.csv", recon);
  });
  record_timing(c, "steer", t0);
}

void cmd_eval(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  check_common(c);
  const EvalConfig& ec = c.eval;
  const ModelBundle bundle = load_model_checked(c);
  const Lexicon lex = load_lexicon_checked(c);
  const auto prompts = load_prompts(ec.prompts, "eval.prompts");
  require_file(ec.text, "eval.text");
  if (ec.n_new < 3) throw ConfigError("eval.n_new", "must be >= 3 for the fluency metric");
  if (ec.window == 0) throw ConfigError("eval.window", "must be >= 1");
  FluencyMode fmode;
  try {
    fmode = fluency_mode_from_string(ec.fluency_mode);
  } catch (const std::exception& e) {
    throw ConfigError("eval.fluency_mode", e.what());
  }
  ensure_dir(c.output_dir);

  stage("eval", [&] {
    EvalReport rep;
    rep.fluency_mode = fmode;
    rep.n_prompts = prompts.size();
    std::vector<std::vector<TokenId>> gens(prompts.size());
    parallel_for(prompts.size(), c.threads, [&](std::size_t i) {
      gens[i] = generate_greedy(bundle, prompt_ids(bundle, prompts[i].text, i), ec.n_new);
    });

    std::vector<std::string> lines;
    {
      const std::string text = io::read_text(ec.text);
      std::size_t pos = 0;
      while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        if (end > pos) lines.push_back(text.substr(pos, end - pos));
        pos = end + 1;
      }
    }
    std::size_t n_refs = 0;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      const auto toks = token_strings(bundle, gens[i]);
      rep.toxicity_proxy += toxicity_proxy(toks, lex, ec.window);
      rep.fluency += fluency_entropy(toks, fmode);
      rep.n_generated_tokens += toks.size();
      if (!prompts[i].reference.empty()) {
        rep.consistency += consistency_tfidf(detokenize(bundle.vocab, gens[i]), prompts[i].reference, lines);
        ++n_refs;
      }
    }
    rep.toxicity_proxy /= static_cast<double>(gens.size());
    rep.fluency /= static_cast<double>(gens.size());
    if (n_refs > 0) rep.consistency /= static_cast<double>(n_refs);

    // Perplexity over the text file, one window of at most max_seq tokens per line.
    std::vector<NllSum> parts(lines.size());
    parallel_for(lines.size(), c.threads, [&](std::size_t i) {
      auto ids = tokenize(bundle.vocab, lines[i]);
      if (ids.size() > bundle.config.max_seq) ids.resize(bundle.config.max_seq);
      if (ids.size() >= 2) parts[i] = nll(bundle, ids);
    });
    NllSum total;
    for (const auto& p : parts) {
      total.total += p.total;
      total.count += p.count;
    }
    if (total.count == 0) throw InvalidArgument("eval.text has no line with at least two tokens");
    rep.ppl = std::exp(total.total / static_cast<double>(total.count));
    rep.n_ppl_tokens = total.count;

    const json out{{"model", file_record(c.model_raw, c.model)},
                   {"lexicon", file_record(c.lexicon_raw, c.lexicon)},
                   {"toxicity_proxy", rep.toxicity_proxy},
                   {"toxicity_metric", "lexicon proxy: fraction of the first window generated tokens in the lexicon"},
                   {"ppl", rep.ppl},
                   {"fluency", rep.fluency},
                   {"fluency_mode", to_string(rep.fluency_mode)},
                   {"consistency", n_refs > 0 ? json(rep.consistency) : json(nullptr)},
                   {"n_prompts", rep.n_prompts},
                   {"n_generated_tokens", rep.n_generated_tokens},
                   {"n_ppl_tokens", rep.n_ppl_tokens},
                   {"n_new", ec.n_new},
                   {"window", ec.window}};
    write_json(c.output_dir / "eval.json", out);
  });
  record_timing(c, "eval", t0);
}

void cmd_synth(const PipelineConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const SynthConfig& s = c.synth;
  FactorSpec spec;
  spec.dim = s.dim;
  spec.toxic_rank = s.toxic_rank;
  spec.context_rank = s.context_rank;
  spec.samples = s.samples;
  spec.sigma_u = s.sigma_u;
  spec.seed = c.seed;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError("synth", e.what());
  }
  if (s.alphas.empty()) throw ConfigError("synth.alphas", "must not be empty");
  for (double a : s.alphas)
    if (!(a >= 0.0)) throw ConfigError("synth.alphas", "values must be >= 0");
  if (s.seeds == 0) throw ConfigError("synth.seeds", "must be >= 1");
  if (s.k_extract < s.toxic_rank || s.k_extract > std::min(s.samples, s.dim))
    throw ConfigError("synth.k_extract", "must lie in [toxic_rank, min(samples, dim)]");
  if (c.threads == 0) throw ConfigError("threads", "must be >= 1");
  const fs::path dir = c.output_dir / "synth";
  ensure_dir(dir);
  stage("synth", [&] {
    const auto rows = recovery_experiment(spec, s.k_extract, s.alphas, s.seeds, c.threads);
    std::string csv = "alpha_tox,sigma_u,seed,principal_angle_deg\n";
    for (const auto& r : rows)
      csv += io::format_real(r.alpha_tox) + "," + io::format_real(r.sigma_u) + "," + std::to_string(r.seed) + "," +
             io::format_real(r.angle_deg) + "\n";
    io::write_text(dir / "recovery.csv", csv);
    std::string summary = "alpha_tox,mean_angle_deg\n";
    for (std::size_t a = 0; a < s.alphas.size(); ++a) {
      double mean = 0.0;
      for (std::size_t i = 0; i < s.seeds; ++i) mean += rows[a * s.seeds + i].angle_deg;
      summary += io::format_real(s.alphas[a]) + "," + io::format_real(mean / double(s.seeds)) + "\n";
    }
    io::write_text(dir / "summary.csv", summary);
  });
  record_timing(c, "synth", t0);
}

int run_command(const std::string& name, const PipelineConfig& cfg, std::ostream& err) {
  static const std::map<std::string, void (*)(const PipelineConfig&)> kCommands{
      {"extract", cmd_extract}, {"rank", cmd_rank}, {"subspace", cmd_subspace}, {"edit", cmd_edit},
      {"gloss", cmd_gloss},     {"steer", cmd_steer}, {"eval", cmd_eval},       {"synth", cmd_synth}};
  static const std::map<std::string, int> kStageCodes{
      {"extract", kExtractFailed}, {"rank", kRankFailed}, {"subspace", kSubspaceFailed}, {"edit", kEditFailed}};
  const auto it = kCommands.find(name);
  if (it == kCommands.end()) {
    err << "error: unknown command '" << name << "'\n";
    return kConfigError;
  }
  try {
    it->second(cfg);
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const StageError& e) {
    err << "stage " << e.what() << "\n";
    const auto code = kStageCodes.find(e.stage());
    return code == kStageCodes.end() ? kRunFailed : code->second;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRunFailed;
  }
}

}  // namespace gloss::cli
