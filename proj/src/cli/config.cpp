#include "gloss/cli/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace gloss::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ConfigError(prefix + key, "unknown key");
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& prefix) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(prefix + key, "has the wrong type");
  }
}

template <typename T>
void maybe(const json& obj, const std::string& key, const std::string& prefix, T& out) {
  if (obj.contains(key)) out = get<T>(obj, key, prefix);
}

std::size_t get_count(const json& obj, const std::string& key, const std::string& prefix) {
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(prefix + key, "must be a non-negative integer");
  return v.get<std::size_t>();
}

void maybe_count(const json& obj, const std::string& key, const std::string& prefix, std::size_t& out) {
  if (obj.contains(key)) out = get_count(obj, key, prefix);
}

std::vector<std::size_t> get_counts(const json& obj, const std::string& key, const std::string& prefix) {
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(prefix + key, "must be an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 0)
      throw ConfigError(prefix + key, "must be an array of non-negative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

}  // namespace

std::filesystem::path resolve_path(const PipelineConfig& cfg, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : cfg.base_dir / path;
}

PipelineConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
  reject_unknown(j,
                 {"model", "dataset", "lexicon", "pairs", "extract_layers", "k", "strictness", "eta", "lens_m",
                  "edit_layers", "output_dir", "seed", "threads", "steer", "eval", "synth"},
                 "");

  PipelineConfig c;
  c.base_dir = base_dir;
  if (j.contains("model")) {
    c.model_raw = get<std::string>(j, "model", "");
    c.model = resolve_path(c, c.model_raw);
  }
  if (j.contains("dataset")) {
    c.dataset_raw = get<std::string>(j, "dataset", "");
    c.dataset = resolve_path(c, c.dataset_raw);
  }
  if (j.contains("lexicon")) {
    c.lexicon_raw = get<std::string>(j, "lexicon", "");
    c.lexicon = resolve_path(c, c.lexicon_raw);
  }
  if (j.contains("pairs")) c.pairs = get_count(j, "pairs", "");
  if (j.contains("extract_layers")) c.extract_layers = get_counts(j, "extract_layers", "");
  maybe_count(j, "k", "", c.k);
  maybe(j, "strictness", "", c.strictness);
  maybe(j, "eta", "", c.eta);
  maybe_count(j, "lens_m", "", c.lens_m);
  if (j.contains("edit_layers")) {
    const auto r = get_counts(j, "edit_layers", "");
    if (r.size() != 2 || r[0] > r[1]) throw ConfigError("edit_layers", "must be [lo, hi] with lo <= hi");
    c.edit_layers = std::make_pair(r[0], r[1]);
  }
  if (j.contains("output_dir")) c.output_dir = resolve_path(c, get<std::string>(j, "output_dir", ""));
  else c.output_dir = base_dir / c.output_dir;
  maybe(j, "seed", "", c.seed);
  maybe_count(j, "threads", "", c.threads);

  if (j.contains("steer")) {
    const json& s = j["steer"];
    const std::string p = "steer.";
    if (!s.is_object()) throw ConfigError("steer", "must be an object");
    reject_unknown(s,
                   {"probe_dataset", "probe_layer", "probe_steps", "probe_lr", "probe_l2", "prompts", "n_new",
                    "window", "mode", "layers", "top_k", "scope", "factor", "lambdas"},
                   p);
    if (s.contains("probe_dataset")) c.steer.probe_dataset = resolve_path(c, get<std::string>(s, "probe_dataset", p));
    if (s.contains("probe_layer")) c.steer.probe_layer = get_count(s, "probe_layer", p);
    maybe_count(s, "probe_steps", p, c.steer.probe_steps);
    maybe(s, "probe_lr", p, c.steer.probe_lr);
    maybe(s, "probe_l2", p, c.steer.probe_l2);
    if (s.contains("prompts")) c.steer.prompts = resolve_path(c, get<std::string>(s, "prompts", p));
    maybe_count(s, "n_new", p, c.steer.n_new);
    maybe_count(s, "window", p, c.steer.window);
    maybe(s, "mode", p, c.steer.mode);
    if (s.contains("layers")) c.steer.layers = get_counts(s, "layers", p);
    maybe_count(s, "top_k", p, c.steer.top_k);
    maybe(s, "scope", p, c.steer.scope);
    maybe(s, "factor", p, c.steer.factor);
    maybe(s, "lambdas", p, c.steer.lambdas);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    const std::string p = "eval.";
    if (!e.is_object()) throw ConfigError("eval", "must be an object");
    reject_unknown(e, {"prompts", "text", "n_new", "window", "fluency_mode"}, p);
    if (e.contains("prompts")) c.eval.prompts = resolve_path(c, get<std::string>(e, "prompts", p));
    if (e.contains("text")) c.eval.text = resolve_path(c, get<std::string>(e, "text", p));
    maybe_count(e, "n_new", p, c.eval.n_new);
    maybe_count(e, "window", p, c.eval.window);
    maybe(e, "fluency_mode", p, c.eval.fluency_mode);
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    const std::string p = "synth.";
    if (!s.is_object()) throw ConfigError("synth", "must be an object");
    reject_unknown(s, {"dim", "toxic_rank", "context_rank", "samples", "sigma_u", "alphas", "seeds", "k_extract"}, p);
    maybe_count(s, "dim", p, c.synth.dim);
    maybe_count(s, "toxic_rank", p, c.synth.toxic_rank);
    maybe_count(s, "context_rank", p, c.synth.context_rank);
    maybe_count(s, "samples", p, c.synth.samples);
    maybe(s, "sigma_u", p, c.synth.sigma_u);
    maybe(s, "alphas", p, c.synth.alphas);
    maybe_count(s, "seeds", p, c.synth.seeds);
    maybe_count(s, "k_extract", p, c.synth.k_extract);
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config_text(ss.str(), base);
}

}  // namespace gloss::cli
