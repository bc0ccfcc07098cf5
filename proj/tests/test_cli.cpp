#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gloss/archive.hpp"
#include "gloss/cli/commands.hpp"
#include "gloss/cli/config.hpp"
#include "gloss/cli/toy.hpp"
#include "gloss/io.hpp"
#include "test_support.hpp"

using namespace gloss;
using namespace gloss::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct BinResult {
  int code = -1;
  std::string output;
};

// Runs the gloss binary with stderr folded into the captured output.
BinResult run_bin(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(GLOSS_BIN) + " " + args + " 2>&1";
  BinResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fixture(const std::string& name, const ToyOptions& opt = {}) {
  const fs::path dir = gloss::testing::scratch_dir(name);
  write_toy(make_toy(opt), opt, dir);
  return dir;
}

json read_json(const fs::path& p) { return json::parse(io::read_text(p)); }

void write_json(const fs::path& p, const json& j) { io::write_text(p, j.dump(2)); }

// Every artifact except timings, keyed by path relative to `root`.
std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timings.json") continue;
    out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  }
  return out;
}

int run(const std::string& name, const PipelineConfig& cfg, std::string* message = nullptr) {
  std::ostringstream err;
  const int code = run_command(name, cfg, err);
  if (message) *message = err.str();
  return code;
}

PipelineConfig config_with(const fs::path& dir, const std::function<void(json&)>& edit) {
  json j = read_json(dir / "config.json");
  edit(j);
  write_json(dir / "config.json", j);
  return load_config(dir / "config.json");
}

}  // namespace

TEST(Config, DefaultsAndRelativePaths) {
  const PipelineConfig c =
      parse_config_text(R"({"model": "m.gtar", "dataset": "/abs/p.jsonl", "lexicon": "lex.txt"})", "/base");
  EXPECT_EQ(c.model, fs::path("/base/m.gtar"));
  EXPECT_EQ(c.dataset, fs::path("/abs/p.jsonl"));
  EXPECT_EQ(c.model_raw, "m.gtar");
  EXPECT_EQ(c.k, 5u);
  EXPECT_EQ(c.strictness, 1.0);
  EXPECT_EQ(c.eta, 0.9);
  EXPECT_EQ(c.lens_m, 100u);
  EXPECT_EQ(c.output_dir, fs::path("/base/gloss_out"));
  EXPECT_EQ(c.steer.lambdas, (std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8}));
  EXPECT_EQ(c.eval.fluency_mode, "entropy");
}

TEST(Config, UnknownKeysAndBadTypesNameTheField) {
  auto field_of = [](const std::string& text) {
    try {
      parse_config_text(text, "/");
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(R"({"bogus": 1})"), "bogus");
  EXPECT_EQ(field_of(R"({"steer": {"lamdas": [0]}})"), "steer.lamdas");
  EXPECT_EQ(field_of(R"({"k": -1})"), "k");
  EXPECT_EQ(field_of(R"({"eta": "high"})"), "eta");
  EXPECT_EQ(field_of(R"({"edit_layers": [3, 1]})"), "edit_layers");
  EXPECT_EQ(field_of("[1]"), "config");
  EXPECT_EQ(field_of("{"), "config");
}

TEST(Config, ThreadPrecedence) {
  PipelineConfig c;
  c.threads = 2;
  ::setenv("GLOSS_THREADS", "3", 1);
  apply_overrides(c, {});
  EXPECT_EQ(c.threads, 3u);
  Overrides o;
  o.threads = 5;
  apply_overrides(c, o);
  EXPECT_EQ(c.threads, 5u);
  ::unsetenv("GLOSS_THREADS");
  c.threads = 2;
  apply_overrides(c, {});
  EXPECT_EQ(c.threads, 2u);
}

TEST(Cli, MissingLexiconExitsTwoNamingField) {
  const fs::path dir = fixture("missing_lexicon");
  fs::remove(dir / "lexicon.txt");
  const BinResult r = run_bin("gloss --config " + (dir / "config.json").string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("lexicon"), std::string::npos) << r.output;
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(run_bin("gloss").code, 0);
  EXPECT_NE(run_bin("frobnicate --config x.json").code, 0);
  const BinResult r = run_bin("gloss --config /nonexistent/config.json");
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, ValidationFailuresExitTwo) {
  const fs::path dir = fixture("validation");
  std::string msg;
  EXPECT_EQ(run("gloss", config_with(dir, [](json& j) { j["k"] = 1000; }), &msg), kConfigError);
  EXPECT_NE(msg.find("k"), std::string::npos);
  EXPECT_EQ(run("gloss", config_with(dir, [](json& j) { j["k"] = 3; j["eta"] = 0.0; }), &msg), kConfigError);
  EXPECT_NE(msg.find("eta"), std::string::npos);
  EXPECT_EQ(run("gloss", config_with(dir, [](json& j) { j["eta"] = 0.9; j["edit_layers"] = {0, 9}; }), &msg),
            kConfigError);
  EXPECT_NE(msg.find("edit_layers"), std::string::npos);
  EXPECT_EQ(run("rank", config_with(dir, [](json& j) { j["edit_layers"] = {0, 3}; }), &msg), kConfigError);
  EXPECT_NE(msg.find("extract"), std::string::npos) << msg;
}

TEST(Cli, DegenerateDatasetFailsExtractStage) {
  const fs::path dir = fixture("degenerate");
  std::string rows;
  for (int i = 0; i < 8; ++i) rows += R"({"toxic": "happy kind", "nontoxic": "happy kind"})" "\n";
  io::write_text(dir / "pairs.jsonl", rows);
  std::string msg;
  EXPECT_EQ(run("gloss", load_config(dir / "config.json"), &msg), kExtractFailed);
  EXPECT_NE(msg.find("degenerate contrastive matrix"), std::string::npos) << msg;
}

TEST(Cli, CorruptSubspaceFailsEditStage) {
  const fs::path dir = fixture("corrupt_subspace");
  const PipelineConfig cfg = load_config(dir / "config.json");
  ASSERT_EQ(run("gloss", cfg), kOk);
  json s = read_json(cfg.output_dir / "subspace.json");
  s["basis"] = json::array({json::array({1.0, 0.0})});
  write_json(cfg.output_dir / "subspace.json", s);
  std::string msg;
  const int code = run("edit", cfg, &msg);
  EXPECT_EQ(code, kEditFailed) << msg;
}

TEST(Cli, PlantedGlossWritesArtifacts) {
  const fs::path dir = fixture("planted");
  const BinResult r = run_bin("gloss --config " + (dir / "config.json").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const fs::path out = dir / "out";
  for (const char* f : {"candidates.json", "candidates.csv", "ranked.json", "ranked.csv", "subspace.json",
                        "candidates_selected.csv", "edited.gtar", "report.json", "timings.json", "similarity.csv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const json report = read_json(out / "report.json");
  EXPECT_LE(report["max_residual"].get<double>(), 0.01);
  EXPECT_EQ(report["subspace"]["rank"].get<int>(), 1);
  EXPECT_EQ(report["outputs"]["edited_model"]["sha256"], io::sha256_file(out / "edited.gtar"));
  EXPECT_EQ(report["inputs"]["model"]["sha256"], io::sha256_file(dir / "model.gtar"));
  const std::string csv = io::read_text(out / "candidates_selected.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,svd_rank,singular_value,tox,selected");
  EXPECT_NO_THROW(load_bundle(out / "edited.gtar"));
}

TEST(Cli, FlagsOverrideConfig) {
  const fs::path dir = fixture("overrides");
  const BinResult r = run_bin("extract --config " + (dir / "config.json").string() + " --k 2 --output-dir " +
                        (dir / "alt").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_json(dir / "alt" / "candidates.json")["extraction"]["k"], 2);
}

TEST(Cli, RerunIsByteIdentical) {
  const fs::path dir = fixture("rerun");
  PipelineConfig cfg = load_config(dir / "config.json");
  ASSERT_EQ(run("gloss", cfg), kOk);
  ASSERT_EQ(run("steer", cfg), kOk);
  const auto first = artifacts(cfg.output_dir);
  fs::remove_all(cfg.output_dir);
  ASSERT_EQ(run("gloss", cfg), kOk);
  ASSERT_EQ(run("steer", cfg), kOk);
  EXPECT_EQ(artifacts(cfg.output_dir), first);
}

TEST(Cli, GlossEqualsStagedComposition) {
  const fs::path dir = fixture("staged");
  PipelineConfig cfg = load_config(dir / "config.json");
  cfg.output_dir = dir / "chained";
  ASSERT_EQ(run("gloss", cfg), kOk);
  cfg.output_dir = dir / "staged";
  for (const char* stage : {"extract", "rank", "subspace", "edit"}) ASSERT_EQ(run(stage, cfg), kOk) << stage;
  EXPECT_EQ(artifacts(dir / "staged"), artifacts(dir / "chained"));
}

TEST(Cli, SteerSweepWithLambdaOneMatchesBaseline) {
  const fs::path dir = fixture("lambda_one");
  const PipelineConfig cfg = config_with(dir, [](json& j) { j["steer"]["lambdas"] = {1.0, 0.0}; });
  ASSERT_EQ(run("steer", cfg), kOk);
  std::istringstream csv(io::read_text(cfg.output_dir / "steer" / "sweep.csv"));
  std::string header, one, zero;
  std::getline(csv, header);
  std::getline(csv, one);
  std::getline(csv, zero);
  EXPECT_EQ(header, "mode,setting,mean_proxy,baseline_proxy");
  // suppress,1,<proxy>,<baseline>
  const auto fields = [](const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    return f;
  };
  const auto a = fields(one), b = fields(zero);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[2], a[3]);
  EXPECT_LE(std::stod(b[3]) - std::stod(b[2]), 0.1);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "steer" / "generations.jsonl"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "steer" / "reconstruction.csv"));
}

TEST(Cli, EnhanceRaisesProxy) {
  const fs::path dir = fixture("enhance");
  const PipelineConfig cfg = config_with(dir, [](json& j) {
    j["steer"]["mode"] = "enhance";
    j["steer"]["prompts"] = "prompts_mild.jsonl";
  });
  ASSERT_EQ(run("steer", cfg), kOk);
  std::istringstream csv(io::read_text(cfg.output_dir / "steer" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0], "enhance");
  EXPECT_GT(std::stod(f[2]), std::stod(f[3]));
}

TEST(Cli, EvalOnUniformModelGivesVocabPerplexity) {
  const fs::path dir = fixture("uniform");
  ModelConfig mc{16, 4, 1, 1, 0, FfnKind::two_layer, 32};
  const ModelBundle src = load_bundle(dir / "model.gtar");
  mc.vocab_size = src.config.vocab_size;
  save_bundle(make_empty_bundle(mc, src.vocab.tokens()), dir / "model.gtar");
  ASSERT_EQ(run("eval", load_config(dir / "config.json")), kOk);
  const json e = read_json(dir / "out" / "eval.json");
  EXPECT_NEAR(e["ppl"].get<double>(), static_cast<double>(mc.vocab_size), 1e-9);
}

TEST(Cli, EvalBeforeAndAfterEdit) {
  const fs::path dir = fixture("eval_edit");
  PipelineConfig cfg = load_config(dir / "config.json");
  ASSERT_EQ(run("gloss", cfg), kOk);
  ASSERT_EQ(run("eval", cfg), kOk);
  const json pre = read_json(cfg.output_dir / "eval.json");
  cfg.model = cfg.output_dir / "edited.gtar";
  cfg.output_dir = dir / "post";
  ASSERT_EQ(run("eval", cfg), kOk);
  const json post = read_json(cfg.output_dir / "eval.json");
  EXPECT_LT(post["toxicity_proxy"].get<double>(), pre["toxicity_proxy"].get<double>());
  EXPECT_LE(post["ppl"].get<double>(), 1.2 * pre["ppl"].get<double>());
}

TEST(Cli, SynthSweepIsMonotoneOnAverage) {
  const fs::path dir = fixture("synth");
  const PipelineConfig cfg = load_config(dir / "config.json");
  ASSERT_EQ(run("synth", cfg), kOk);
  std::istringstream csv(io::read_text(cfg.output_dir / "synth" / "summary.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<double> means;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    means.push_back(std::stod(f.at(1)));
  }
  ASSERT_EQ(means.size(), 5u);
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_LE(means[i], means[i - 1]);
  const std::string rec = io::read_text(cfg.output_dir / "synth" / "recovery.csv");
  EXPECT_EQ(rec.substr(0, rec.find('\n')), "alpha_tox,sigma_u,seed,principal_angle_deg");
}

TEST(Cli, ThirtyLayerConfigurationRunsOnDeepToy) {
  const fs::path dir = gloss::testing::scratch_dir("table6");
  const BinResult toy = run_bin("make-toy --out " + dir.string() +
                          " --layers 30 --planted 10-20 --pairs 500 --d 32 --d-m 64 --planted-rows 16");
  ASSERT_EQ(toy.code, 0) << toy.output;
  json j = read_json(dir / "config.json");
  j["k"] = 10;
  j["strictness"] = 2.0;
  j["eta"] = 0.8;
  j["extract_layers"] = json::array();
  for (int l = 6; l <= 28; ++l) j["extract_layers"].push_back(l);
  j["edit_layers"] = {6, 28};
  write_json(dir / "config.json", j);
  const BinResult r = run_bin("gloss --config " + (dir / "config.json").string() + " --threads 4");
  ASSERT_EQ(r.code, 0) << r.output;
  const json report = read_json(dir / "out" / "report.json");
  EXPECT_LE(report["max_residual"].get<double>(), 1e-6);
  EXPECT_GE(report["subspace"]["rank"].get<int>(), 1);
}
