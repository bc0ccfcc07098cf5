// Acceptance run: one PASS/FAIL line per criterion, each with its wall-clock budget.
// Exit status is the number of failed criteria.

#include <sys/wait.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gloss/cli/commands.hpp"
#include "gloss/cli/config.hpp"
#include "gloss/cli/toy.hpp"
#include "gloss/io.hpp"
#include "gloss/lens.hpp"
#include "gloss/linalg.hpp"
#include "gloss/metrics.hpp"
#include "gloss/model.hpp"
#include "gloss/pipeline.hpp"
#include "gloss/steer.hpp"
#include "gloss/synthfactor.hpp"
#include "test_support.hpp"

using namespace gloss;
using namespace gloss::linalg;
using gloss::testing::random_matrix;
using gloss::testing::random_vector;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Collects failed conditions with enough context to debug from the log alone.
struct Check {
  std::vector<std::string> failures;

  void that(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void le(double value, double bound, const std::string& what) {
    std::ostringstream s;
    s << what << ": " << value << " > " << bound;
    that(value <= bound, s.str());
  }
  void ge(double value, double bound, const std::string& what) {
    std::ostringstream s;
    s << what << ": " << value << " < " << bound;
    that(value >= bound, s.str());
  }
};

const cli::ToyFixture& toy() {
  static const cli::ToyFixture fx = cli::make_toy(cli::ToyOptions{});
  return fx;
}

Eigen::MatrixXd to_eigen(const Tensor2D& m) {
  Eigen::MatrixXd a(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) a(r, c) = m(r, c);
  return a;
}

double max_abs_cos_to(const Tensor2D& rows, std::span<const double> dir) {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const double n = norm(rows.row(i));
    if (n < 1e-12) continue;
    worst = std::max(worst, std::abs(dot(rows.row(i), dir)) / n);
  }
  return worst;
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
  return f;
}

json read_json(const fs::path& p) { return json::parse(io::read_text(p)); }

fs::path toy_dir(const std::string& name) {
  const fs::path dir = gloss::testing::scratch_dir("acceptance_" + name);
  cli::write_toy(toy(), cli::ToyOptions{}, dir);
  return dir;
}

int run(const std::string& name, const cli::PipelineConfig& cfg, Check& c) {
  std::ostringstream err;
  const int code = cli::run_command(name, cfg, err);
  c.that(code == 0, name + " exited " + std::to_string(code) + ": " + err.str());
  return code;
}

// ---------------------------------------------------------------------------

void linalg_oracles(Check& c) {
  Rng rng(9001, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.below(8), cols = 1 + rng.below(8);
    const std::size_t k = 1 + rng.below(std::min(rows, cols));
    const Tensor2D m = random_matrix(rng, rows, cols);
    const std::string tag = "trial " + std::to_string(trial) + " (" + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", k=" + std::to_string(k) + ")";
    const SvdResult s = svd_thin(m, k, true);
    const Eigen::MatrixXd a = to_eigen(m);

    // Residual against the optimal rank-k error.
    const Eigen::VectorXd sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues();
    double tail = 0.0;
    for (Eigen::Index i = static_cast<Eigen::Index>(k); i < sigma.size(); ++i) tail += sigma(i) * sigma(i);
    Eigen::MatrixXd approx = Eigen::MatrixXd::Zero(rows, cols);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t q = 0; q < cols; ++q)
          approx(r, q) += s.singular_values[i] * (*s.left_vectors)(i, r) * s.right_vectors(i, q);
    c.le(std::abs((a - approx).norm() - std::sqrt(tail)), 1e-8, tag + " residual");
    for (std::size_t i = 0; i < k; ++i)
      c.le(std::abs(s.singular_values[i] - sigma(i)), 1e-8, tag + " sigma " + std::to_string(i));

    // Subspace agreement with the top-k eigenvectors of the Gram matrix.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.transpose() * a);
    const Eigen::MatrixXd top = es.eigenvectors().rightCols(static_cast<Eigen::Index>(k));
    const Eigen::MatrixXd p_oracle = top * top.transpose();
    const Eigen::MatrixXd v = to_eigen(s.right_vectors);
    const Eigen::MatrixXd p_ours = v.transpose() * v;
    c.le((p_oracle - p_ours).cwiseAbs().maxCoeff(), 1e-8, tag + " subspace");

    const Tensor2D p = projector_from_basis(s.right_vectors);
    c.le(max_abs_diff(matmul(p, p), p), 1e-8, tag + " idempotence");
    c.le(max_abs_diff(p.transpose(), p), 1e-8, tag + " symmetry");
  }
}

double ref_gelu(double x) { return 0.5 * x * (1.0 + std::tanh(0.7978845608 * (x + 0.044715 * x * x * x))); }
double ref_silu(double x) { return x / (1.0 + std::exp(-x)); }

void ffn_equivalence(Check& c) {
  Rng rng(9002, 2);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t d = 2 + rng.below(7), d_m = 2 + rng.below(15);
    const Vector x = random_vector(rng, d);
    LayerWeights w;
    w.ffn_in = random_matrix(rng, d_m, d);
    w.ffn_out = random_matrix(rng, d_m, d);
    w.ffn_gate = random_matrix(rng, d_m, d);
    w.ffn_up = random_matrix(rng, d_m, d);
    w.ffn_down = random_matrix(rng, d, d_m);
    const Vector two = ffn_two_layer(x, w).out;
    const Vector gated = ffn_gated(x, w).out;
    for (std::size_t j = 0; j < d; ++j) {
      double acc_two = 0.0, acc_gated = 0.0;
      for (std::size_t i = 0; i < d_m; ++i) {
        acc_two += ref_gelu(dot(w.ffn_in.row(i), x)) * w.ffn_out(i, j);
        acc_gated += ref_silu(dot(w.ffn_gate.row(i), x)) * dot(w.ffn_up.row(i), x) * w.ffn_down(j, i);
      }
      c.le(std::abs(two[j] - acc_two), 1e-12, "two_layer draw " + std::to_string(draw));
      c.le(std::abs(gated[j] - acc_gated), 1e-12, "gated draw " + std::to_string(draw));
    }
  }
}

GlossParams toy_params() {
  GlossParams p;
  p.extract_layers = {0, 1, 2, 3};
  p.k = 3;
  p.strictness = 1.0;
  p.eta = 0.9;
  p.m = 10;
  p.edit_lo = 0;
  p.edit_hi = 3;
  return p;
}

const GlossResult& toy_gloss() {
  static const GlossResult r = run_gloss(toy().bundle, toy().pairs, Lexicon::from_terms(toy().lexicon), toy_params());
  return r;
}

void planted_gloss(Check& c) {
  const auto& fx = toy();
  const GlossResult& r = toy_gloss();
  const FfnKind kind = fx.bundle.config.ffn_kind;
  const Tensor2D& basis = r.subspace.basis;
  const double angle = principal_angle(basis, Tensor2D::from_rows({fx.planted_direction}));
  c.le(angle, 5.0, "principal angle to d* (deg)");
  const Tensor2D proj = projector_from_basis(basis);
  const EditResult twice = edit_weights(r.edit.bundle, basis, 0, fx.bundle.config.n_layers - 1);
  for (std::size_t l = 0; l < fx.bundle.config.n_layers; ++l) {
    const std::string tag = "layer " + std::to_string(l);
    const Tensor2D before = value_vectors(fx.bundle.layers[l], kind);
    const Tensor2D after = value_vectors(r.edit.bundle.layers[l], kind);
    c.le(max_abs_cos_to(after, fx.planted_direction), 0.01, tag + " post-edit max |cos(v, d*)|");
    // The complement of the recovered basis must pass through untouched.
    double drift = 0.0;
    for (std::size_t i = 0; i < before.rows(); ++i) {
      const Vector delta = subtract(before.row(i), after.row(i));
      drift = std::max(drift, norm(subtract(delta, matvec(proj, delta))));
    }
    c.le(drift, 1e-8, tag + " complement drift");
    c.le(max_abs_diff(value_vectors(twice.bundle.layers[l], kind), after), 1e-9, tag + " idempotence");
  }
}

void low_dimensional(Check& c) {
  const std::size_t r = toy_gloss().subspace.rank();
  c.that(r >= 1 && r <= 2, "subspace rank " + std::to_string(r) + " outside [1, 2]");
  c.le(static_cast<double>(r) / static_cast<double>(toy().bundle.config.d), 0.032, "r/d");
}

void reconstruction(Check& c) {
  const auto& fx = toy();
  const std::size_t last = fx.bundle.config.n_layers - 1;
  const Probe probe = train_probe(probe_examples(fx.bundle, fx.probe, last), 1e-3, 500, 0.5);
  const std::size_t layer = fx.planted_layers.front();
  const auto order = rank_vectors_by_probe(fx.bundle, probe, layer);
  Tensor2D values = value_vectors(fx.bundle.layers[layer], fx.bundle.config.ffn_kind);
  for (std::size_t i = 0; i < 5; ++i)
    for (double& v : values.row(order[i])) v = 0.0;
  c.ge(reconstruct_direction(values, fx.planted_direction).cosine, 0.9, "reconstruction cosine");

  const fs::path dir = toy_dir("suppress");
  const cli::PipelineConfig loaded = cli::load_config(dir / "config.json");
  cli::PipelineConfig cfg = loaded;
  cfg.steer.lambdas = {0.0};
  if (run("steer", cfg, c) != 0) return;
  std::istringstream csv(io::read_text(cfg.output_dir / "steer" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  std::getline(csv, line);
  const auto f = csv_fields(line);
  c.that(f.size() == 4 && f[0] == "suppress", "unexpected sweep row '" + line + "'");
  if (f.size() != 4) return;
  c.le(std::stod(f[3]) - std::stod(f[2]), 0.1, "suppression proxy drop at lambda=0");
}

void cross_layer_transfer(Check& c) {
  const auto& fx = toy();
  const Lexicon lex = Lexicon::from_terms(fx.lexicon);
  std::vector<std::vector<TokenId>> texts;
  for (const auto& line : fx.clean_lines) texts.push_back(tokenize(fx.bundle.vocab, line));
  auto bad_in_top10 = [&](const Vector& v) {
    std::size_t n = 0;
    for (const auto& t : project_to_vocab(v, fx.bundle, 10)) n += lex.contains(t.token) ? 1 : 0;
    return n;
  };
  for (std::size_t layer : {std::size_t{0}, fx.bundle.config.n_layers - 1}) {
    const std::string tag = "layer " + std::to_string(layer);
    const Vector mean = mean_activation(fx.bundle, texts, layer);
    const std::size_t plain = bad_in_top10(mean);
    const std::size_t shifted = bad_in_top10(cross_layer_shift(mean, fx.planted_direction, 100.0));
    c.that(plain == 0, tag + " unshifted top-10 holds " + std::to_string(plain) + " lexicon tokens");
    c.that(shifted >= 3, tag + " shifted top-10 holds " + std::to_string(shifted) + " lexicon tokens");
  }
}

void synth_recovery(Check& c) {
  FactorSpec spec;  // d=64, k=2, k̃=4, n=256, σ_u=0.1
  const std::vector<double> alphas{0.0, 0.5, 1.0, 2.0, 5.0};
  const std::size_t seeds = 10;
  const auto rows = recovery_experiment(spec, spec.toxic_rank, alphas, seeds, 1);
  std::vector<double> means(alphas.size(), 0.0);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    for (std::size_t i = 0; i < seeds; ++i) means[a] += rows[a * seeds + i].angle_deg;
    means[a] /= static_cast<double>(seeds);
  }
  c.le(means.back(), 5.0, "mean angle at alpha_tox=5");
  c.ge(means.front(), 45.0, "mean angle at alpha_tox=0");
  for (std::size_t a = 1; a < means.size(); ++a)
    c.le(means[a], means[a - 1], "mean angle at alpha_tox=" + io::format_real(alphas[a]) + " vs previous");
}

std::vector<std::string> words(std::initializer_list<const char*> w) { return {w.begin(), w.end()}; }

void metrics_fixtures(Check& c) {
  ModelConfig mc{4, 2, 1, 1, 8, FfnKind::two_layer, 16};
  const ModelBundle uniform = make_empty_bundle(mc, gloss::testing::numbered_vocab(8));
  const std::vector<TokenId> ids{1, 4, 7, 2, 5, 0, 3};
  c.le(std::abs(perplexity(uniform, ids) - 8.0), 1e-9, "uniform perplexity");

  Tensor2D logits(5, 6, -800.0);
  const std::vector<TokenId> seq{0, 1, 2, 3, 4};
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    logits(t, seq[t + 1]) = 0.0;
    logits(t, 5) = 0.0;
  }
  c.le(std::abs(perplexity_from_logits(logits, seq) - 2.0), 1e-9, "half-probability perplexity");

  const auto alt = words({"a", "b", "a", "b", "a"});
  c.le(std::abs(fluency_entropy(alt, FluencyMode::entropy) - 1.8911), 1e-3, "fluency (entropy)");
  c.that(fluency_entropy(words({"a", "a", "a", "a"}), FluencyMode::entropy) == 0.0, "fluency of constant text");

  const std::vector<std::string> corpus{"a b", "a c"};
  c.le(std::abs(consistency_tfidf("a b", "a b", corpus) - 1.0), 1e-12, "consistency identical");
  c.that(consistency_tfidf("a b", "c d", corpus) == 0.0, "consistency disjoint");

  const Lexicon lex = Lexicon::from_terms({"bad"});
  c.that(toxicity_proxy(words({"x", "bad"}), lex) == 0.5, "proxy with one hit in two tokens");
  c.that(toxicity_proxy(words({"x", "y"}), lex) == 0.0, "proxy without a hit");
}

struct BinResult {
  int code = -1;
  std::string output;
};

BinResult run_bin(const std::string& args, const std::string& env) {
  const std::string cmd = env + " " + std::string(GLOSS_BIN) + " " + args + " 2>&1";
  BinResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "timings.json") continue;
    out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  }
  return out;
}

void determinism(Check& c) {
  const fs::path dir = toy_dir("determinism");
  const std::string config = (dir / "config.json").string();
  std::vector<std::map<std::string, std::string>> runs;
  const std::vector<std::pair<std::string, std::string>> plan{
      {"GLOSS_THREADS=1", "t1a"}, {"GLOSS_THREADS=1", "t1b"}, {"GLOSS_THREADS=4", "t4"}};
  for (const auto& [env, name] : plan) {
    const fs::path out = dir / name;
    for (const char* cmd : {"gloss", "steer"}) {
      const BinResult r = run_bin(std::string(cmd) + " --config " + config + " --output-dir " + out.string(), env);
      c.that(r.code == 0, std::string(cmd) + " with " + env + " exited " + std::to_string(r.code) + ": " + r.output);
      if (r.code != 0) return;
    }
    runs.push_back(artifacts(out));
  }
  c.that(!runs[0].empty(), "no artifacts written");
  for (std::size_t i = 1; i < runs.size(); ++i) {
    c.that(runs[i].size() == runs[0].size(), plan[i].second + " wrote a different artifact set");
    for (const auto& [path, bytes] : runs[0]) {
      const auto it = runs[i].find(path);
      c.that(it != runs[i].end() && it->second == bytes, path + " differs between t1a and " + plan[i].second);
    }
  }
}

void detox_tradeoff(Check& c) {
  const fs::path dir = toy_dir("tradeoff");
  cli::PipelineConfig cfg = cli::load_config(dir / "config.json");
  if (run("gloss", cfg, c) != 0 || run("eval", cfg, c) != 0) return;
  const json pre = read_json(cfg.output_dir / "eval.json");
  cfg.model = cfg.output_dir / "edited.gtar";
  cfg.output_dir = dir / "post";
  if (run("eval", cfg, c) != 0) return;
  const json post = read_json(cfg.output_dir / "eval.json");
  const double p0 = pre["toxicity_proxy"].get<double>(), p1 = post["toxicity_proxy"].get<double>();
  const double ppl0 = pre["ppl"].get<double>(), ppl1 = post["ppl"].get<double>();
  std::cout << "      proxy " << p0 << " -> " << p1 << ", ppl " << ppl0 << " -> " << ppl1 << "\n";
  c.ge(p0 - p1, 0.4, "toxicity proxy drop");
  c.le(ppl1 / ppl0 - 1.0, 0.2, "relative perplexity increase");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Check&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "svd and projector oracles", 5.0, linalg_oracles},
      {2, "ffn value-vector loop sum", 1.0, ffn_equivalence},
      {3, "planted end-to-end edit", 30.0, planted_gloss},
      {4, "low-dimensional subspace", 30.0, low_dimensional},
      {5, "reconstruction after top-5 removal", 10.0, reconstruction},
      {6, "cross-layer shift surfaces lexicon", 5.0, cross_layer_transfer},
      {7, "synthetic factor recovery sweep", 20.0, synth_recovery},
      {8, "metric fixtures", 5.0, metrics_fixtures},
      {9, "determinism across runs and threads", 60.0, determinism},
      {10, "proxy drop against perplexity cost", 30.0, detox_tradeoff},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream limit;
    limit << "runtime " << secs << " s";
    c.le(secs, cr.budget_s, limit.str() + " over budget");
    const bool ok = c.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s %2d %-40s %7.3f s\n", ok ? "PASS" : "FAIL", cr.id, cr.name, secs);
    for (std::size_t i = 0; i < c.failures.size() && i < 10; ++i) std::printf("      %s\n", c.failures[i].c_str());
    if (c.failures.size() > 10) std::printf("      ... %zu more\n", c.failures.size() - 10);
    std::fflush(stdout);
  }
  return failed;
}
