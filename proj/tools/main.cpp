#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "gloss/cli/commands.hpp"
#include "gloss/cli/config.hpp"
#include "gloss/cli/toy.hpp"

namespace {

using namespace gloss::cli;

struct CommandArgs {
  std::string config;
  Overrides o;
};

void add_override_flags(CLI::App* sub, CommandArgs& a) {
  sub->add_option("--config", a.config, "Pipeline config (JSON)")->required();
  sub->add_option("--model", a.o.model, "GTAR model archive");
  sub->add_option("--dataset", a.o.dataset, "Pair dataset (JSONL)");
  sub->add_option("--lexicon", a.o.lexicon, "Bad-word lexicon");
  sub->add_option("--output-dir", a.o.output_dir, "Artifact directory");
  sub->add_option("--k", a.o.k, "Singular vectors per layer");
  sub->add_option("--strictness", a.o.strictness, "Selection strictness alpha");
  sub->add_option("--eta", a.o.eta, "Explained-variance threshold");
  sub->add_option("--lens-m", a.o.lens_m, "Top-m tokens for the toxicity score");
  sub->add_option("--seed", a.o.seed, "Seed");
  sub->add_option("--threads", a.o.threads, "Worker threads (overrides GLOSS_THREADS)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global toxic-subspace extraction and projection editing for toy transformers"};
  app.require_subcommand(1);

  const char* kCommands[][2] = {
      {"extract", "Contrastive SVD candidates per layer"},
      {"rank", "Orient and score candidates by vocabulary projection"},
      {"subspace", "Adaptive selection and PCA subspace"},
      {"edit", "Project the subspace out of FFN value vectors"},
      {"gloss", "extract, rank, subspace and edit in sequence"},
      {"steer", "Probe-guided activation interventions"},
      {"eval", "Toxicity proxy, perplexity, fluency and consistency"},
      {"synth", "Factor-model subspace recovery sweep"},
  };
  std::vector<std::pair<CLI::App*, CommandArgs>> subs;
  subs.reserve(std::size(kCommands));
  for (const auto& c : kCommands) {
    subs.emplace_back(app.add_subcommand(c[0], c[1]), CommandArgs{});
    add_override_flags(subs.back().first, subs.back().second);
  }

  ToyOptions toy;
  std::string toy_dir;
  std::string toy_planted = "1-2";
  std::string toy_ffn = "two_layer";
  CLI::App* make_toy_cmd = app.add_subcommand("make-toy", "Write a seeded planted-direction fixture");
  make_toy_cmd->add_option("--out", toy_dir, "Output directory")->required();
  make_toy_cmd->add_option("--seed", toy.seed, "Seed");
  make_toy_cmd->add_option("--layers", toy.n_layers, "Layer count");
  make_toy_cmd->add_option("--planted", toy_planted, "Planted layer range lo-hi");
  make_toy_cmd->add_option("--pairs", toy.pairs, "Contrastive pairs");
  make_toy_cmd->add_option("--ffn", toy_ffn, "two_layer or gated");
  make_toy_cmd->add_option("--d", toy.d, "Hidden width");
  make_toy_cmd->add_option("--d-m", toy.d_m, "FFN width");
  make_toy_cmd->add_option("--planted-rows", toy.planted_rows, "Planted rows per layer");

  CLI11_PARSE(app, argc, argv);

  if (make_toy_cmd->parsed()) {
    try {
      const auto dash = toy_planted.find('-');
      if (dash == std::string::npos) throw std::invalid_argument("--planted must look like lo-hi");
      toy.planted_lo = std::stoul(toy_planted.substr(0, dash));
      toy.planted_hi = std::stoul(toy_planted.substr(dash + 1));
      toy.ffn_kind = gloss::ffn_kind_from_string(toy_ffn);
      write_toy(make_toy(toy), toy, toy_dir);
    } catch (const std::exception& e) {
      std::cerr << "make-toy: " << e.what() << "\n";
      return kConfigError;
    }
    std::cout << "wrote fixture to " << toy_dir << "\n";
    return kOk;
  }

  for (auto& [sub, args] : subs) {
    if (!sub->parsed()) continue;
    PipelineConfig cfg;
    try {
      cfg = load_config(args.config);
      apply_overrides(cfg, args.o);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigError;
    }
    return run_command(sub->get_name(), cfg, std::cerr);
  }
  return kConfigError;
}
