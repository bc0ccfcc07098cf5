#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "gloss/cli/config.hpp"

namespace gloss::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kExtractFailed = 3,
  kRankFailed = 4,
  kSubspaceFailed = 5,
  kEditFailed = 6,
  kRunFailed = 3,  // steer, eval, synth
};

/// Command-line values that take precedence over the config file.
struct Overrides {
  std::optional<std::string> model, dataset, lexicon, output_dir;
  std::optional<std::size_t> k, lens_m, threads;
  std::optional<double> strictness, eta;
  std::optional<std::uint64_t> seed;
};

/// Applies flags, then GLOSS_THREADS when no thread flag was given.
void apply_overrides(PipelineConfig& cfg, const Overrides& o);

// Each command throws ConfigError for invalid configuration and StageError
// (or another exception) for failures while running.
void cmd_extract(const PipelineConfig& cfg);
void cmd_rank(const PipelineConfig& cfg);
void cmd_subspace(const PipelineConfig& cfg);
void cmd_edit(const PipelineConfig& cfg);
void cmd_gloss(const PipelineConfig& cfg);
void cmd_steer(const PipelineConfig& cfg);
void cmd_eval(const PipelineConfig& cfg);
void cmd_synth(const PipelineConfig& cfg);

/// Runs a named command and maps failures to exit codes, printing the cause to `err`.
int run_command(const std::string& name, const PipelineConfig& cfg, std::ostream& err);

}  // namespace gloss::cli
