#pragma once

// Pipeline configuration: one JSON object, unknown keys rejected, relative
// paths resolved against the config file's directory.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gloss::cli {

/// Invalid configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct SteerConfig {
  std::filesystem::path probe_dataset;
  std::optional<std::size_t> probe_layer;  // default: last layer
  std::size_t probe_steps = 500;
  double probe_lr = 0.5;
  double probe_l2 = 1e-3;
  std::filesystem::path prompts;
  std::size_t n_new = 10;
  std::size_t window = 10;
  std::string mode = "suppress";
  std::vector<std::size_t> layers;  // default: edit_layers range
  std::size_t top_k = 5;
  std::string scope = "per_layer";
  double factor = 10.0;
  std::vector<double> lambdas{0.0, 0.2, 0.4, 0.6, 0.8};
};

struct EvalConfig {
  std::filesystem::path prompts;
  std::filesystem::path text;
  std::size_t n_new = 10;
  std::size_t window = 10;
  std::string fluency_mode = "entropy";
};

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t toxic_rank = 2;
  std::size_t context_rank = 4;
  std::size_t samples = 256;
  double sigma_u = 0.1;
  std::vector<double> alphas{0.0, 0.5, 1.0, 2.0, 5.0};
  std::size_t seeds = 10;
  std::size_t k_extract = 2;
};

struct PipelineConfig {
  std::filesystem::path base_dir;  // directory of the config file
  std::filesystem::path model;
  std::filesystem::path dataset;
  std::filesystem::path lexicon;
  std::optional<std::size_t> pairs;  // use the first N rows of the dataset
  std::vector<std::size_t> extract_layers;
  std::size_t k = 5;
  double strictness = 1.0;
  double eta = 0.9;
  std::size_t lens_m = 100;
  std::optional<std::pair<std::size_t, std::size_t>> edit_layers;  // inclusive
  std::filesystem::path output_dir = "gloss_out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  SteerConfig steer;
  EvalConfig eval;
  SynthConfig synth;

  // Raw strings as written, recorded in reports.
  std::string model_raw, dataset_raw, lexicon_raw;
};

PipelineConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Resolves `p` against the config directory unless it is absolute.
std::filesystem::path resolve_path(const PipelineConfig& cfg, const std::string& p);

}  // namespace gloss::cli
