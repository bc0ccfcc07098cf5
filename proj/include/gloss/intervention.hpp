#pragma once

// Activation-coefficient interventions. They rewrite the FFN coefficients m
// before the value-vector sum, so forward() can apply them at every layer and
// every generated token.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gloss/tensor.hpp"

namespace gloss {

enum class SteerMode { none, enhance, reverse_toward, reverse_away, suppress };

std::string to_string(SteerMode mode);
SteerMode steer_mode_from_string(const std::string& name);

struct SteeringSpec {
  SteerMode mode = SteerMode::none;
  // Target layer -> selected value-vector indices.
  std::map<std::size_t, std::vector<std::size_t>> selection;
  double factor = 10.0;  // enhance
  double lambda = 0.0;   // suppress, in [0, 1]
  Vector reference;      // reverse modes

  /// Throws InvalidArgument when fields do not match the mode or indices are out of range.
  void validate(std::size_t n_layers, std::size_t d, std::size_t d_m) const;
  bool active() const { return mode != SteerMode::none; }
};

/// m'ᵢ = factor·mᵢ for selected i with mᵢ > 0.
Vector steer_enhance(std::span<const double> m, std::span<const std::size_t> selected, double factor);
/// m'ᵢ = λ·mᵢ for selected i.
Vector steer_suppress(std::span<const double> m, std::span<const std::size_t> selected, double lambda);
/// toward: m'ᵢ = sign(cos(vᵢ, ref))·|mᵢ|; away: the negation. cos = 0 counts as +1.
Vector steer_reverse(std::span<const double> m, std::span<const std::size_t> selected,
                     const Tensor2D& value_vectors, std::span<const double> reference, bool toward);

/// Dispatches on spec.mode for one layer; returns m unchanged when the layer is not targeted.
Vector apply_steering(std::span<const double> m, const SteeringSpec& spec, std::size_t layer,
                      const Tensor2D& value_vectors);

}  // namespace gloss
