#include "gloss/intervention.hpp"

#include <cmath>

#include "gloss/error.hpp"

namespace gloss {

std::string to_string(SteerMode mode) {
  switch (mode) {
    case SteerMode::none: return "none";
    case SteerMode::enhance: return "enhance";
    case SteerMode::reverse_toward: return "reverse_toward";
    case SteerMode::reverse_away: return "reverse_away";
    case SteerMode::suppress: return "suppress";
  }
  return "none";
}

SteerMode steer_mode_from_string(const std::string& name) {
  if (name == "none") return SteerMode::none;
  if (name == "enhance") return SteerMode::enhance;
  if (name == "reverse_toward") return SteerMode::reverse_toward;
  if (name == "reverse_away") return SteerMode::reverse_away;
  if (name == "suppress") return SteerMode::suppress;
  throw InvalidArgument("unknown steering mode '" + name + "'");
}

void SteeringSpec::validate(std::size_t n_layers, std::size_t d, std::size_t d_m) const {
  if (mode == SteerMode::none) return;
  if (!(factor > 0.0) || !std::isfinite(factor)) throw InvalidArgument("steering: factor must be > 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("steering: lambda must lie in [0, 1]");
  if (mode == SteerMode::reverse_toward || mode == SteerMode::reverse_away) {
    if (reference.size() != d)
      throw InvalidArgument("steering: reverse modes need a reference direction of length d");
  }
  for (const auto& [layer, indices] : selection) {
    if (layer >= n_layers)
      throw InvalidArgument("steering: layer " + std::to_string(layer) + " out of range");
    for (std::size_t i : indices)
      if (i >= d_m)
        throw InvalidArgument("steering: value-vector index " + std::to_string(i) + " out of range");
  }
}

namespace {

void check_selection(std::span<const double> m, std::span<const std::size_t> selected) {
  for (std::size_t i : selected)
    if (i >= m.size())
      throw InvalidArgument("steering: selector index " + std::to_string(i) + " out of range");
}

}  // namespace

Vector steer_enhance(std::span<const double> m, std::span<const std::size_t> selected, double factor) {
  check_selection(m, selected);
  Vector out(m.begin(), m.end());
  for (std::size_t i : selected)
    if (m[i] > 0.0) out[i] = factor * m[i];
  return out;
}

Vector steer_suppress(std::span<const double> m, std::span<const std::size_t> selected, double lambda) {
  check_selection(m, selected);
  Vector out(m.begin(), m.end());
  for (std::size_t i : selected) out[i] = lambda * m[i];
  return out;
}

Vector steer_reverse(std::span<const double> m, std::span<const std::size_t> selected,
                     const Tensor2D& value_vectors, std::span<const double> reference, bool toward) {
  check_selection(m, selected);
  if (value_vectors.rows() != m.size() || value_vectors.cols() != reference.size())
    throw InvalidArgument("steering: value vectors do not match coefficients/reference");
  Vector out(m.begin(), m.end());
  for (std::size_t i : selected) {
    // sign(cos) equals sign(dot); a zero-norm row has cos 0 and maps to +1.
    const double sign = dot(value_vectors.row(i), reference) < 0.0 ? -1.0 : 1.0;
    const double mag = std::abs(m[i]);
    out[i] = toward ? sign * mag : -sign * mag;
  }
  return out;
}

Vector apply_steering(std::span<const double> m, const SteeringSpec& spec, std::size_t layer,
                      const Tensor2D& value_vectors) {
  const auto it = spec.selection.find(layer);
  if (spec.mode == SteerMode::none || it == spec.selection.end()) return Vector(m.begin(), m.end());
  const auto& idx = it->second;
  switch (spec.mode) {
    case SteerMode::enhance: return steer_enhance(m, idx, spec.factor);
    case SteerMode::suppress: return steer_suppress(m, idx, spec.lambda);
    case SteerMode::reverse_toward: return steer_reverse(m, idx, value_vectors, spec.reference, true);
    case SteerMode::reverse_away: return steer_reverse(m, idx, value_vectors, spec.reference, false);
    case SteerMode::none: break;
  }
  return Vector(m.begin(), m.end());
}

}  // namespace gloss
