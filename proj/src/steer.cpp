#include "gloss/steer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gloss/error.hpp"
#include "gloss/io.hpp"
#include "gloss/linalg.hpp"
#include "gloss/parallel.hpp"

namespace gloss {

std::vector<LabeledText> load_labeled_texts(const std::filesystem::path& path) {
  std::vector<LabeledText> out;
  std::size_t row = 0;
  for (const auto& j : io::read_jsonl(path)) {
    ++row;
    if (!j.contains("text") || !j["text"].is_string() || !j.contains("label") || !j["label"].is_number_integer())
      throw FormatError(path.string() + ": row " + std::to_string(row) + " needs \"text\" and integer \"label\"");
    const int label = j["label"].get<int>();
    if (label != 0 && label != 1) throw FormatError(path.string() + ": row " + std::to_string(row) + " label must be 0 or 1");
    out.push_back({j["text"].get<std::string>(), label});
  }
  return out;
}

double probe_logit(const Probe& probe, std::span<const double> x) { return dot(probe.weight, x) + probe.bias; }

Probe train_probe(const std::vector<ProbeExample>& examples, double l2, std::size_t steps, double lr) {
  if (examples.size() < 2) throw InvalidArgument("train_probe: needs at least 2 examples");
  const std::size_t d = examples.front().x.size();
  bool has0 = false, has1 = false;
  for (const auto& e : examples) {
    if (e.x.size() != d) throw InvalidArgument("train_probe: examples have unequal dimension");
    if (e.label != 0 && e.label != 1) throw InvalidArgument("train_probe: labels must be 0 or 1");
    (e.label == 1 ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw InvalidArgument("train_probe: both classes must be present");
  if (l2 < 0.0 || lr <= 0.0) throw InvalidArgument("train_probe: need l2 >= 0 and lr > 0");

  Probe p;
  p.weight.assign(d, 0.0);
  const double n = static_cast<double>(examples.size());
  Vector grad(d);
  for (std::size_t step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (const auto& e : examples) {
      const double z = probe_logit(p, e.x);
      const double err = 1.0 / (1.0 + std::exp(-z)) - e.label;
      for (std::size_t j = 0; j < d; ++j) grad[j] += err * e.x[j];
      gb += err;
    }
    for (std::size_t j = 0; j < d; ++j) p.weight[j] -= lr * (grad[j] / n + l2 * p.weight[j]);
    p.bias -= lr * gb / n;
  }
  std::size_t correct = 0;
  for (const auto& e : examples)
    if ((probe_logit(p, e.x) > 0.0) == (e.label == 1)) ++correct;
  p.accuracy = static_cast<double>(correct) / n;
  for (double w : p.weight)
    if (!std::isfinite(w)) throw NumericError("train_probe: diverged");
  return p;
}

std::vector<ProbeExample> probe_examples(const ModelBundle& bundle, const std::vector<LabeledText>& texts,
                                         std::size_t layer, std::size_t threads) {
  if (layer >= bundle.config.n_layers) throw InvalidArgument("probe layer " + std::to_string(layer) + " out of range");
  std::vector<std::vector<TokenId>> ids;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ids.push_back(tokenize(bundle.vocab, texts[i].text));
    if (ids.back().empty()) throw InvalidArgument("probe text " + std::to_string(i) + " is empty");
  }
  std::vector<ProbeExample> out(texts.size());
  parallel_for(texts.size(), threads, [&](std::size_t i) {
    const ForwardResult fr = forward(bundle, ids[i], {layer});
    const Tensor2D& h = fr.trace.at(layer).hidden_out;
    out[i] = {h.row_vector(h.rows() - 1), texts[i].label};
  });
  return out;
}

namespace {

Vector probe_cosines(const ModelBundle& bundle, const Probe& probe, std::size_t layer) {
  if (layer >= bundle.config.n_layers) throw InvalidArgument("layer " + std::to_string(layer) + " out of range");
  if (probe.weight.size() != bundle.config.d) throw InvalidArgument("probe dimension does not match model width");
  const double wn = norm(probe.weight);
  const Tensor2D v = value_vectors(bundle.layers[layer], bundle.config.ffn_kind);
  Vector cos(v.rows(), 0.0);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double vn = norm(v.row(i));
    if (vn > 1e-12 && wn > 1e-12) cos[i] = dot(v.row(i), probe.weight) / (vn * wn);
  }
  return cos;
}

}  // namespace

std::vector<std::size_t> rank_vectors_by_probe(const ModelBundle& bundle, const Probe& probe, std::size_t layer) {
  const Vector cos = probe_cosines(bundle, probe, layer);
  std::vector<std::size_t> idx(cos.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&cos](std::size_t a, std::size_t b) { return cos[a] > cos[b]; });
  return idx;
}

std::string to_string(SelectionScope scope) { return scope == SelectionScope::global ? "global" : "per_layer"; }

SelectionScope selection_scope_from_string(const std::string& name) {
  if (name == "per_layer") return SelectionScope::per_layer;
  if (name == "global") return SelectionScope::global;
  throw InvalidArgument("unknown selection scope '" + name + "'");
}

std::map<std::size_t, std::vector<std::size_t>> select_vectors(const ModelBundle& bundle, const Probe& probe,
                                                               const std::vector<std::size_t>& layers,
                                                               std::size_t k, SelectionScope scope,
                                                               bool most_toxic) {
  struct Entry {
    double score;
    std::size_t layer;
    std::size_t index;
  };
  std::vector<std::vector<Entry>> per_layer;
  for (std::size_t l : layers) {
    const Vector cos = probe_cosines(bundle, probe, l);
    std::vector<Entry> e;
    for (std::size_t i = 0; i < cos.size(); ++i) e.push_back({most_toxic ? cos[i] : -cos[i], l, i});
    per_layer.push_back(std::move(e));
  }
  auto before = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.layer != b.layer ? a.layer < b.layer : a.index < b.index;
  };
  std::map<std::size_t, std::vector<std::size_t>> out;
  auto take = [&](std::vector<Entry>& pool) {
    std::stable_sort(pool.begin(), pool.end(), before);
    for (std::size_t i = 0; i < std::min(k, pool.size()); ++i) out[pool[i].layer].push_back(pool[i].index);
  };
  if (scope == SelectionScope::per_layer) {
    for (auto& e : per_layer) take(e);
  } else {
    std::vector<Entry> all;
    for (auto& e : per_layer) all.insert(all.end(), e.begin(), e.end());
    take(all);
  }
  for (auto& [l, idx] : out) std::sort(idx.begin(), idx.end());
  return out;
}

Vector cross_layer_shift(std::span<const double> x, std::span<const double> d, double alpha) {
  if (x.size() != d.size()) throw InvalidArgument("cross_layer_shift: dimension mismatch");
  if (std::abs(norm(d) - 1.0) > 1e-6) throw InvalidArgument("cross_layer_shift: direction must be unit norm");
  Vector out(x.begin(), x.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += alpha * d[j];
  return out;
}

Tensor2D direction_similarity_matrix(const std::vector<Vector>& directions) {
  const std::size_t n = directions.size();
  for (const auto& v : directions)
    if (v.size() != directions.front().size()) throw InvalidArgument("similarity: directions differ in dimension");
  Tensor2D s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) s(i, j) = s(j, i) = std::abs(linalg::cosine(directions[i], directions[j]));
  }
  return s;
}

Reconstruction reconstruct_direction(const Tensor2D& remaining, std::span<const double> target) {
  if (remaining.rows() == 0) throw InvalidArgument("reconstruct: no remaining vectors");
  if (remaining.cols() != target.size()) throw InvalidArgument("reconstruct: dimension mismatch");
  if (norm(target) <= 0.0) throw InvalidArgument("reconstruct: zero target");
  if (frobenius_norm(remaining) == 0.0) throw InvalidArgument("reconstruct: all remaining vectors are zero");
  Tensor2D g = gram_rows(remaining);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += 1e-8;
  Reconstruction r;
  r.coefficients = linalg::solve_spd(g, matvec(remaining, target));
  const Vector achieved = matvec_t(remaining, r.coefficients);
  const double an = norm(achieved);
  r.cosine = an <= 1e-12 * norm(target) ? 0.0 : dot(achieved, target) / (an * norm(target));
  return r;
}

Vector mean_activation(const ModelBundle& bundle, const std::vector<std::vector<TokenId>>& texts, std::size_t layer) {
  if (texts.empty()) throw InvalidArgument("mean_activation: no texts");
  Vector sum(bundle.config.d, 0.0);
  std::size_t count = 0;
  for (const auto& ids : texts) {
    const ForwardResult fr = forward(bundle, ids, {layer});
    const Tensor2D& h = fr.trace.at(layer).hidden_out;
    for (std::size_t t = 0; t < h.rows(); ++t) {
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += h(t, j);
      ++count;
    }
  }
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

}  // namespace gloss
