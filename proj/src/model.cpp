#include "gloss/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gloss/error.hpp"

namespace gloss {

std::string to_string(FfnKind kind) { return kind == FfnKind::gated ? "gated" : "two_layer"; }

FfnKind ffn_kind_from_string(const std::string& name) {
  if (name == "two_layer") return FfnKind::two_layer;
  if (name == "gated") return FfnKind::gated;
  throw InvalidArgument("unknown ffn_kind '" + name + "'");
}

void ModelConfig::validate() const {
  if (d == 0) throw InvalidArgument("config: d must be >= 1");
  if (n_heads == 0 || d % n_heads != 0) throw InvalidArgument("config: d must be divisible by n_heads");
  if (d_m == 0) throw InvalidArgument("config: d_m must be >= 1");
  if (vocab_size < 2) throw InvalidArgument("config: vocab_size must be >= 2");
  if (max_seq == 0) throw InvalidArgument("config: max_seq must be >= 1");
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? 0 : it->second;
}

namespace {

void expect_shape(const Tensor2D& t, std::size_t rows, std::size_t cols, const std::string& name) {
  if (t.rows() != rows || t.cols() != cols) {
    throw InvalidArgument("tensor '" + name + "' has shape [" + std::to_string(t.rows()) + "," +
                          std::to_string(t.cols()) + "], expected [" + std::to_string(rows) + "," +
                          std::to_string(cols) + "]");
  }
}

void expect_len(const Vector& v, std::size_t n, const std::string& name) {
  if (v.size() != n)
    throw InvalidArgument("tensor '" + name + "' has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(n));
}

}  // namespace

void ModelBundle::validate() const {
  config.validate();
  const std::size_t d = config.d;
  const std::size_t dm = config.d_m;
  expect_shape(embedding, config.vocab_size, d, "embedding");
  expect_shape(position, config.max_seq, d, "position");
  if (layers.size() != config.n_layers)
    throw InvalidArgument("bundle has " + std::to_string(layers.size()) + " layers, config says " +
                          std::to_string(config.n_layers));
  if (vocab.size() != config.vocab_size)
    throw InvalidArgument("vocab length " + std::to_string(vocab.size()) + " != vocab_size " +
                          std::to_string(config.vocab_size));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    expect_shape(w.attn_q, d, d, p + "attn_q");
    expect_shape(w.attn_k, d, d, p + "attn_k");
    expect_shape(w.attn_v, d, d, p + "attn_v");
    expect_shape(w.attn_o, d, d, p + "attn_o");
    expect_len(w.attn_norm_gain, d, p + "attn_norm");
    expect_len(w.ffn_norm_gain, d, p + "ffn_norm");
    if (config.ffn_kind == FfnKind::two_layer) {
      expect_shape(w.ffn_in, dm, d, p + "ffn_in");
      expect_shape(w.ffn_out, dm, d, p + "ffn_out");
    } else {
      expect_shape(w.ffn_gate, dm, d, p + "ffn_gate");
      expect_shape(w.ffn_up, dm, d, p + "ffn_up");
      expect_shape(w.ffn_down, d, dm, p + "ffn_down");
    }
  }
}

ModelBundle make_empty_bundle(const ModelConfig& config, std::vector<std::string> vocab) {
  config.validate();
  ModelBundle b;
  b.config = config;
  const std::size_t d = config.d;
  const std::size_t dm = config.d_m;
  b.embedding = Tensor2D(config.vocab_size, d);
  b.position = Tensor2D(config.max_seq, d);
  b.layers.resize(config.n_layers);
  for (auto& w : b.layers) {
    w.attn_q = w.attn_k = w.attn_v = w.attn_o = Tensor2D(d, d);
    w.attn_norm_gain.assign(d, 1.0);
    w.ffn_norm_gain.assign(d, 1.0);
    if (config.ffn_kind == FfnKind::two_layer) {
      w.ffn_in = Tensor2D(dm, d);
      w.ffn_out = Tensor2D(dm, d);
    } else {
      w.ffn_gate = Tensor2D(dm, d);
      w.ffn_up = Tensor2D(dm, d);
      w.ffn_down = Tensor2D(d, dm);
    }
  }
  b.vocab = Vocabulary(std::move(vocab));
  b.validate();
  return b;
}

Tensor2D value_vectors(const LayerWeights& layer, FfnKind kind) {
  return kind == FfnKind::two_layer ? layer.ffn_out : layer.ffn_down.transpose();
}

void set_value_vectors(LayerWeights& layer, FfnKind kind, const Tensor2D& vectors) {
  if (kind == FfnKind::two_layer) {
    expect_shape(vectors, layer.ffn_out.rows(), layer.ffn_out.cols(), "value vectors");
    layer.ffn_out = vectors;
  } else {
    expect_shape(vectors, layer.ffn_down.cols(), layer.ffn_down.rows(), "value vectors");
    layer.ffn_down = vectors.transpose();
  }
}

double gelu(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + 0.044715 * x * x * x)));
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

Vector ffn_coefficients(std::span<const double> x, const LayerWeights& w, FfnKind kind) {
  if (kind == FfnKind::two_layer) {
    if (w.ffn_in.cols() != x.size()) throw InvalidArgument("ffn: input width mismatch");
    Vector m = matvec(w.ffn_in, x);
    for (double& v : m) v = gelu(v);
    return m;
  }
  if (w.ffn_gate.cols() != x.size() || w.ffn_up.cols() != x.size())
    throw InvalidArgument("ffn: input width mismatch");
  if (w.ffn_gate.rows() != w.ffn_up.rows()) throw InvalidArgument("ffn: gate/up shape mismatch");
  const Vector g = matvec(w.ffn_gate, x);
  const Vector u = matvec(w.ffn_up, x);
  Vector m(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = silu(g[i]) * u[i];
  return m;
}

Vector ffn_combine(std::span<const double> coeffs, const LayerWeights& w, FfnKind kind) {
  if (kind == FfnKind::two_layer) {
    if (w.ffn_out.rows() != coeffs.size()) throw InvalidArgument("ffn: coefficient count mismatch");
    return matvec_t(w.ffn_out, coeffs);
  }
  if (w.ffn_down.cols() != coeffs.size()) throw InvalidArgument("ffn: coefficient count mismatch");
  return matvec(w.ffn_down, coeffs);
}

FfnResult ffn_two_layer(std::span<const double> x, const LayerWeights& w) {
  if (w.ffn_in.rows() != w.ffn_out.rows() || w.ffn_in.cols() != w.ffn_out.cols() || w.ffn_in.empty())
    throw InvalidArgument("ffn_two_layer: W_K and W_V must both be d_m x d");
  FfnResult r;
  r.coeffs = ffn_coefficients(x, w, FfnKind::two_layer);
  r.out = ffn_combine(r.coeffs, w, FfnKind::two_layer);
  return r;
}

FfnResult ffn_gated(std::span<const double> x, const LayerWeights& w) {
  if (w.ffn_gate.empty() || w.ffn_down.rows() != x.size() || w.ffn_down.cols() != w.ffn_gate.rows())
    throw InvalidArgument("ffn_gated: W_down must be d x d_m");
  FfnResult r;
  r.coeffs = ffn_coefficients(x, w, FfnKind::gated);
  r.out = ffn_combine(r.coeffs, w, FfnKind::gated);
  return r;
}

Vector rms_normalize(std::span<const double> x, std::span<const double> gain) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + 1e-6);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
  return out;
}

const LayerTrace* ActivationTrace::find(std::size_t layer) const {
  for (const auto& t : layers)
    if (t.layer == layer) return &t;
  return nullptr;
}

const LayerTrace& ActivationTrace::at(std::size_t layer) const {
  const LayerTrace* t = find(layer);
  if (t == nullptr) throw InvalidArgument("layer " + std::to_string(layer) + " was not captured");
  return *t;
}

namespace {

Tensor2D causal_attention(const Tensor2D& x, const LayerWeights& w, std::size_t n_heads) {
  const std::size_t seq = x.rows();
  const std::size_t d = x.cols();
  const std::size_t hd = d / n_heads;
  Tensor2D q(seq, d), k(seq, d), v(seq, d);
  for (std::size_t t = 0; t < seq; ++t) {
    const Vector xn = rms_normalize(x.row(t), w.attn_norm_gain);
    const Vector qt = matvec(w.attn_q, xn);
    const Vector kt = matvec(w.attn_k, xn);
    const Vector vt = matvec(w.attn_v, xn);
    std::copy(qt.begin(), qt.end(), q.row(t).begin());
    std::copy(kt.begin(), kt.end(), k.row(t).begin());
    std::copy(vt.begin(), vt.end(), v.row(t).begin());
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor2D out(seq, d);
  Vector context(d);
  Vector scores(seq);
  for (std::size_t t = 0; t < seq; ++t) {
    std::fill(context.begin(), context.end(), 0.0);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t off = h * hd;
      double mx = -INFINITY;
      for (std::size_t s = 0; s <= t; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < hd; ++j) acc += q(t, off + j) * k(s, off + j);
        scores[s] = acc * scale;
        mx = std::max(mx, scores[s]);
      }
      double z = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        scores[s] = std::exp(scores[s] - mx);
        z += scores[s];
      }
      for (std::size_t s = 0; s <= t; ++s) {
        const double p = scores[s] / z;
        for (std::size_t j = 0; j < hd; ++j) context[off + j] += p * v(s, off + j);
      }
    }
    const Vector o = matvec(w.attn_o, context);
    std::copy(o.begin(), o.end(), out.row(t).begin());
  }
  return out;
}

}  // namespace

ForwardResult forward(const ModelBundle& bundle, std::span<const TokenId> tokens,
                      const std::set<std::size_t>& capture, const SteeringSpec* intervene) {
  const ModelConfig& cfg = bundle.config;
  if (tokens.empty()) throw InvalidArgument("forward: empty token sequence");
  if (tokens.size() > cfg.max_seq)
    throw InvalidArgument("forward: sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq " + std::to_string(cfg.max_seq));
  for (TokenId id : tokens)
    if (id >= cfg.vocab_size)
      throw InvalidArgument("forward: token id " + std::to_string(id) + " out of range");
  for (std::size_t l : capture)
    if (l >= cfg.n_layers) throw InvalidArgument("forward: capture layer " + std::to_string(l) + " out of range");
  const bool steering = intervene != nullptr && intervene->active();
  if (steering) intervene->validate(cfg.n_layers, cfg.d, cfg.d_m);

  const std::size_t seq = tokens.size();
  const std::size_t d = cfg.d;
  Tensor2D x(seq, d);
  for (std::size_t t = 0; t < seq; ++t) {
    auto e = bundle.embedding.row(tokens[t]);
    auto p = bundle.position.row(t);
    auto xr = x.row(t);
    for (std::size_t j = 0; j < d; ++j) xr[j] = e[j] + p[j];
  }

  ForwardResult result;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& w = bundle.layers[l];
    const bool keep = capture.count(l) > 0;
    const Tensor2D attn = causal_attention(x, w, cfg.n_heads);

    const bool steer_here = steering && intervene->selection.count(l) > 0;
    Tensor2D values;
    if (steer_here && (intervene->mode == SteerMode::reverse_toward ||
                       intervene->mode == SteerMode::reverse_away))
      values = value_vectors(w, cfg.ffn_kind);

    LayerTrace trace;
    if (keep) {
      trace.layer = l;
      trace.hidden_in = x;
      trace.attn_out = attn;
      trace.ffn_coeffs = Tensor2D(seq, cfg.d_m);
      trace.ffn_out = Tensor2D(seq, d);
    }
    for (std::size_t t = 0; t < seq; ++t) {
      auto xr = x.row(t);
      auto ar = attn.row(t);
      for (std::size_t j = 0; j < d; ++j) xr[j] += ar[j];
      const Vector xn = rms_normalize(xr, w.ffn_norm_gain);
      Vector m = ffn_coefficients(xn, w, cfg.ffn_kind);
      if (steer_here) m = apply_steering(m, *intervene, l, values);
      const Vector o = ffn_combine(m, w, cfg.ffn_kind);
      for (std::size_t j = 0; j < d; ++j) xr[j] += o[j];
      if (keep) {
        std::copy(m.begin(), m.end(), trace.ffn_coeffs.row(t).begin());
        std::copy(o.begin(), o.end(), trace.ffn_out.row(t).begin());
      }
    }
    if (!x.all_finite()) throw NumericError("forward: non-finite activations at layer " + std::to_string(l));
    if (keep) {
      trace.hidden_out = x;
      result.trace.layers.push_back(std::move(trace));
    }
  }
  result.logits = matmul_bt(x, bundle.embedding);
  return result;
}

std::vector<TokenId> generate_greedy(const ModelBundle& bundle, std::span<const TokenId> prompt,
                                     std::size_t n_new, const SteeringSpec* intervene) {
  if (n_new == 0) throw InvalidArgument("generate_greedy: n_new must be >= 1");
  if (prompt.empty()) throw InvalidArgument("generate_greedy: empty prompt");
  if (prompt.size() > bundle.config.max_seq)
    throw InvalidArgument("generate_greedy: prompt length " + std::to_string(prompt.size()) +
                          " exceeds max_seq " + std::to_string(bundle.config.max_seq));
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  out.reserve(n_new);
  for (std::size_t step = 0; step < n_new; ++step) {
    const std::size_t window = std::min(seq.size(), bundle.config.max_seq);
    std::span<const TokenId> ctx(seq.data() + seq.size() - window, window);
    const ForwardResult fr = forward(bundle, ctx, {}, intervene);
    auto last = fr.logits.row(fr.logits.rows() - 1);
    TokenId best = 0;
    for (TokenId j = 1; j < last.size(); ++j)
      if (last[j] > last[best]) best = j;
    out.push_back(best);
    seq.push_back(best);
  }
  return out;
}

std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text) {
  std::vector<TokenId> ids;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) ids.push_back(vocab.id(word));
  return ids;
}

std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace gloss
