#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gloss/error.hpp"
#include "gloss/model.hpp"
#include "gloss/parallel.hpp"
#include "test_support.hpp"

using namespace gloss;
using gloss::testing::random_bundle;
using gloss::testing::random_matrix;
using gloss::testing::random_vector;

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_eigen(const Tensor2D& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

Vec to_eigen(const Vector& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

double ref_gelu(double x) { return 0.5 * x * (1.0 + std::tanh(0.7978845608 * (x + 0.044715 * x * x * x))); }
double ref_silu(double x) { return x / (1.0 + std::exp(-x)); }

Vec ref_rms(const Vec& x, const Vec& g) {
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()) + 1e-6);
  return (x / rms).cwiseProduct(g);
}

// Straight-line whole-sequence forward written against Eigen, sharing no code with the library.
Mat reference_forward(const ModelBundle& b, const std::vector<TokenId>& ids) {
  const auto& c = b.config;
  const Eigen::Index seq = static_cast<Eigen::Index>(ids.size());
  const Eigen::Index d = static_cast<Eigen::Index>(c.d);
  const Eigen::Index hd = d / static_cast<Eigen::Index>(c.n_heads);
  const Mat E = to_eigen(b.embedding);
  const Mat P = to_eigen(b.position);
  Mat X(seq, d);
  for (Eigen::Index t = 0; t < seq; ++t) X.row(t) = E.row(static_cast<Eigen::Index>(ids[t])) + P.row(t);

  for (const auto& w : b.layers) {
    const Vec ga = to_eigen(w.attn_norm_gain), gf = to_eigen(w.ffn_norm_gain);
    Mat N(seq, d);
    for (Eigen::Index t = 0; t < seq; ++t) N.row(t) = ref_rms(X.row(t).transpose(), ga).transpose();
    const Mat Q = N * to_eigen(w.attn_q).transpose();
    const Mat K = N * to_eigen(w.attn_k).transpose();
    const Mat V = N * to_eigen(w.attn_v).transpose();
    Mat C = Mat::Zero(seq, d);
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(c.n_heads); ++h) {
      Mat S = Q.middleCols(h * hd, hd) * K.middleCols(h * hd, hd).transpose() / std::sqrt(double(hd));
      for (Eigen::Index i = 0; i < seq; ++i) {
        for (Eigen::Index j = i + 1; j < seq; ++j) S(i, j) = -INFINITY;
        S.row(i) = (S.row(i).array() - S.row(i).maxCoeff()).exp();
        S.row(i) /= S.row(i).sum();
      }
      C.middleCols(h * hd, hd) = S * V.middleCols(h * hd, hd);
    }
    X += C * to_eigen(w.attn_o).transpose();
    for (Eigen::Index t = 0; t < seq; ++t) {
      const Vec xn = ref_rms(X.row(t).transpose(), gf);
      Vec o;
      if (c.ffn_kind == FfnKind::two_layer) {
        const Vec m = (to_eigen(w.ffn_in) * xn).unaryExpr(&ref_gelu);
        o = to_eigen(w.ffn_out).transpose() * m;
      } else {
        const Vec g = (to_eigen(w.ffn_gate) * xn).unaryExpr(&ref_silu);
        const Vec m = g.cwiseProduct(to_eigen(w.ffn_up) * xn);
        o = to_eigen(w.ffn_down) * m;
      }
      X.row(t) += o.transpose();
    }
  }
  return X * E.transpose();
}

LayerWeights two_layer(const Tensor2D& in, const Tensor2D& out) {
  LayerWeights w;
  w.ffn_in = in;
  w.ffn_out = out;
  return w;
}

LayerWeights gated(const Tensor2D& gate, const Tensor2D& up, const Tensor2D& down) {
  LayerWeights w;
  w.ffn_gate = gate;
  w.ffn_up = up;
  w.ffn_down = down;
  return w;
}

}  // namespace

TEST(Activations, FrozenScalars) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(2.0), 1.9545976940871754, 1e-15);
  EXPECT_NEAR(silu(3.0), 2.8577223804673, 1e-12);
}

TEST(FfnTwoLayer, ZeroKeysGiveZeroOutput) {
  Rng rng(1, 1);
  const auto r = ffn_two_layer(Vector{1.0, -2.0}, two_layer(Tensor2D(3, 2), random_matrix(rng, 3, 2)));
  EXPECT_EQ(r.coeffs, (Vector{0, 0, 0}));
  EXPECT_EQ(r.out, (Vector{0, 0}));
}

TEST(FfnTwoLayer, SingleUnitExample) {
  const auto r = ffn_two_layer(Vector{2.0, 0.0}, two_layer(Tensor2D{{1, 0}}, Tensor2D{{0, 3}}));
  EXPECT_NEAR(r.coeffs[0], 1.9545976940871754, 1e-12);
  EXPECT_EQ(r.out[0], 0.0);
  EXPECT_NEAR(r.out[1], 5.863793082261527, 1e-12);
}

TEST(FfnGated, ZeroUpGivesZeroOutput) {
  Rng rng(2, 1);
  const auto r = ffn_gated(Vector{1.0, 2.0},
                           gated(random_matrix(rng, 3, 2), Tensor2D(3, 2), random_matrix(rng, 2, 3)));
  EXPECT_EQ(r.coeffs, (Vector{0, 0, 0}));
  EXPECT_EQ(r.out, (Vector{0, 0}));
}

TEST(FfnGated, SingleUnitExample) {
  // 6·3/(1+e⁻³); an independent evaluation gives 17.1463342828038.
  const auto r = ffn_gated(Vector{3.0}, gated(Tensor2D{{1}}, Tensor2D{{2}}, Tensor2D{{1}}));
  EXPECT_NEAR(r.coeffs[0], 17.1463342828038, 1e-12);
  EXPECT_NEAR(r.out[0], 17.1463342828038, 1e-12);
}

TEST(FfnProperty, MatrixPathEqualsValueVectorLoopSum) {
  Rng rng(3, 3);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t d = 3, d_m = 4;
    const Vector x = random_vector(rng, d);
    {
      const LayerWeights w = two_layer(random_matrix(rng, d_m, d), random_matrix(rng, d_m, d));
      const auto r = ffn_two_layer(x, w);
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d_m; ++i) acc += ref_gelu(dot(w.ffn_in.row(i), x)) * w.ffn_out(i, j);
        EXPECT_NEAR(r.out[j], acc, 1e-12);
      }
    }
    {
      const LayerWeights w = gated(random_matrix(rng, d_m, d), random_matrix(rng, d_m, d), random_matrix(rng, d, d_m));
      const auto r = ffn_gated(x, w);
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d_m; ++i)
          acc += ref_silu(dot(w.ffn_gate.row(i), x)) * dot(w.ffn_up.row(i), x) * w.ffn_down(j, i);
        EXPECT_NEAR(r.out[j], acc, 1e-12);
      }
    }
  }
}

TEST(Ffn, ShapeMismatchRejected) {
  const LayerWeights w = two_layer(Tensor2D(3, 2), Tensor2D(3, 2));
  EXPECT_THROW(ffn_two_layer(Vector{1, 2, 3}, w), InvalidArgument);
}

TEST(ValueVectors, OrientationPerKind) {
  Rng rng(4, 4);
  LayerWeights a = two_layer(random_matrix(rng, 5, 3), random_matrix(rng, 5, 3));
  EXPECT_EQ(value_vectors(a, FfnKind::two_layer), a.ffn_out);
  LayerWeights g = gated(random_matrix(rng, 5, 3), random_matrix(rng, 5, 3), random_matrix(rng, 3, 5));
  EXPECT_EQ(value_vectors(g, FfnKind::gated), g.ffn_down.transpose());
  const Tensor2D v = random_matrix(rng, 5, 3);
  set_value_vectors(g, FfnKind::gated, v);
  EXPECT_EQ(g.ffn_down, v.transpose());
}

TEST(Config, Invariants) {
  EXPECT_THROW((ModelConfig{6, 4, 1, 4, 10, FfnKind::two_layer, 8}.validate()), InvalidArgument);
  EXPECT_THROW((ModelConfig{8, 0, 1, 2, 10, FfnKind::two_layer, 8}.validate()), InvalidArgument);
  EXPECT_THROW((ModelConfig{8, 4, 1, 2, 1, FfnKind::two_layer, 8}.validate()), InvalidArgument);
  EXPECT_NO_THROW((ModelConfig{8, 4, 1, 2, 2, FfnKind::two_layer, 8}.validate()));
}

TEST(Bundle, ValidateNamesTensor) {
  ModelBundle b = random_bundle(5, FfnKind::two_layer);
  b.layers[1].ffn_out = Tensor2D(3, 3);
  try {
    b.validate();
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("layers.1.ffn_out"), std::string::npos) << e.what();
  }
}

TEST(Forward, PassThroughResidual) {
  ModelConfig c{4, 3, 1, 1, 6, FfnKind::two_layer, 4};
  ModelBundle b = make_empty_bundle(c, gloss::testing::numbered_vocab(6));
  Rng rng(6, 6);
  b.embedding = random_matrix(rng, 6, 4);
  b.position = random_matrix(rng, 4, 4);
  const std::vector<TokenId> ids{1, 5, 2};
  const auto r = forward(b, ids);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const Vector h = add(b.embedding.row(ids[t]), b.position.row(t));
    for (std::size_t v = 0; v < 6; ++v) EXPECT_NEAR(r.logits(t, v), dot(h, b.embedding.row(v)), 1e-12);
  }
}

TEST(Forward, TiedEmbeddingRanksOneHotFirst) {
  ModelConfig c{5, 2, 1, 1, 5, FfnKind::two_layer, 2};
  ModelBundle b = make_empty_bundle(c, gloss::testing::numbered_vocab(5));
  b.embedding = Tensor2D::identity(5);
  for (TokenId j = 0; j < 5; ++j) {
    const std::vector<TokenId> ids{j};
    const auto r = forward(b, ids);
    const auto row = r.logits.row(0);
    EXPECT_EQ(static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin()), j);
  }
}

TEST(Forward, MatchesReferenceImplementation) {
  for (FfnKind kind : {FfnKind::two_layer, FfnKind::gated}) {
    const ModelBundle b = random_bundle(7, kind);
    const std::vector<TokenId> ids{3, 1, 4, 1, 5};
    const Mat ref = reference_forward(b, ids);
    const auto r = forward(b, ids);
    for (std::size_t t = 0; t < ids.size(); ++t)
      for (std::size_t v = 0; v < b.config.vocab_size; ++v)
        EXPECT_NEAR(r.logits(t, v), ref(Eigen::Index(t), Eigen::Index(v)), 1e-9) << to_string(kind);
  }
}

TEST(Forward, ResidualIdentityAtCapturedLayers) {
  for (FfnKind kind : {FfnKind::two_layer, FfnKind::gated}) {
    const ModelBundle b = random_bundle(8, kind, 3);
    const std::vector<TokenId> ids{3, 1, 4, 1, 5};
    const auto r = forward(b, ids, {0, 2});
    ASSERT_EQ(r.trace.layers.size(), 2u);
    EXPECT_EQ(r.trace.find(1), nullptr);
    for (std::size_t l : {0u, 2u}) {
      const LayerTrace& tr = r.trace.at(l);
      for (std::size_t i = 0; i < tr.hidden_out.size(); ++i)
        EXPECT_NEAR(tr.hidden_out.data()[i],
                    tr.hidden_in.data()[i] + tr.attn_out.data()[i] + tr.ffn_out.data()[i], 1e-9);
    }
    // Layer 1 input is layer 0 output.
    const auto all = forward(b, ids, {0, 1});
    EXPECT_EQ(all.trace.at(0).hidden_out, all.trace.at(1).hidden_in);
  }
}

TEST(Forward, RejectsBadInput) {
  const ModelBundle b = random_bundle(9, FfnKind::two_layer);
  const std::vector<TokenId> oov{1, 10};
  EXPECT_THROW(forward(b, oov), InvalidArgument);
  const std::vector<TokenId> longer(9, 1);
  EXPECT_THROW(forward(b, longer), InvalidArgument);
  const std::vector<TokenId> ok{1};
  EXPECT_THROW(forward(b, ok, {2}), InvalidArgument);
}

TEST(Forward, InterventionRewritesCoefficientsBeforeSum) {
  const ModelBundle b = random_bundle(10, FfnKind::two_layer);
  const std::vector<TokenId> ids{2, 3, 4};
  SteeringSpec spec;
  spec.mode = SteerMode::suppress;
  spec.lambda = 0.0;
  spec.selection[1] = {0, 5};
  const auto r = forward(b, ids, {0, 1}, &spec);
  const LayerTrace& l1 = r.trace.at(1);
  const Tensor2D vv = value_vectors(b.layers[1], FfnKind::two_layer);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    EXPECT_EQ(l1.ffn_coeffs(t, 0), 0.0);
    EXPECT_EQ(l1.ffn_coeffs(t, 5), 0.0);
    const Vector expect = matvec_t(vv, l1.ffn_coeffs.row(t));
    for (std::size_t j = 0; j < b.config.d; ++j) EXPECT_NEAR(l1.ffn_out(t, j), expect[j], 1e-12);
  }
  // Untargeted layer is untouched.
  const auto plain = forward(b, ids, {0});
  EXPECT_EQ(plain.trace.at(0).ffn_coeffs, r.trace.at(0).ffn_coeffs);
}

TEST(Forward, BitIdenticalAcrossThreadCounts) {
  const ModelBundle b = random_bundle(11, FfnKind::gated);
  std::vector<std::vector<TokenId>> prompts;
  for (TokenId i = 1; i < 9; ++i) prompts.push_back({i, (i * 3) % 10, (i * 7) % 10});
  auto run = [&](std::size_t threads) {
    std::vector<Tensor2D> out(prompts.size());
    parallel_for(prompts.size(), threads, [&](std::size_t i) { out[i] = forward(b, prompts[i]).logits; });
    return out;
  };
  EXPECT_EQ(run(1), run(4));
}

TEST(Generate, ConstantLogitsPickLowestId) {
  ModelConfig c{4, 2, 1, 1, 6, FfnKind::two_layer, 4};
  const ModelBundle b = make_empty_bundle(c, gloss::testing::numbered_vocab(6));
  const std::vector<TokenId> prompt{3};
  EXPECT_EQ(generate_greedy(b, prompt, 5), (std::vector<TokenId>(5, 0)));
}

TEST(Generate, DominantTokenRepeats) {
  ModelConfig c{4, 2, 1, 1, 10, FfnKind::two_layer, 4};
  ModelBundle b = make_empty_bundle(c, gloss::testing::numbered_vocab(10));
  Rng rng(12, 12);
  b.embedding = random_matrix(rng, 10, 4, 0.01);
  b.embedding(7, 0) = 10.0;
  // Every position carries a large e₀, which only token 7 reads.
  b.position = Tensor2D(4, 4, 0.0);
  for (std::size_t t = 0; t < 4; ++t) b.position(t, 0) = 50.0;
  const std::vector<TokenId> prompt{2, 5};
  const auto out = generate_greedy(b, prompt, 6);
  EXPECT_EQ(out, (std::vector<TokenId>(6, 7)));
}

TEST(Generate, DeterministicWithSlidingWindow) {
  const ModelBundle b = random_bundle(13, FfnKind::two_layer);
  const std::vector<TokenId> prompt{1, 2, 3};
  const auto a = generate_greedy(b, prompt, 12);  // runs past max_seq = 8
  EXPECT_EQ(a.size(), 12u);
  EXPECT_EQ(a, generate_greedy(b, prompt, 12));
  EXPECT_THROW(generate_greedy(b, prompt, 0), InvalidArgument);
  const std::vector<TokenId> longer(9, 1);
  EXPECT_THROW(generate_greedy(b, longer, 1), InvalidArgument);
}

TEST(Tokenizer, WhitespaceSplitWithUnknown) {
  const Vocabulary v({"<unk>", "the", "cat"});
  EXPECT_EQ(tokenize(v, "  the dog\tcat\n"), (std::vector<TokenId>{1, 0, 2}));
  const std::vector<TokenId> ids{1, 2};
  EXPECT_EQ(detokenize(v, ids), "the cat");
  EXPECT_EQ(v.id("missing"), 0u);
}
