#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "innerloop/error.hpp"
#include "innerloop/nn/checkpoint.hpp"
#include "innerloop/nn/gradcheck.hpp"
#include "innerloop/nn/model.hpp"
#include "innerloop/nn/optim.hpp"
#include "innerloop/nn/trainer.hpp"

using namespace innerloop;
using namespace innerloop::nn;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("innerloop_test_" + name)).string();
}

ModelConfig small_config(Precision precision = Precision::kF64) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.max_seq_len = 16;
  c.dropout = 0.0;
  c.precision = precision;
  return c;
}

std::vector<TokenId> tokens_of(const std::string& text) { return synthlang::encode(text); }

// Records the last update it saw.
template <class T>
struct CaptureSink : HistorySink<T> {
  std::vector<StepInfo> infos;
  std::vector<LayerTrace<T>> traces;
  std::vector<Gradients<T>> grads;
  void on_sequence(const StepInfo& info, const LayerTrace<T>& trace, const Gradients<T>& g) override {
    infos.push_back(info);
    traces.push_back(trace);
    grads.push_back(g);
  }
};

// Straight-line scalar forward, written independently of the Eigen code.
std::vector<double> scalar_losses(const ModelState<double>& s, const std::vector<TokenId>& tokens) {
  const auto& c = s.config;
  const auto& p = s.params;
  const int n = static_cast<int>(tokens.size()) - 1;
  const int d = c.d_model, dh = c.d_head();
  using Rows = std::vector<std::vector<double>>;
  auto norm = [&](const std::vector<double>& x, const Mat<double>& g) {
    double mean = 0, var = 0;
    for (double v : x) mean += v;
    mean /= d;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= d;
    std::vector<double> out(d);
    for (int j = 0; j < d; ++j) out[j] = (x[j] - mean) / std::sqrt(var + c.layer_norm_eps) * g(0, j);
    return out;
  };
  auto act = [&](double x) {
    if (c.activation == Activation::kRelu) return x > 0 ? x : 0.0;
    return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
  };
  auto matvec = [](const Mat<double>& w, const std::vector<double>& x, int row0, int rows) {
    std::vector<double> out(rows, 0.0);
    for (int r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < x.size(); ++k) out[r] += w(row0 + r, static_cast<Eigen::Index>(k)) * x[k];
    return out;
  };
  Rows z(n, std::vector<double>(d));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) z[i][j] = p.tok_emb(tokens[i], j) + p.pos_emb(i, j);
  const bool pre = c.norm_placement == NormPlacement::kPre;
  const double scale = c.attn_scale ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  for (const auto& lp : p.layers) {
    Rows in(n);
    for (int i = 0; i < n; ++i) in[i] = pre ? norm(z[i], lp.ln1_gain) : z[i];
    Rows y(n, std::vector<double>(d, 0.0));
    for (int h = 0; h < c.n_heads; ++h) {
      Rows q(n), k(n), v(n);
      for (int i = 0; i < n; ++i) {
        q[i] = matvec(lp.wq, in[i], h * dh, dh);
        k[i] = matvec(lp.wk, in[i], h * dh, dh);
        v[i] = matvec(lp.wv, in[i], h * dh, dh);
      }
      for (int i = 0; i < n; ++i) {
        std::vector<double> sc(i + 1);
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
          double dot = 0;
          for (int e = 0; e < dh; ++e) dot += q[i][e] * k[j][e];
          sc[j] = dot * scale;
          mx = std::max(mx, sc[j]);
        }
        double sum = 0;
        for (auto& x : sc) sum += (x = std::exp(x - mx));
        std::vector<double> u(dh, 0.0);
        for (int j = 0; j <= i; ++j)
          for (int e = 0; e < dh; ++e) u[e] += sc[j] / sum * v[j][e];
        for (int r = 0; r < d; ++r)
          for (int e = 0; e < dh; ++e) y[i][r] += lp.wo(r, h * dh + e) * u[e];
      }
    }
    for (int i = 0; i < n; ++i) {
      std::vector<double> mid(d);
      for (int j = 0; j < d; ++j) mid[j] = z[i][j] + y[i][j];
      if (!pre) mid = norm(mid, lp.ln1_gain);
      const auto fin = pre ? norm(mid, lp.ln2_gain) : mid;
      auto hidden = matvec(lp.w1, fin, 0, c.d_ff);
      for (auto& x : hidden) x = act(x);
      const auto b = matvec(lp.w2, hidden, 0, d);
      for (int j = 0; j < d; ++j) z[i][j] = mid[j] + b[j];
      if (!pre) z[i] = norm(z[i], lp.ln2_gain);
    }
  }
  std::vector<double> losses(n);
  for (int i = 0; i < n; ++i) {
    const auto hin = c.final_norm_before_head ? norm(z[i], p.final_gain) : z[i];
    const auto logits = matvec(p.lm_head, hin, 0, c.vocab);
    double mx = -1e300, sum = 0;
    for (double l : logits) mx = std::max(mx, l);
    for (double l : logits) sum += std::exp(l - mx);
    losses[i] = std::log(sum) + mx - logits[tokens[i + 1]];
  }
  return losses;
}

}  // namespace

TEST(Init, VarianceAndDeterminism) {
  ModelConfig cfg;
  cfg.precision = Precision::kF64;
  const auto a = init_params<double>(cfg, {.rng_seed = 4});
  const auto b = init_params<double>(cfg, {.rng_seed = 4});
  const auto& wq = a.params.layers[0].wq;
  const double mean = wq.mean();
  const double var = (wq.array() - mean).square().mean();
  EXPECT_NEAR(var, 1.0 / 64.0, 0.2 / 64.0);
  a.params.visit([&](std::string_view name, const MatD& m) {
    b.params.visit([&](std::string_view other, const MatD& n) {
      if (name == other) {
        EXPECT_TRUE(m == n) << name;
      }
    });
  });
}

TEST(Init, ZeroHeadGivesUniformLoss) {
  auto cfg = small_config();
  const auto s = init_params<double>(cfg, {.rng_seed = 1, .zero_lm_head = true});
  EXPECT_TRUE(s.params.lm_head.isZero(0.0));
  const auto tr = forward_trace(s, std::span<const TokenId>(tokens_of("abcab")), Mode::kEval);
  for (double l : tr.loss) EXPECT_NEAR(l, std::log(28.0), 1e-12);
  EXPECT_NEAR(std::log(28.0), 3.3322, 1e-4);
}

TEST(Forward, MatchesScalarOracle) {
  for (int variant = 0; variant < 2; ++variant) {
    auto cfg = small_config();
    cfg.n_layers = 1;
    if (variant == 1) {
      cfg.norm_placement = NormPlacement::kPost;
      cfg.activation = Activation::kRelu;
      cfg.attn_scale = true;
      cfg.final_norm_before_head = false;
      cfg.n_layers = 2;
    }
    const auto s = init_params<double>(cfg, {.rng_seed = 11});
    const auto toks = tokens_of("hellothere");
    const auto tr = forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
    const auto oracle = scalar_losses(s, toks);
    ASSERT_EQ(tr.loss.size(), oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(tr.loss[i], oracle[i], 1e-12) << "variant " << variant;
  }
}

TEST(Forward, EvalIsDeterministic) {
  const auto s = init_params<float>(small_config(Precision::kF32), {.rng_seed = 2});
  const auto toks = tokens_of("abcdefg");
  const auto a = forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
  const auto b = forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
  EXPECT_TRUE(a.logits == b.logits);
  for (std::size_t l = 0; l < a.z.size(); ++l) EXPECT_TRUE(a.z[l] == b.z[l]);
}

TEST(Forward, AttentionRowsAreDistributions) {
  auto cfg = small_config(Precision::kF32);
  const auto s = init_params<float>(cfg, {.rng_seed = 3});
  const auto toks = tokens_of("qwertyuiop");
  const auto tr = forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
  for (const auto& b : tr.blocks) {
    for (const auto& probs : b.probs) {
      for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        EXPECT_NEAR(probs.row(i).sum(), 1.0f, 1e-5f);
        EXPECT_GE(probs.row(i).minCoeff(), 0.0f);
        for (Eigen::Index j = i + 1; j < probs.cols(); ++j) EXPECT_EQ(probs(i, j), 0.0f);
      }
    }
  }
}

TEST(Forward, CausalMask) {
  auto cfg = small_config();
  const auto s = init_params<double>(cfg, {.rng_seed = 5});
  const auto a_toks = tokens_of("abcdefgh");
  auto b_toks = a_toks;
  const std::size_t p = 4;  // positions 0..p-1 of the input see only tokens < p
  std::reverse(b_toks.begin() + static_cast<long>(p), b_toks.end() - 1);
  b_toks[p] = synthlang::letter_id('z');
  const auto a = forward_trace(s, std::span<const TokenId>(a_toks), Mode::kEval);
  const auto b = forward_trace(s, std::span<const TokenId>(b_toks), Mode::kEval);
  for (std::size_t l = 0; l < a.z.size(); ++l) {
    EXPECT_TRUE(a.z[l].topRows(static_cast<Eigen::Index>(p)) == b.z[l].topRows(static_cast<Eigen::Index>(p))) << l;
    EXPECT_FALSE(a.z[l].row(static_cast<Eigen::Index>(p)) == b.z[l].row(static_cast<Eigen::Index>(p))) << l;
  }
}

TEST(Forward, NonFiniteNamesLayer) {
  auto s = init_params<double>(small_config(), {.rng_seed = 1});
  s.params.layers[0].w2(0, 0) = std::numeric_limits<double>::infinity();
  const auto toks = tokens_of("abc");
  try {
    forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Forward, DropoutNeedsRngAndIsSeeded) {
  auto cfg = small_config();
  cfg.dropout = 0.3;
  const auto s = init_params<double>(cfg, {.rng_seed = 1});
  const auto toks = tokens_of("abcabc");
  EXPECT_THROW(forward_trace(s, std::span<const TokenId>(toks), Mode::kTrain), ConfigError);
  Rng r1(9), r2(9);
  const auto a = forward_trace(s, std::span<const TokenId>(toks), Mode::kTrain, &r1);
  const auto b = forward_trace(s, std::span<const TokenId>(toks), Mode::kTrain, &r2);
  EXPECT_TRUE(a.logits == b.logits);
  const auto e = forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
  EXPECT_FALSE(a.logits == e.logits);
}

TEST(Backward, LogitGradientClosedForm) {
  const auto s = init_params<double>(small_config(), {.rng_seed = 6});
  const auto toks = tokens_of("mnopq");
  const auto [tr, g] = forward_backward(s, std::span<const TokenId>(toks), nullptr);
  MatD expect = tr.softmax;
  for (int i = 0; i < tr.positions(); ++i) expect(i, tr.targets[static_cast<std::size_t>(i)]) -= 1.0;
  EXPECT_LE((g.d_logits - expect).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Backward, SequenceGradientsAreAdditive) {
  const auto s = init_params<double>(small_config(), {.rng_seed = 6});
  const auto toks = tokens_of("abcd");
  const auto [tr, g] = forward_backward(s, std::span<const TokenId>(toks), nullptr);
  // A batch holding the sequence twice has twice its summed loss.
  auto twice = g.params;
  twice.visit([&](std::string_view name, MatD& m) {
    g.params.visit([&](std::string_view other, const MatD& one) {
      if (name == other) m += one;
    });
  });
  EXPECT_NEAR(global_norm(twice), 2.0 * global_norm(g.params), 1e-12);
}

TEST(GradCheck, SmallModelF64) {
  const auto report = grad_check(grad_check_config());
  EXPECT_LE(report.max_rel_error, 1e-5);
  EXPECT_FALSE(report.groups.empty());
}

TEST(GradCheck, WithDropout) {
  auto cfg = grad_check_config();
  cfg.dropout = 0.2;
  const auto report = grad_check(cfg, {.with_dropout = true});
  EXPECT_LE(report.max_rel_error, 1e-5);
}

TEST(GradCheck, F32LooseBound) {
  auto cfg = grad_check_config();
  cfg.precision = Precision::kF32;
  const auto report = grad_check(cfg, {.max_entries_per_group = 64});
  EXPECT_LE(report.max_rel_error, 1e-2);
}

TEST(Train, ZeroLearningRateIsNoOp) {
  const auto cfg = small_config();
  auto s = init_params<double>(cfg, {.rng_seed = 1});
  const auto before = s.params;
  std::vector<synthlang::TokenSequence> data{{0, tokens_of("abcab"), "abcab"}, {1, tokens_of("xyz"), "xyz"}};
  TrainConfig tc = TrainConfig::sgd_profile();
  tc.lr = 0.0;
  const double eval = evaluate_loss(s, data);
  const auto summary = train_epoch(s, data, tc);
  EXPECT_TRUE(s.params.lm_head == before.lm_head);
  EXPECT_TRUE(s.params.layers[1].w1 == before.layers[1].w1);
  EXPECT_NEAR(summary.mean_loss, eval, 1e-12);
  EXPECT_EQ(s.epoch, 1);
}

TEST(Train, SgdSingleStepClosedForm) {
  const auto cfg = small_config(Precision::kF32);
  auto s = init_params<float>(cfg, {.rng_seed = 2});
  const auto before = s.params;
  std::vector<synthlang::TokenSequence> data{{0, tokens_of("abcdefg"), "abcdefg"}};
  TrainConfig tc = TrainConfig::sgd_profile();
  tc.lr = 0.1;
  tc.max_grad_norm = 1e9;
  CaptureSink<float> sink;
  train_epoch(s, data, tc, &sink);
  ASSERT_EQ(sink.traces.size(), 1u);
  const auto& tr = sink.traces[0];
  const float eta = static_cast<float>(sink.infos[0].eta());
  Mat<float> expect = before.lm_head;
  for (int i = 0; i < tr.positions(); ++i) {
    Vec<float> err = tr.softmax.row(i).transpose();
    err(tr.targets[static_cast<std::size_t>(i)]) -= 1.0f;
    expect -= eta * err * tr.head_in.row(i);
  }
  EXPECT_LE((s.params.lm_head - expect).cwiseAbs().maxCoeff(), 1e-6f);
  // W_2 of every block: dL/db against the FFN activations.
  const auto& g = sink.grads[0];
  for (std::size_t l = 0; l < s.params.layers.size(); ++l) {
    const Mat<float> w2 = before.layers[l].w2 - eta * g.d_ffn_out[l].transpose() * tr.blocks[l].ffn_act;
    EXPECT_LE((s.params.layers[l].w2 - w2).cwiseAbs().maxCoeff(), 1e-6f);
    const Mat<float> wo = before.layers[l].wo - eta * g.d_attn_out[l].transpose() * tr.blocks[l].attn_value;
    EXPECT_LE((s.params.layers[l].wo - wo).cwiseAbs().maxCoeff(), 1e-6f);
  }
}

TEST(Train, ClippingScalesEta) {
  const auto cfg = small_config();
  auto s = init_params<double>(cfg, {.rng_seed = 3});
  std::vector<synthlang::TokenSequence> data{{0, tokens_of("hello"), "hello"}};
  TrainConfig tc = TrainConfig::sgd_profile();
  tc.lr = 0.5;
  tc.max_grad_norm = 1e-3;
  CaptureSink<double> sink;
  train_epoch(s, data, tc, &sink);
  const double norm = global_norm(sink.grads[0].params);
  EXPECT_GT(norm, 1e-3);
  EXPECT_NEAR(sink.infos[0].eta(), 0.5 * 1e-3 / norm, 1e-6);
  EXPECT_DOUBLE_EQ(clip_scale(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(clip_scale(0.5, 1.0), 1.0);
}

TEST(Train, DeterministicEpochs) {
  auto cfg = small_config(Precision::kF32);
  cfg.dropout = 0.2;
  std::vector<synthlang::TokenSequence> data{{0, tokens_of("abcab"), "abcab"}, {1, tokens_of("xyzxy"), "xyzxy"},
                                             {2, tokens_of("qq"), "qq"}};
  auto a = init_params<float>(cfg, {.rng_seed = 4});
  auto b = init_params<float>(cfg, {.rng_seed = 4});
  const auto tc = TrainConfig::sgd_profile();
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(train_epoch(a, data, tc).mean_loss, train_epoch(b, data, tc).mean_loss);
  }
  EXPECT_TRUE(a.params.lm_head == b.params.lm_head);
  EXPECT_EQ(a.token_step, b.token_step);
}

TEST(Schedule, Cosine) {
  auto tc = TrainConfig::adamw_profile();
  EXPECT_EQ(tc.epochs, 300);
  EXPECT_DOUBLE_EQ(tc.lr_at_epoch(0), 1e-3);
  EXPECT_NEAR(tc.lr_at_epoch(150), 5e-4, 1e-15);
  EXPECT_NEAR(tc.lr_at_epoch(300), 0.0, 1e-15);
  const auto sgd = TrainConfig::sgd_profile();
  EXPECT_EQ(sgd.lr_at_epoch(100), 1.0);
  EXPECT_EQ(sgd.epochs, 174);
}

TEST(Optim, AdamWDecaysMatricesNotGains) {
  const auto cfg = small_config();
  auto s = init_params<double>(cfg, {.rng_seed = 1});
  const auto before = s.params;
  AdamState<double> st{Params<double>::zeros(cfg), Params<double>::zeros(cfg), 0};
  const auto zero = Params<double>::zeros(cfg);
  adamw_step(s.params, st, zero, 1.0, 0.01, 0.1, 0.9, 0.999, 1e-8);
  EXPECT_TRUE(s.params.final_gain == before.final_gain);
  EXPECT_TRUE(s.params.layers[0].ln1_gain == before.layers[0].ln1_gain);
  EXPECT_LE((s.params.lm_head - before.lm_head * (1.0 - 0.01 * 0.1)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto cfg = small_config(Precision::kF32);
  auto s = init_params<float>(cfg, {.rng_seed = 8});
  s.epoch = 3;
  s.token_step = 42;
  const auto path = temp_path("ckpt_rt.mlns");
  save_checkpoint(s, path);
  const auto back = load_checkpoint<float>(path, cfg);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.token_step, 42u);
  const auto toks = tokens_of("abcdef");
  const auto a = forward_trace(s, std::span<const TokenId>(toks), Mode::kEval);
  const auto b = forward_trace(back, std::span<const TokenId>(toks), Mode::kEval);
  EXPECT_TRUE(a.logits == b.logits);
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedAndMismatched) {
  const auto cfg = small_config();
  const auto s = init_params<double>(cfg, {.rng_seed = 8});
  const auto path = temp_path("ckpt_bad.mlns");
  save_checkpoint(s, path);
  auto other = cfg;
  other.d_ff = 64;
  try {
    load_checkpoint<double>(path, other);
    FAIL() << "expected a refusal";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("d_ff"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint<float>(path), FormatError);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
  EXPECT_THROW(load_checkpoint<double>(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint<double>(path), Error);
}
