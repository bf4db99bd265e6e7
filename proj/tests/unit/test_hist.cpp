#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "innerloop/error.hpp"
#include "innerloop/hist/dual.hpp"
#include "innerloop/hist/recorder.hpp"
#include "innerloop/nn/trainer.hpp"

using namespace innerloop;
using namespace innerloop::nn;
using namespace innerloop::hist;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("innerloop_test_" + name)).string();
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 12;
  c.max_seq_len = 16;
  c.dropout = 0.1;
  c.precision = Precision::kF64;
  return c;
}

std::vector<synthlang::TokenSequence> tiny_data() {
  std::vector<synthlang::TokenSequence> out;
  const char* texts[] = {"abcd", "abce", "xyz", "xyzz", "qqq"};
  int seed = 0;
  for (const char* t : texts) out.push_back({seed++ % 3, synthlang::encode(t), t});
  return out;
}

struct Trained {
  ModelState<double> initial;
  ModelState<double> final;
  std::string path;
};

Trained train_logged(const std::string& name, ModelConfig cfg, int epochs, LogHeader header = {},
                     std::vector<int> grad_layers = {1, 2}, InitOptions init = {.rng_seed = 3},
                     TrainConfig tc = TrainConfig::sgd_profile()) {
  Trained t;
  t.path = temp_path(name);
  t.initial = init_params<double>(cfg, init);
  t.final = t.initial;
  header.model = cfg;
  header.optimizer = tc.optimizer;
  header.layout = RecordLayout::for_model(cfg, {1, 2}, grad_layers);
  tc.lr = 0.3;
  {
    HistoryWriter w(t.path, header);
    HistoryRecorder<double> rec(w);
    const auto data = tiny_data();
    for (int e = 0; e < epochs; ++e) train_epoch(t.final, data, tc, &rec);
    w.close();
  }
  return t;
}

}  // namespace

TEST(Layout, SizesAndOffsets) {
  const auto l = RecordLayout::for_model(tiny_config(), {2, 1, 2}, {2});
  EXPECT_EQ(l.value_layers, (std::vector<int>{1, 2}));
  EXPECT_EQ(l.value_count(), 1u + 8 + 28 + 2 * 8 + 2 * 12 + 2 * 8);
  EXPECT_EQ(l.payload_bytes(), 24u + l.value_count() * 8);
  EXPECT_LT(l.d_attn_out_offset(1), 0);
  EXPECT_GE(l.d_attn_out_offset(2), 0);
  EXPECT_THROW(RecordLayout::for_model(tiny_config(), {3}, {}), ConfigError);
}

TEST(Log, OneRecordPerSupervisedPosition) {
  auto cfg = tiny_config();
  const auto t = train_logged("positions.hlog", cfg, 1);
  HistoryReader r(t.path);
  std::map<std::uint32_t, int> per_sequence;
  HistoryRecord rec;
  std::uint64_t last_step = 0;
  bool first = true;
  while (r.next(rec)) {
    per_sequence[rec.sequence_id]++;
    if (!first) {
      EXPECT_EQ(rec.step, last_step + 1);
    }
    last_step = rec.step;
    first = false;
    EXPECT_NEAR(rec.softmax(r.layout()).sum(), 1.0, 1e-12);
  }
  // "abcd" encodes to 6 tokens, i.e. 5 supervised positions.
  EXPECT_EQ(per_sequence[0], 5);
  EXPECT_EQ(per_sequence[2], 4);
  EXPECT_EQ(r.declared_count(), 5u + 5 + 4 + 5 + 4);
  EXPECT_FALSE(r.truncated());
  std::filesystem::remove(t.path);
}

TEST(Log, LengthFiveSequenceGivesFourRecords) {
  auto cfg = tiny_config();
  const auto path = temp_path("len5.hlog");
  LogHeader h;
  h.model = cfg;
  h.layout = RecordLayout::for_model(cfg, {1}, {1});
  auto s = init_params<double>(cfg, {.rng_seed = 1});
  {
    HistoryWriter w(path, h);
    HistoryRecorder<double> rec(w);
    std::vector<synthlang::TokenSequence> one{{0, synthlang::encode("abc"), "abc"}};
    train_epoch(s, one, TrainConfig::sgd_profile(), &rec);
  }
  HistoryReader r(path);
  HistoryRecord rec;
  int n = 0;
  while (r.next(rec)) {
    EXPECT_EQ(rec.position, n);
    ++n;
  }
  EXPECT_EQ(n, 4);
  std::filesystem::remove(path);
}

TEST(Log, StrideSkipsEpochs) {
  LogHeader h;
  h.stride = 2;
  const auto t = train_logged("stride.hlog", tiny_config(), 5, h);
  HistoryReader r(t.path);
  std::set<std::uint32_t> epochs;
  r.for_each({}, [&](const HistoryRecord& rec) { epochs.insert(rec.epoch); });
  EXPECT_EQ(epochs, (std::set<std::uint32_t>{0, 2, 4}));
  EXPECT_THROW(reconstruct_weight(r, WeightRef::lm_head(), t.initial.params.lm_head), ContractError);
  std::filesystem::remove(t.path);
}

TEST(Log, Filters) {
  const auto t = train_logged("filters.hlog", tiny_config(), 3);
  HistoryReader r(t.path);
  RecordFilter one_epoch;
  one_epoch.epoch_min = one_epoch.epoch_max = 1;
  RecordFilter seed;
  seed.seed_label = 2;
  RecordFilter early;
  early.max_step = 9;
  EXPECT_EQ(r.for_each(one_epoch, [](const HistoryRecord& rec) { EXPECT_EQ(rec.epoch, 1u); }),
            23u);
  EXPECT_EQ(r.for_each(seed, [](const HistoryRecord& rec) { EXPECT_EQ(rec.seed_label, 2u); }),
            3u * 4);
  EXPECT_EQ(r.for_each(early, [](const HistoryRecord& rec) { EXPECT_LE(rec.step, 9u); }), 10u);
  std::filesystem::remove(t.path);
}

TEST(Log, TruncatedTailIsRecovered) {
  const auto t = train_logged("trunc.hlog", tiny_config(), 1);
  std::uint64_t full = 0;
  {
    HistoryReader r(t.path);
    full = r.for_each({}, [](const HistoryRecord&) {});
  }
  std::filesystem::resize_file(t.path, std::filesystem::file_size(t.path) - 7);
  HistoryReader r(t.path);
  EXPECT_EQ(r.for_each({}, [](const HistoryRecord&) {}), full - 1);
  EXPECT_TRUE(r.truncated());
  EXPECT_THROW(reconstruct_weight(r, WeightRef::lm_head(), t.initial.params.lm_head), FormatError);
  std::filesystem::remove(t.path);
}

TEST(Log, CorruptFrameStopsReading) {
  const auto t = train_logged("crc.hlog", tiny_config(), 1);
  const auto size = std::filesystem::file_size(t.path);
  {
    std::fstream f(t.path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    char c = 0;
    f.read(&c, 1);
    f.seekp(static_cast<std::streamoff>(size / 2));
    c = static_cast<char>(c ^ 0x5a);
    f.write(&c, 1);
  }
  HistoryReader r(t.path);
  const auto n = r.for_each({}, [](const HistoryRecord&) {});
  EXPECT_TRUE(r.truncated());
  EXPECT_LT(n, 23u);
  std::filesystem::remove(t.path);
}

TEST(Log, UnclosedLogHasNoDeclaredCount) {
  auto cfg = tiny_config();
  const auto path = temp_path("open.hlog");
  LogHeader h;
  h.model = cfg;
  h.layout = RecordLayout::for_model(cfg, {1}, {1});
  HistoryWriter w(path, h);
  HistoryRecord rec;
  rec.values.assign(h.layout.value_count(), 0.5);
  w.append(rec);
  w.flush();
  HistoryReader r(path);
  EXPECT_FALSE(r.declared_count().has_value());
  EXPECT_EQ(r.for_each({}, [](const HistoryRecord& x) { EXPECT_EQ(x.values[3], 0.5); }), 1u);
  rec.values.pop_back();
  EXPECT_THROW(w.append(rec), ConfigError);
  w.close();
  std::filesystem::remove(path);
}

TEST(Log, BadMagicAndMissingFile) {
  const auto path = temp_path("magic.hlog");
  std::ofstream(path) << "NOPE....";
  EXPECT_THROW(HistoryReader{path}, FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(HistoryReader{path}, IoError);
}

TEST(Dual, ReconstructsSgdWeights) {
  const auto t = train_logged("dual.hlog", tiny_config(), 3);
  HistoryReader r(t.path);
  const auto cfg = t.final.config;
  std::vector<WeightRef> refs{WeightRef::lm_head(), WeightRef::out_proj(1), WeightRef::out_proj(2, 1),
                              WeightRef::ffn_out(1), WeightRef::ffn_out(2)};
  std::vector<MatD> initial;
  for (const auto& w : refs) initial.push_back(select_weight(t.initial.params, cfg, w));
  const auto rebuilt = reconstruct_weights(r, refs, initial);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const MatD expect = select_weight(t.final.params, cfg, refs[i]);
    EXPECT_LE((rebuilt[i] - expect).cwiseAbs().maxCoeff(), 1e-12) << refs[i].name();
  }
  std::filesystem::remove(t.path);
}

TEST(Dual, ZeroStepsGivesInitialWeights) {
  auto cfg = tiny_config();
  const auto path = temp_path("empty.hlog");
  LogHeader h;
  h.model = cfg;
  h.layout = RecordLayout::for_model(cfg, {1}, {1});
  { HistoryWriter w(path, h); }
  HistoryReader r(path);
  const auto s = init_params<double>(cfg, {.rng_seed = 2});
  EXPECT_TRUE(reconstruct_weight(r, WeightRef::ffn_out(1), s.params.layers[0].w2) == s.params.layers[0].w2);
  bool empty = false;
  const MatD q = MatD::Ones(2, cfg.d_model);
  EXPECT_TRUE(dual_head_logits(r, q, std::nullopt, &empty).isZero(0.0));
  EXPECT_TRUE(empty);
  std::filesystem::remove(path);
}

TEST(Dual, RefusesAdamWAndMissingBlocks) {
  auto tc = TrainConfig::adamw_profile();
  const auto t = train_logged("adamw.hlog", tiny_config(), 1, {}, {1}, {.rng_seed = 3}, tc);
  HistoryReader r(t.path);
  EXPECT_THROW(reconstruct_weight(r, WeightRef::lm_head(), t.initial.params.lm_head), ContractError);
  std::filesystem::remove(t.path);

  const auto s = train_logged("missing.hlog", tiny_config(), 1, {}, {1});
  HistoryReader r2(s.path);
  try {
    reconstruct_weight(r2, WeightRef::ffn_out(2), s.initial.params.layers[1].w2);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
  std::filesystem::remove(s.path);
}

TEST(Dual, HeadLogitsMatchPrimalFromZeroHead) {
  const auto t = train_logged("head.hlog", tiny_config(), 2, {}, {1}, {.rng_seed = 5, .zero_lm_head = true});
  HistoryReader r(t.path);
  Rng rng(1);
  MatD q(7, t.final.config.d_model);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
  const MatD dual = dual_head_logits(r, q);
  const MatD primal = q * t.final.params.lm_head.transpose();
  EXPECT_LE((dual - primal).cwiseAbs().maxCoeff(), 1e-12);
  std::filesystem::remove(t.path);
}

TEST(Dual, WeightingFactors) {
  auto cfg = tiny_config();
  cfg.activation = Activation::kRelu;
  const auto t = train_logged("weights.hlog", cfg, 1);
  HistoryReader r(t.path);
  Rng rng(2);
  Eigen::VectorXd u(cfg.d_head()), a(cfg.d_ff);
  for (auto& x : u) x = rng.normal();
  for (auto& x : a) x = std::abs(rng.normal());
  const auto mw = mhsa_weights(r, 2, 1, u);
  const auto fw = ffn_weights(r, 1, a);
  ASSERT_EQ(mw.size(), 23u);
  ASSERT_EQ(fw.size(), 23u);
  r.rewind();
  HistoryRecord rec;
  std::size_t i = 0;
  while (r.next(rec)) {
    EXPECT_NEAR(mw[i].weight, rec.attn_value(r.layout(), 2, 1).dot(u), 1e-12);
    EXPECT_EQ(mw[i].step, rec.step);
    // ReLU activations and a non-negative query give non-negative factors.
    EXPECT_GE(fw[i].weight, 0.0);
    ++i;
  }
  EXPECT_THROW(mhsa_weights(r, 3, 0, u), Error);
  std::filesystem::remove(t.path);
}
