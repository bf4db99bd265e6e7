#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "innerloop/error.hpp"
#include "innerloop/hist/log.hpp"
#include "innerloop/probes/attention_history.hpp"
#include "innerloop/probes/clustering.hpp"
#include "innerloop/probes/inner_loss.hpp"
#include "innerloop/probes/linalg.hpp"
#include "innerloop/probes/linear_layer.hpp"
#include "innerloop/probes/report.hpp"
#include "innerloop/probes/xtrc.hpp"
#include "metric_oracles.hpp"

using namespace innerloop;
using namespace innerloop::probes;
using nn::MatD;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("innerloop_test_" + name)).string();
}

nn::ModelConfig tiny_config() {
  nn::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 12;
  c.max_seq_len = 16;
  c.dropout = 0.0;
  c.precision = nn::Precision::kF64;
  return c;
}

MatD gaussian_blobs(const std::vector<Eigen::VectorXd>& centers, int per, double sigma, Rng& rng, Labels& labels) {
  const auto dim = centers[0].size();
  MatD pts(static_cast<Eigen::Index>(centers.size()) * per, dim);
  labels.clear();
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (int i = 0; i < per; ++i) {
      const auto row = static_cast<Eigen::Index>(c) * per + i;
      for (Eigen::Index j = 0; j < dim; ++j) pts(row, j) = centers[c](j) + sigma * rng.normal();
      labels.push_back(static_cast<int>(c));
    }
  return pts;
}

}  // namespace

TEST(Metrics, HandWorkedCases) {
  EXPECT_DOUBLE_EQ(pairwise_f1({0, 1, 2}, {0, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(pairwise_f1({0, 1, 2, 3}, {0, 0, 1, 1}), 0.0);
  // pred pairs {01, 23}, true pairs {01, 02, 12}: P = 1/2, R = 1/3.
  EXPECT_NEAR(pairwise_f1({0, 0, 1, 1}, {0, 0, 0, 1}), 0.4, 1e-15);
  EXPECT_NEAR(ari({0, 0, 1, 1}, {0, 0, 0, 1}), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(ari({5, 5, 7}, {1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(ari({0, 0, 0}, {1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ami({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(ami({0, 0, 0}, {2, 2, 2}), 1.0);
  EXPECT_THROW(ari({0, 1}, {0}), ConfigError);
  EXPECT_THROW(ami({0, 1}, {0}), ConfigError);
  EXPECT_THROW(pairwise_f1({0}, {0, 1}), ConfigError);
  EXPECT_EQ(dense_labels({7, 3, 7, 9}), (Labels{0, 1, 0, 2}));
}

TEST(Metrics, MatchOraclesOnAllPartitionsUpToSix) {
  oracle::ExpectedMi emi;
  for (int n = 1; n <= 6; ++n) {
    const auto parts = oracle::partitions(n);
    for (const auto& p : parts)
      for (const auto& t : parts) {
        ASSERT_NEAR(pairwise_f1(p, t), oracle::f1(p, t), 1e-12);
        ASSERT_NEAR(ari(p, t), oracle::ari(p, t), 1e-12);
        ASSERT_NEAR(ami(p, t), oracle::ami(p, t, emi), 1e-9);
      }
  }
}

TEST(Metrics, ShuffledLabelsScoreNearZero) {
  Rng rng(11);
  Labels truth;
  for (int i = 0; i < 120; ++i) truth.push_back(i % 6);
  Labels pred = truth;
  double sum_ari = 0, sum_ami = 0;
  const int trials = 300;
  for (int i = 0; i < trials; ++i) {
    rng.shuffle(pred.begin(), pred.end());
    sum_ari += ari(pred, truth);
    sum_ami += ami(pred, truth);
  }
  EXPECT_NEAR(sum_ari / trials, 0.0, 0.02);
  EXPECT_NEAR(sum_ami / trials, 0.0, 0.02);
}

TEST(KMeans, SeparatedPairs) {
  MatD pts(4, 2);
  pts << 0, 0, 0.1, 0, 10, 0, 10.1, 0;
  const auto r = kmeans(pts, 2, 1);
  EXPECT_EQ(r.labels[0], r.labels[1]);
  EXPECT_EQ(r.labels[2], r.labels[3]);
  EXPECT_NE(r.labels[0], r.labels[2]);
}

TEST(KMeans, KEqualsPointCount) {
  MatD pts(5, 3);
  Rng rng(2);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  const auto r = kmeans(pts, 5, 3);
  EXPECT_NEAR(r.inertia, 0.0, 1e-20);
  EXPECT_EQ(std::set<int>(r.labels.begin(), r.labels.end()).size(), 5u);
  EXPECT_THROW(kmeans(pts, 6, 3), ConfigError);
}

TEST(KMeans, RecoversGaussianBlobs) {
  Rng rng(3);
  std::vector<Eigen::VectorXd> centers(3, Eigen::VectorXd::Zero(5));
  centers[1](0) = 10;
  centers[2](1) = 10;
  Labels truth;
  const auto pts = gaussian_blobs(centers, 34, 0.1, rng, truth);
  const auto r = kmeans(pts, 3, 4);
  EXPECT_DOUBLE_EQ(ari(r.labels, truth), 1.0);
  const auto s = cluster_and_score(pts, truth, 4);
  EXPECT_EQ(s.k, 3);
  EXPECT_DOUBLE_EQ(s.f1, 1.0);
  EXPECT_DOUBLE_EQ(s.ami, 1.0);
}

TEST(KMeans, InertiaNonIncreasingAndDeterministic) {
  Rng rng(4);
  MatD pts(300, 4);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  const auto a = kmeans(pts, 7, 9);
  for (std::size_t i = 1; i < a.inertia_trace.size(); ++i)
    EXPECT_LE(a.inertia_trace[i], a.inertia_trace[i - 1] * (1 + 1e-12));
  const auto b = kmeans(pts, 7, 9);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, DuplicatePointsKeepKClusters) {
  MatD pts(6, 2);
  pts << 0, 0, 0, 0, 0, 0, 0, 0, 5, 5, 5, 6;
  const auto r = kmeans(pts, 3, 1);
  EXPECT_EQ(std::set<int>(r.labels.begin(), r.labels.end()).size(), 3u);
}

TEST(Clustering, NeedsTwoLabels) {
  MatD pts = MatD::Random(5, 2);
  EXPECT_THROW(cluster_and_score(pts, {1, 1, 1, 1, 1}, 0), ConfigError);
}

TEST(Norms, Examples) {
  auto s = norm_stats({{1, 1, 2, 3}}, false);
  EXPECT_DOUBLE_EQ(s.pair_level, 1.0);
  EXPECT_DOUBLE_EQ(s.sequence_level, 1.0);
  s = norm_stats({{1, 2, 1.5, 3}}, false);
  EXPECT_NEAR(s.pair_level, 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.sequence_level, 0.0);
  s = norm_stats({{1, 2, 3, 0.5}, {2, 2, 2, 2}}, true);
  EXPECT_DOUBLE_EQ(s.sequence_level, 1.0);
  EXPECT_EQ(s.pairs, 4u);
  s = norm_stats({{1, 2, 3, 0.5}}, false);
  EXPECT_DOUBLE_EQ(s.sequence_level, 0.0);
  EXPECT_THROW(norm_stats({}, false), ConfigError);
  EXPECT_THROW(norm_stats({{1, 2}}, true), ConfigError);
  EXPECT_THROW(norm_stats({{1, -2}}, false), NumericError);
}

TEST(Norms, RandomWalkTrajectoriesMatchChance) {
  Rng rng(5);
  std::vector<NormTrajectory> ts(20000, NormTrajectory(12));
  for (auto& t : ts) {
    t[0] = 100.0;
    for (std::size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] + rng.normal();
  }
  const auto s = norm_stats(ts, false);
  const double p = std::ldexp(1.0, -11);
  EXPECT_NEAR(s.pair_level, 0.5, 0.01);
  EXPECT_NEAR(s.sequence_level, p, 4 * std::sqrt(p / 20000));
}

TEST(Linalg, SymEigBasics) {
  const auto id = sym_eig(MatD::Identity(4, 4));
  EXPECT_TRUE(id.values.isApprox(Eigen::VectorXd::Ones(4)));
  MatD d = MatD::Zero(3, 3);
  d.diagonal() << 3, 1, 2;
  const auto e = sym_eig(d);
  EXPECT_EQ(e.values, Eigen::Vector3d(3, 2, 1));
  EXPECT_NEAR(e.vectors.cwiseAbs().sum(), 3.0, 1e-12);
  MatD ns = MatD::Identity(3, 3);
  ns(0, 1) = 1;
  EXPECT_THROW(sym_eig(ns), ConfigError);
}

TEST(Linalg, SymEigRandomReconstruction) {
  Rng rng(6);
  MatD a(64, 64);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const MatD m = a + a.transpose();
  const auto e = sym_eig(m);
  const MatD rebuilt = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
  EXPECT_LE((rebuilt - m).norm(), 1e-8 * m.norm());
  EXPECT_LE((e.vectors.transpose() * e.vectors - MatD::Identity(64, 64)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index i = 1; i < 64; ++i) EXPECT_GE(e.values(i - 1), e.values(i));
}

TEST(Linalg, PcaSubspaceAndAxes) {
  Rng rng(7);
  MatD pts = MatD::Zero(50, 64);
  for (Eigen::Index i = 0; i < 50; ++i) {
    pts(i, 3) = rng.normal() * 3;
    pts(i, 10) = rng.normal() * 2;
    pts(i, 40) = rng.normal();
  }
  const auto p = pca3(pts);
  EXPECT_EQ(p.rank, 3);
  const MatD back = (p.coords * p.axes.transpose()).rowwise() + p.mean.transpose();
  EXPECT_LE((back - pts).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((p.axes.transpose() * p.axes - MatD::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  for (int c = 0; c < 3; ++c) {
    Eigen::Index at = 0;
    p.axes.col(c).cwiseAbs().maxCoeff(&at);
    EXPECT_GT(p.axes(at, c), 0.0);
  }
}

TEST(Linalg, PcaAnisotropicVariance) {
  Rng rng(8);
  const int n = 20000;
  MatD pts(n, 6);
  const double sd[6] = {3, 2, 1, 0.3, 0.2, 0.1};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 6; ++j) pts(i, j) = sd[j] * rng.normal();
  const auto p = pca3(pts);
  EXPECT_NEAR(p.variance(0), 9.0, 0.18);
  EXPECT_NEAR(p.variance(1), 4.0, 0.08);
  EXPECT_NEAR(p.variance(2), 1.0, 0.02);
}

TEST(Linalg, PcaPadsLowRank) {
  MatD pts = MatD::Zero(6, 5);
  for (int i = 0; i < 6; ++i) pts(i, 0) = i;
  const auto p = pca3(pts);
  EXPECT_LT(p.rank, 3);
  EXPECT_FALSE(p.warning.empty());
  EXPECT_THROW(pca3(MatD::Zero(3, 5)), ConfigError);
}

TEST(Prop1, ScaledIdentity) {
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1, 2);
  auto r = prop1_check(2 * MatD::Identity(5, 5), x);
  EXPECT_TRUE(r.condition_holds);
  EXPECT_TRUE(r.norm_nondec);
  EXPECT_TRUE(r.consistent);
  EXPECT_NEAR(r.wx_norm, 2 * r.x_norm, 1e-12);
  r = prop1_check(0.5 * MatD::Identity(5, 5), x);
  EXPECT_FALSE(r.condition_holds);
  EXPECT_FALSE(r.norm_nondec);
  EXPECT_TRUE(r.consistent);
}

TEST(Prop1, SmallSweep) {
  const auto s = prop1_sweep(300, 16, 3);
  EXPECT_EQ(s.draws, 300u);
  EXPECT_EQ(s.disagreements, 0u);
  EXPECT_GT(s.condition_holds, 0u);
  EXPECT_LT(s.condition_holds, 300u);
}

TEST(LinearLayer, IdentityProjections) {
  auto cfg = tiny_config();
  cfg.n_heads = 1;
  auto p = nn::Params<double>::zeros(cfg);
  auto& l = p.layers[0];
  l.wq = l.wk = l.wv = l.wo = MatD::Identity(8, 8);
  Eigen::RowVectorXd z(8);
  z << 1, 2, 3, 4, 5, 6, 7, 8;
  const auto ll = build_linear_layer(p, cfg, 1, z);
  EXPECT_LE((ll.w_mhsa - z.transpose() * z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(ll.w_ffn.isZero(0.0));
  EXPECT_THROW(build_linear_layer(p, cfg, 3, z), ConfigError);
  EXPECT_THROW(build_linear_layer(p, cfg, 1, MatD(0, 8)), ConfigError);
}

TEST(LinearLayer, ZeroContextAndReassociation) {
  const auto cfg = tiny_config();
  const auto s = nn::init_params<double>(cfg, {.rng_seed = 3});
  const auto zero = build_linear_layer(s.params, cfg, 2, MatD::Zero(3, 8));
  EXPECT_TRUE(zero.w_mhsa.isZero(0.0));
  EXPECT_LE((zero.w_linear - (MatD::Identity(8, 8) + zero.w_ffn)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((zero.w_ffn - s.params.layers[1].w2 * s.params.layers[1].w1).cwiseAbs().maxCoeff(), 1e-15);

  Rng rng(1);
  MatD ctx(4, 8);
  for (Eigen::Index i = 0; i < ctx.size(); ++i) ctx.data()[i] = rng.normal();
  const auto ll = build_linear_layer(s.params, cfg, 1, ctx);
  const Eigen::VectorXd z = ctx.row(3).transpose();
  const Eigen::VectorXd step1 = z + ll.w_mhsa * z;
  const Eigen::VectorXd step2 = step1 + ll.w_ffn * step1;
  EXPECT_LE((ll.w_linear * z - step2).cwiseAbs().maxCoeff(), 1e-10);
  // Per-head sum written out.
  const int dh = cfg.d_head();
  MatD expect = MatD::Zero(8, 8);
  const auto& lp = s.params.layers[0];
  for (int h = 0; h < cfg.n_heads; ++h) {
    const MatD wq = lp.wq.middleRows(h * dh, dh), wk = lp.wk.middleRows(h * dh, dh);
    const MatD wv = lp.wv.middleRows(h * dh, dh), wo = lp.wo.middleCols(h * dh, dh);
    for (Eigen::Index i = 0; i < ctx.rows(); ++i)
      expect += wo * wv * ctx.row(i).transpose() * ctx.row(i) * wk.transpose() * wq;
  }
  EXPECT_LE((ll.w_mhsa - expect).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Xtrc, RoundTripAndErrors) {
  Trace t;
  t.n_samples = 3;
  t.points = 4;
  t.dim = 2;
  for (std::uint32_t i = 0; i < 24; ++i) t.data.push_back(static_cast<float>(i) * 0.5f);
  const auto path = temp_path("trace.xtrc");
  write_xtrc(t, path);
  const auto back = read_xtrc(path);
  EXPECT_EQ(back.data, t.data);
  EXPECT_EQ(norm_stats(back.norm_trajectories(), false).sequence_level, 1.0);
  EXPECT_FLOAT_EQ(static_cast<float>(back.sample(1)(2, 1)), 6.5f);

  EXPECT_FALSE(read_labels(labels_path(path), 3).has_value());
  write_labels({0, 2, 1}, labels_path(path));
  EXPECT_EQ(*read_labels(labels_path(path), 3), (std::vector<std::uint32_t>{0, 2, 1}));
  EXPECT_THROW(read_labels(labels_path(path), 4), FormatError);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_THROW(read_xtrc(path), FormatError);
  t.data[5] = std::numeric_limits<float>::quiet_NaN();
  write_xtrc(t, path);
  try {
    read_xtrc(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 0"), std::string::npos) << e.what();
  }
  std::ofstream(path, std::ios::binary) << "XTRX0000";
  EXPECT_THROW(read_xtrc(path), FormatError);
  std::filesystem::remove(path);
  std::filesystem::remove(labels_path(path));
}

TEST(Xtrc, HeadMatrixRoundTrip) {
  MatD head(3, 4);
  head << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0.5;
  const auto path = temp_path("head.mhead");
  write_mhead(head, path);
  EXPECT_TRUE(read_mhead(path) == head);
  std::filesystem::remove(path);
}

TEST(InnerLoss, ZeroHeadIsUniform) {
  const auto cfg = tiny_config();
  const nn::Model model(nn::init_params<double>(cfg, {.rng_seed = 1, .zero_lm_head = true}));
  std::vector<synthlang::TokenSequence> seqs{{0, synthlang::encode("abcde"), "abcde"},
                                             {1, synthlang::encode("xyz"), "xyz"}};
  for (bool final_norm : {true, false}) {
    InnerLossOptions opt;
    opt.final_norm = final_norm;
    opt.selection.policy = PositionPolicy::kAll;
    const auto r = inner_loss_curve(model, seqs, opt);
    EXPECT_EQ(r.curves.size(), 6u + 4u);
    ASSERT_EQ(r.mean.size(), 3u);
    for (double m : r.mean) EXPECT_NEAR(m, std::log(28.0), 1e-12);
  }
}

TEST(InnerLoss, ExternalAndFilter) {
  MatD head = MatD::Zero(3, 2);
  head(0, 0) = 1;
  head(1, 1) = 1;
  MatD s1(2, 2), s2(2, 2);
  s1 << 0, 0, 40, 0;  // strongly predicts token 0
  s2 << 0, 0, 0, 40;  // predicts token 1, target 0: loss ~ 40
  const auto r = inner_loss_external({s1, s2}, {0, 0}, head, 10.0);
  EXPECT_EQ(r.filtered, 1u);
  ASSERT_EQ(r.curves.size(), 1u);
  EXPECT_NEAR(r.curves[0].loss[0], std::log(3.0), 1e-12);
  EXPECT_NEAR(r.curves[0].loss[1], cross_entropy(Eigen::Vector3d(40, 0, 0), 0), 1e-15);
  EXPECT_NEAR(cross_entropy(Eigen::Vector3d(1000, 0, 0), 1), 1000.0, 1e-9);
}

TEST(ProbeSet, PoliciesAndLabels) {
  std::vector<synthlang::TokenSequence> seqs{{2, synthlang::encode("abcdef"), "abcdef"},
                                             {5, synthlang::encode("ab"), "ab"}};
  const auto last = select_instances(seqs, {PositionPolicy::kLastToken, 5});
  ASSERT_EQ(last.size(), 2u);
  EXPECT_EQ(last[0].position, 5);
  EXPECT_EQ(last[0].next_token, synthlang::letter_id('f'));
  EXPECT_EQ(last[1].position, 1);
  const auto from5 = select_instances(seqs, {PositionPolicy::kFromPosition, 5});
  EXPECT_EQ(from5.size(), 3u);
  EXPECT_EQ(select_instances(seqs, {PositionPolicy::kAll, 5}).size(), 7u + 3u);
  const auto combo = ground_truth(last, GroundTruthKind::kCombination);
  EXPECT_EQ(combo, (std::vector<int>{0, 1}));
  EXPECT_EQ(ground_truth(last, GroundTruthKind::kSeed), (std::vector<int>{2, 5}));
  EXPECT_EQ(to_string(position_policy_from_string("from_position")), "from_position");
  EXPECT_THROW(position_policy_from_string("middle"), ConfigError);
}

TEST(AttentionHistory, CraftedLogReachesFullAgreement) {
  const auto cfg = tiny_config();
  const nn::Model model(nn::init_params<double>(cfg, {.rng_seed = 2}));
  std::vector<synthlang::TokenSequence> seqs{{3, synthlang::encode("abcdef"), "abcdef"}};
  const auto instances = select_instances(seqs, {});
  const auto trace = model.probe(seqs[0].tokens);
  const int pos = instances[0].position;

  const auto path = temp_path("crafted.hlog");
  hist::LogHeader h;
  h.model = cfg;
  h.layout = hist::RecordLayout::for_model(cfg, {1, 2}, {});
  {
    hist::HistoryWriter w(path, h);
    for (int i = 0; i < 40; ++i) {
      hist::HistoryRecord r;
      r.step = static_cast<std::uint64_t>(i);
      r.seed_label = static_cast<std::uint16_t>(i % 4);
      r.next_token = static_cast<std::uint16_t>(instances[0].next_token);
      r.values.assign(h.layout.value_count(), 0.0);
      if (r.seed_label == 3) {
        for (int l = 1; l <= 2; ++l) {
          const auto u = trace.attn_value[static_cast<std::size_t>(l - 1)].row(pos);
          const auto a = trace.ffn_act[static_cast<std::size_t>(l - 1)].row(pos);
          std::copy(u.data(), u.data() + u.size(), r.values.begin() + h.layout.attn_value_offset(l));
          std::copy(a.data(), a.data() + a.size(), r.values.begin() + h.layout.ffn_act_offset(l));
        }
      }
      w.append(r);
    }
  }
  hist::HistoryReader log(path);
  const auto res = attention_history(model, log, seqs, instances, {.top_k = 10, .before_epoch = 1});
  ASSERT_EQ(res.cells.size(), 4u);
  EXPECT_EQ(res.history_records, 40u);
  for (const auto& c : res.cells) {
    EXPECT_DOUBLE_EQ(c.top_same_seed, 100.0) << c.layer << " " << to_string(c.module);
    EXPECT_DOUBLE_EQ(c.bottom_same_seed, 0.0);
    EXPECT_DOUBLE_EQ(c.top_same_combination, 100.0);
  }
  EXPECT_THROW(attention_history(model, log, seqs, instances, {.top_k = 50, .before_epoch = 1}), ContractError);
  EXPECT_THROW(attention_history(model, log, seqs, instances, {.top_k = 10, .before_epoch = 0}), ContractError);
  std::filesystem::remove(path);
}

TEST(Report, CsvAndLookup) {
  Report r;
  r.name = "demo";
  r.add(10, 2, "validation", "seed", "f1", 0.5);
  r.add(0, 1, "train", "-", "mean_loss", 0.1);
  r.sort();
  const auto csv = r.to_csv();
  EXPECT_EQ(csv, "epoch,layer,split,ground_truth,metric,value\n0,1,train,-,mean_loss,0.1\n"
                 "10,2,validation,seed,f1,0.5\n");
  ASSERT_NE(r.find(10, 2, "validation", "seed", "f1"), nullptr);
  EXPECT_EQ(r.find(10, 2, "validation", "seed", "ari"), nullptr);
  EXPECT_EQ(r.find("f1").size(), 1u);
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
  const auto dir = temp_path("report_dir");
  std::filesystem::create_directories(dir);
  r.write(dir);
  EXPECT_TRUE(std::filesystem::exists(dir + "/demo.csv"));
  EXPECT_EQ(nlohmann::json::parse(std::ifstream(dir + "/demo.json"))["rows"].size(), 2u);
  std::filesystem::remove_all(dir);
}
