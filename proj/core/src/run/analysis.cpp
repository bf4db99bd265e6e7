#include "innerloop/run/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "innerloop/error.hpp"
#include "innerloop/hist/dual.hpp"
#include "innerloop/probes/clustering.hpp"
#include "innerloop/probes/linear_layer.hpp"
#include "innerloop/util/rng.hpp"

namespace innerloop::run {

using probes::Report;

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<int> resolve_epochs(const Run& run, const std::vector<int>& requested) {
  if (requested.empty()) return run.checkpoints;
  for (int e : requested)
    if (std::find(run.checkpoints.begin(), run.checkpoints.end(), e) == run.checkpoints.end())
      throw ConfigError("run has no checkpoint for epoch " + std::to_string(e));
  return requested;
}

namespace {

struct Task {
  int epoch;
  std::string split;
};

std::vector<Task> tasks_for(const Run& run, const AnalysisScope& scope) {
  std::vector<Task> out;
  for (int e : resolve_epochs(run, scope.epochs))
    for (const auto& s : scope.splits) {
      run.split(s);
      out.push_back({e, s});
    }
  return out;
}

// Runs one report cell group per task and merges rows in task order.
Report run_tasks(const Run& run, const AnalysisScope& scope, const std::string& name,
                 const std::function<void(const Task&, Report&)>& fn) {
  const auto tasks = tasks_for(run, scope);
  std::vector<Report> parts(tasks.size());
  parallel_for(tasks.size(), scope.threads, [&](std::size_t i) { fn(tasks[i], parts[i]); });
  Report r;
  r.name = name;
  r.sources = {{"run", run.paths.dir},
               {"config_hash", run.config.model.hash()},
               {"dataset_hash", run.dataset_hash},
               {"profile", run.config.profile}};
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& t : tasks) cps.push_back(run.paths.checkpoint(t.epoch));
  r.sources["checkpoints"] = cps;
  for (auto& p : parts) r.rows.insert(r.rows.end(), p.rows.begin(), p.rows.end());
  r.sort();
  return r;
}

std::uint64_t token_step(const nn::Model& m) {
  return std::visit([](const auto& s) { return s.token_step; }, m.state());
}

}  // namespace

Report cluster_report(const Run& run, const ClusterOptions& o) {
  return run_tasks(run, o.scope, "cluster", [&](const Task& t, Report& out) {
    const auto model = run.model(t.epoch);
    const auto& seqs = run.split(t.split);
    const auto instances = probes::select_instances(seqs, {probes::PositionPolicy::kLastToken, 5});
    const auto reps = probes::collect_representations(model, seqs, instances, o.final_norm);
    for (auto kind : o.truths) {
      const auto truth = probes::ground_truth(instances, kind);
      for (std::size_t l = 0; l < reps.z.size(); ++l) {
        const auto seed = derive_seed(o.rng_seed, static_cast<std::uint64_t>(t.epoch) * 1000 + l);
        const auto s = probes::cluster_and_score(reps.z[l], truth, seed);
        const auto gt = probes::to_string(kind);
        const int layer = static_cast<int>(l);
        out.add(t.epoch, layer, t.split, gt, "f1", s.f1);
        out.add(t.epoch, layer, t.split, gt, "ari", s.ari);
        out.add(t.epoch, layer, t.split, gt, "ami", s.ami);
        out.add(t.epoch, layer, t.split, gt, "k", s.k);
      }
    }
  });
}

Report inner_loss_report(const Run& run, const InnerLossReportOptions& o) {
  return run_tasks(run, o.scope, "inner_loss", [&](const Task& t, Report& out) {
    const auto r = probes::inner_loss_curve(run.model(t.epoch), run.split(t.split), o.probe);
    for (std::size_t l = 0; l < r.mean.size(); ++l)
      out.add(t.epoch, static_cast<int>(l), t.split, "-", "mean_loss", r.mean[l]);
    out.add(t.epoch, -1, t.split, "-", "instances", static_cast<double>(r.curves.size()));
    out.add(t.epoch, -1, t.split, "-", "filtered", static_cast<double>(r.filtered));
  });
}

Report attention_report(const Run& run, const AttentionReportOptions& o) {
  if (!run.has_history()) throw ContractError("run " + run.paths.dir + " has no history log");
  AnalysisScope scope = o.scope;
  auto epochs = resolve_epochs(run, scope.epochs);
  epochs.erase(std::remove(epochs.begin(), epochs.end(), 0), epochs.end());
  if (epochs.empty()) throw ConfigError("attention over history needs a checkpoint after epoch 0");
  scope.epochs = epochs;
  return run_tasks(run, scope, "attention", [&](const Task& t, Report& out) {
    const auto model = run.model(t.epoch);
    const auto& seqs = run.split(t.split);
    const auto instances = probes::select_instances(seqs, {probes::PositionPolicy::kLastToken, 5});
    hist::HistoryReader log(run.paths.history());
    probes::AttentionHistoryOptions ao;
    ao.top_k = o.top_k;
    ao.before_epoch = static_cast<std::uint32_t>(t.epoch);
    const auto r = probes::attention_history(model, log, seqs, instances, ao);
    for (const auto& c : r.cells) {
      const auto m = probes::to_string(c.module);
      out.add(t.epoch, c.layer, t.split, "seed", m + "_top", c.top_same_seed);
      out.add(t.epoch, c.layer, t.split, "seed", m + "_bottom", c.bottom_same_seed);
      out.add(t.epoch, c.layer, t.split, "combination", m + "_top", c.top_same_combination);
      out.add(t.epoch, c.layer, t.split, "combination", m + "_bottom", c.bottom_same_combination);
    }
    out.add(t.epoch, -1, t.split, "-", "history_records", static_cast<double>(r.history_records));
  });
}

namespace {

std::vector<probes::NormTrajectory> trajectories(const nn::Model& model,
                                                 const std::vector<synthlang::TokenSequence>& seqs,
                                                 const std::vector<probes::ProbeInstance>& instances) {
  const auto reps = probes::collect_representations(model, seqs, instances);
  std::vector<probes::NormTrajectory> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i)
    for (const auto& z : reps.z) out[i].push_back(z.row(static_cast<Eigen::Index>(i)).norm());
  return out;
}

}  // namespace

Report norm_report(const Run& run, const NormReportOptions& o) {
  return run_tasks(run, o.scope, "norm", [&](const Task& t, Report& out) {
    const auto& seqs = run.split(t.split);
    const auto instances = probes::select_instances(seqs, o.selection);
    const auto s = probes::norm_stats(trajectories(run.model(t.epoch), seqs, instances), o.exclude_last);
    out.add(t.epoch, -1, t.split, "-", "pair_level", 100.0 * s.pair_level);
    out.add(t.epoch, -1, t.split, "-", "sequence_level", 100.0 * s.sequence_level);
    out.add(t.epoch, -1, t.split, "-", "pairs", static_cast<double>(s.pairs));
    out.add(t.epoch, -1, t.split, "-", "trajectories", static_cast<double>(s.trajectories));
  });
}

Report pca_report(const Run& run, const PcaReportOptions& o) {
  return run_tasks(run, o.scope, "pca", [&](const Task& t, Report& out) {
    const auto& seqs = run.split(t.split);
    auto instances = probes::select_instances(seqs, o.selection);
    if (instances.size() > o.max_trajectories) instances.resize(o.max_trajectories);
    const auto reps = probes::collect_representations(run.model(t.epoch), seqs, instances);
    const auto n = static_cast<Eigen::Index>(instances.size());
    const auto layers = static_cast<Eigen::Index>(reps.z.size());
    nn::MatD points(n * layers, reps.z.front().cols());
    for (Eigen::Index l = 0; l < layers; ++l) points.middleRows(l * n, n) = reps.z[static_cast<std::size_t>(l)];
    const auto pca = probes::pca3(points);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto traj = "traj" + std::to_string(i);
      for (Eigen::Index l = 0; l < layers; ++l) {
        const auto row = l * n + i;
        const int layer = static_cast<int>(l);
        out.add(t.epoch, layer, t.split, traj, "pc1", pca.coords(row, 0));
        out.add(t.epoch, layer, t.split, traj, "pc2", pca.coords(row, 1));
        out.add(t.epoch, layer, t.split, traj, "pc3", pca.coords(row, 2));
        out.add(t.epoch, layer, t.split, traj, "norm", points.row(row).norm());
      }
    }
    for (int k = 0; k < 3; ++k)
      out.add(t.epoch, -1, t.split, "-", "explained_pc" + std::to_string(k + 1),
              pca.total_variance > 0 ? pca.variance(k) / pca.total_variance : 0.0);
  });
}

Report eigen_report(const Run& run, const EigenReportOptions& o) {
  return run_tasks(run, o.scope, "eigen", [&](const Task& t, Report& out) {
    const auto model = run.model(t.epoch);
    const auto params = model.params();
    const auto& cfg = model.config();
    const auto& seqs = run.split(t.split);
    auto instances = probes::select_instances(seqs, {probes::PositionPolicy::kLastToken, 5});
    if (instances.size() > o.contexts) instances.resize(o.contexts);
    std::vector<std::size_t> consistent(static_cast<std::size_t>(cfg.n_layers)), nondec(consistent),
        holds(consistent);
    for (const auto& in : instances) {
      const auto trace = model.probe(seqs[in.sequence].tokens);
      for (int l = 1; l <= cfg.n_layers; ++l) {
        const auto& z = trace.z[static_cast<std::size_t>(l - 1)];
        const nn::MatD context = z.topRows(in.position + 1);
        const Eigen::VectorXd x = z.row(in.position).transpose();
        const auto lin = probes::build_linear_layer(params, cfg, l, context);
        const auto r = probes::prop1_check(lin.w_linear, x);
        const auto li = static_cast<std::size_t>(l - 1);
        consistent[li] += r.consistent;
        nondec[li] += r.norm_nondec;
        holds[li] += r.condition_holds;
      }
    }
    const auto n = static_cast<double>(instances.size());
    for (int l = 1; l <= cfg.n_layers; ++l) {
      const auto li = static_cast<std::size_t>(l - 1);
      out.add(t.epoch, l, t.split, "-", "consistent", 100.0 * static_cast<double>(consistent[li]) / n);
      out.add(t.epoch, l, t.split, "-", "norm_nondec", 100.0 * static_cast<double>(nondec[li]) / n);
      out.add(t.epoch, l, t.split, "-", "condition_holds", 100.0 * static_cast<double>(holds[li]) / n);
      out.add(t.epoch, l, t.split, "-", "contexts", n);
    }
  });
}

std::vector<DualityResult> verify_duality(const Run& run, std::optional<int> epoch) {
  if (!run.has_history()) throw ContractError("run " + run.paths.dir + " has no history log");
  const int e = epoch.value_or(run.final_epoch());
  const auto initial = run.model(0);
  const auto trained = run.model(e);
  const auto p0 = initial.params();
  const auto p1 = trained.params();
  const auto& cfg = run.config.model;

  std::vector<hist::WeightRef> refs{hist::WeightRef::lm_head()};
  for (int l : run.config.history.grad_layers) {
    refs.push_back(hist::WeightRef::out_proj(l));
    for (int h = 0; h < cfg.n_heads; ++h) refs.push_back(hist::WeightRef::out_proj(l, h));
    refs.push_back(hist::WeightRef::ffn_out(l));
  }
  std::vector<nn::MatD> init;
  for (const auto& r : refs) init.push_back(hist::select_weight(p0, cfg, r));

  std::vector<nn::MatD> rebuilt = init;
  const auto steps = token_step(trained);
  if (steps > 0) {
    hist::HistoryReader log(run.paths.history());
    rebuilt = hist::reconstruct_weights(log, refs, init, steps - 1);
  }
  std::vector<DualityResult> out;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto actual = hist::select_weight(p1, cfg, refs[k]);
    out.push_back({refs[k].name(), (rebuilt[k] - actual).cwiseAbs().maxCoeff()});
  }
  return out;
}

DualHeadResult verify_dual_head(const Run& run, std::size_t queries, std::optional<int> epoch) {
  if (!run.has_history()) throw ContractError("run " + run.paths.dir + " has no history log");
  const int e = epoch.value_or(run.final_epoch());
  const auto model = run.model(e);
  const auto& seqs = run.data.validation;
  auto instances = probes::select_instances(seqs, {probes::PositionPolicy::kLastToken, 5});
  if (instances.size() > queries) instances.resize(queries);
  if (instances.empty()) throw ConfigError("no validation queries");

  nn::MatD q(static_cast<Eigen::Index>(instances.size()), run.config.model.d_model);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto trace = model.probe(seqs[instances[i].sequence].tokens);
    q.row(static_cast<Eigen::Index>(i)) = trace.head_in.row(instances[i].position);
  }
  const nn::MatD primal = q * model.params().lm_head.transpose();

  DualHeadResult r;
  r.queries = instances.size();
  r.zero_init = run.config.init.zero_lm_head;
  nn::MatD dual = nn::MatD::Zero(primal.rows(), primal.cols());
  const auto steps = token_step(model);
  if (steps > 0) {
    hist::HistoryReader log(run.paths.history());
    dual = hist::dual_head_logits(log, q, steps - 1);
  }
  r.max_abs_diff = (dual - primal).cwiseAbs().maxCoeff();
  std::size_t agree = 0;
  for (Eigen::Index i = 0; i < primal.rows(); ++i) {
    Eigen::Index a = 0, b = 0;
    primal.row(i).maxCoeff(&a);
    dual.row(i).maxCoeff(&b);
    agree += a == b;
  }
  r.argmax_agreement = 100.0 * static_cast<double>(agree) / static_cast<double>(primal.rows());
  return r;
}

Report trace_report(const probes::Trace& trace, bool exclude_last, const std::optional<nn::MatD>& head,
                    const std::optional<std::vector<std::uint32_t>>& labels, std::optional<double> filter_loss) {
  Report r;
  r.name = "trace";
  r.sources = {{"samples", trace.n_samples}, {"points_per_sample", trace.points}, {"dim", trace.dim}};
  const auto s = probes::norm_stats(trace.norm_trajectories(), exclude_last);
  r.add(0, -1, "trace", "-", "pair_level", 100.0 * s.pair_level);
  r.add(0, -1, "trace", "-", "sequence_level", 100.0 * s.sequence_level);
  r.add(0, -1, "trace", "-", "pairs", static_cast<double>(s.pairs));
  r.add(0, -1, "trace", "-", "trajectories", static_cast<double>(s.trajectories));
  if (head) {
    if (!labels) throw ConfigError("inner loss on a trace needs its .labels file");
    std::vector<nn::MatD> samples;
    std::vector<int> targets;
    for (std::uint32_t i = 0; i < trace.n_samples; ++i) {
      samples.push_back(trace.sample(i));
      targets.push_back(static_cast<int>((*labels)[i]));
    }
    const auto il = probes::inner_loss_external(samples, targets, *head, filter_loss);
    for (std::size_t l = 0; l < il.mean.size(); ++l) r.add(0, static_cast<int>(l), "trace", "-", "mean_loss", il.mean[l]);
    r.add(0, -1, "trace", "-", "filtered", static_cast<double>(il.filtered));
  }
  return r;
}

}  // namespace innerloop::run
