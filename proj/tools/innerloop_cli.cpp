// innerloop: data generation, training with history recording, analyses and
// verification of the dual-form identities.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "innerloop/error.hpp"
#include "innerloop/nn/gradcheck.hpp"
#include "innerloop/probes/linalg.hpp"
#include "innerloop/probes/xtrc.hpp"
#include "innerloop/run/analysis.hpp"

namespace fs = std::filesystem;
using namespace innerloop;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("cannot write " + path.string());
}

std::vector<int> parse_layers(const std::string& s) {
  std::vector<int> out;
  if (s.empty() || s == "none") return out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad layer list '" + s + "' (expected comma-separated integers)");
    }
  }
  return out;
}

struct TrainFlags {
  std::string config;
  std::string profile;
  std::string out;
  int checkpoint_every = 0;
  int history_stride = 0;
  std::string record_grads;
  std::string precision;
  int epochs = -1;
  bool zero_lm_head = false;
  bool no_history = false;
};

run::RunConfig resolve(const TrainFlags& f) {
  if (!f.config.empty() && !f.profile.empty()) throw ConfigError("give either --config or --profile, not both");
  run::RunConfig c = !f.config.empty() ? run::load_run_config(f.config)
                     : !f.profile.empty() ? run::RunConfig::from_profile(f.profile)
                                          : run::RunConfig::sgd_small();
  if (f.checkpoint_every > 0) c.checkpoint_every = f.checkpoint_every;
  if (f.history_stride > 0) c.history.stride = f.history_stride;
  if (!f.record_grads.empty()) c.history.grad_layers = parse_layers(f.record_grads);
  if (!f.precision.empty()) {
    if (f.precision != "f32" && f.precision != "f64") throw ConfigError("--precision must be f32 or f64");
    c.model.precision = f.precision == "f64" ? nn::Precision::kF64 : nn::Precision::kF32;
  }
  if (f.epochs >= 0) c.train.epochs = f.epochs;
  if (f.zero_lm_head) c.init.zero_lm_head = true;
  if (f.no_history) c.history.enabled = false;
  c.validate();
  return c;
}

struct ScopeFlags {
  std::string run;
  std::string out;
  std::vector<int> epochs;
  std::string splits = "validation";
  int threads = 1;
};

run::AnalysisScope scope_of(const ScopeFlags& f) {
  run::AnalysisScope s;
  s.epochs = f.epochs;
  s.splits.clear();
  std::stringstream ss(f.splits);
  for (std::string item; std::getline(ss, item, ',');) s.splits.push_back(item);
  s.threads = f.threads;
  return s;
}

void add_scope(CLI::App* app, ScopeFlags& f) {
  app->add_option("--run", f.run, "Run directory written by 'train'")->required();
  app->add_option("--out", f.out, "Output directory")->required();
  app->add_option("--epochs", f.epochs, "Checkpoint epochs to analyze (default: all)")->delimiter(',');
  app->add_option("--split", f.splits, "Comma-separated splits: train, validation");
  app->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
}

// Writes the report plus a resolved description of the analysis.
void emit(const probes::Report& report, const ScopeFlags& f, const run::Run& r, nlohmann::json options) {
  options["run"] = f.run;
  options["run_config"] = r.config;
  options["epochs"] = f.epochs;
  options["splits"] = f.splits;
  write_json(fs::path(f.out) / ("resolved_" + report.name + ".json"), options);
  report.write(f.out);
  std::cout << "wrote " << (fs::path(f.out) / (report.name + ".csv")).string() << " (" << report.rows.size()
            << " rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"innerloop: transformer training-history analyses"};
  app.require_subcommand(1);

  // gen-data
  std::string gen_config, gen_profile, gen_out;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic regex-seeded dataset");
  gen->add_option("--config", gen_config, "Run config JSON (its data section is used)");
  gen->add_option("--profile", gen_profile, "sgd-small or adamw-large");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train a model and record its history");
  train->add_option("--config", tf.config, "Run config JSON");
  train->add_option("--profile", tf.profile, "sgd-small or adamw-large");
  train->add_option("--out", tf.out, "Run directory")->required();
  train->add_option("--checkpoint-every", tf.checkpoint_every, "Checkpoint interval in epochs");
  train->add_option("--history-stride", tf.history_stride, "Record every n-th epoch");
  train->add_option("--record-grads", tf.record_grads, "Layers whose output gradients are logged, e.g. 3 or 1,3");
  train->add_option("--precision", tf.precision, "f32 or f64");
  train->add_option("--epochs", tf.epochs, "Override the number of epochs");
  train->add_flag("--zero-lm-head", tf.zero_lm_head, "Initialize the LM head at zero");
  train->add_flag("--no-history", tf.no_history, "Do not write a history log");
  int train_threads = 1;
  train->add_option("--threads", train_threads, "Accepted for symmetry; training is single-threaded");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Run an analysis over a finished run");
  analyze->require_subcommand(1);
  ScopeFlags cluster_f, loss_f, attn_f, norm_f, pca_f, eigen_f;
  bool cluster_final_norm = false;
  auto* a_cluster = analyze->add_subcommand("cluster", "k-means clustering of last-token representations");
  add_scope(a_cluster, cluster_f);
  a_cluster->add_flag("--final-norm", cluster_final_norm, "Cluster final-norm-transformed representations");

  bool raw_head = false;
  double filter_loss = 0;
  int min_position = 0;
  std::string loss_policy = "last_token";
  auto* a_loss = analyze->add_subcommand("inner-loss", "Per-layer inner loss");
  add_scope(a_loss, loss_f);
  a_loss->add_flag("--raw-head-probe", raw_head, "Feed raw layer outputs to the LM head (no final norm)");
  a_loss->add_option("--filter-loss", filter_loss, "Drop instances whose last-layer loss exceeds this");
  a_loss->add_option("--min-position", min_position, "Probe every position from this one (1-based) onward");
  a_loss->add_option("--policy", loss_policy, "last_token, from_position or all");

  int top_k = 10;
  auto* a_attn = analyze->add_subcommand("attn", "Attention over the training history");
  add_scope(a_attn, attn_f);
  a_attn->add_option("--top-k", top_k, "Records ranked at each end")->check(CLI::PositiveNumber);

  bool exclude_last = false;
  int norm_min_position = 0;
  std::string norm_policy = "all";
  auto* a_norm = analyze->add_subcommand("norm", "Non-decreasing norm statistics");
  add_scope(a_norm, norm_f);
  a_norm->add_option("--exclude-last", exclude_last, "Drop the last layer from each trajectory (true/false)");
  a_norm->add_option("--min-position", norm_min_position, "Probe every position from this one (1-based) onward");
  a_norm->add_option("--policy", norm_policy, "last_token, from_position or all");

  std::size_t pca_max = 50;
  auto* a_pca = analyze->add_subcommand("pca", "3-D PCA trajectories across layers");
  add_scope(a_pca, pca_f);
  a_pca->add_option("--max-trajectories", pca_max, "Trajectories to emit");

  std::size_t contexts = 100;
  auto* a_eigen = analyze->add_subcommand("eigen", "Linearized-layer eigenvalue check");
  add_scope(a_eigen, eigen_f);
  a_eigen->add_option("--contexts", contexts, "Validation contexts per layer");

  // verify
  auto* verify = app.add_subcommand("verify", "Check exact identities");
  verify->require_subcommand(1);
  std::string v_run, v_out;
  int v_epoch = -1;
  double v_tol = 0;
  auto* v_dual = verify->add_subcommand("duality", "Rebuild trained weights from the history log");
  v_dual->add_option("--run", v_run, "Run directory")->required();
  v_dual->add_option("--out", v_out, "Output directory");
  v_dual->add_option("--epoch", v_epoch, "Checkpoint epoch (default: final)");
  v_dual->add_option("--tolerance", v_tol, "Max abs diff (default 1e-8 for f64, 1e-3 for f32)");
  std::size_t v_queries = 100;
  auto* v_head = verify->add_subcommand("dual-head", "Dual-form LM head logits vs primal logits");
  v_head->add_option("--run", v_run, "Run directory")->required();
  v_head->add_option("--out", v_out, "Output directory");
  v_head->add_option("--epoch", v_epoch, "Checkpoint epoch (default: final)");
  v_head->add_option("--queries", v_queries, "Validation queries");
  v_head->add_option("--tolerance", v_tol, "Max abs diff (default 1e-8)");
  bool gc_dropout = false;
  auto* v_grad = verify->add_subcommand("gradcheck", "Finite-difference gradient check on a 2-layer f64 model");
  v_grad->add_flag("--dropout", gc_dropout, "Check in train mode with a pinned dropout mask");
  v_grad->add_option("--out", v_out, "Output directory");
  std::size_t p_draws = 10000;
  int p_dim = 64;
  std::uint64_t p_seed = 1;
  auto* v_prop = verify->add_subcommand("prop1", "Eigenvalue condition vs direct norm comparison");
  v_prop->add_option("--draws", p_draws, "Random (W, x) draws");
  v_prop->add_option("--dim", p_dim, "Dimension");
  v_prop->add_option("--seed", p_seed, "RNG seed");
  v_prop->add_option("--out", v_out, "Output directory");

  // import-trace
  std::string t_path, t_head, t_out;
  bool t_exclude_last = true;
  double t_filter = 10.0;
  auto* imp = app.add_subcommand("import-trace", "Norm statistics (and inner loss) of an XTRC dump");
  imp->add_option("trace", t_path, "XTRC file")->required()->check(CLI::ExistingFile);
  imp->add_option("--head", t_head, "MHEAD head matrix for inner losses")->check(CLI::ExistingFile);
  imp->add_option("--out", t_out, "Output directory")->required();
  imp->add_option("--exclude-last", t_exclude_last, "Drop the last point of each sample (true/false)");
  imp->add_option("--filter-loss", t_filter, "Drop samples whose last inner loss exceeds this");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (!gen_config.empty() && !gen_profile.empty()) throw ConfigError("give either --config or --profile");
      const auto c = !gen_config.empty() ? run::load_run_config(gen_config)
                                         : run::RunConfig::from_profile(gen_profile.empty() ? "sgd-small" : gen_profile);
      fs::create_directories(gen_out);
      const auto data = synthlang::build_dataset(c.data);
      synthlang::write_dataset(data, (fs::path(gen_out) / "dataset.jsonl").string());
      write_json(fs::path(gen_out) / "config.json", nlohmann::json(c));
      std::cout << "wrote " << data.train.size() << " training and " << data.validation.size()
                << " validation sequences from " << data.seeds.size() << " seeds to " << gen_out << "\n";
      return 0;
    }

    if (train->parsed()) {
      const auto c = resolve(tf);
      std::cout << "training profile " << c.profile << ": " << c.train.epochs << " epochs, "
                << nn::to_string(c.train.optimizer) << ", " << nn::to_string(c.model.precision) << "\n";
      const auto outcome = run::train_run(c, tf.out, [](const run::EpochRecord& r) {
        if (r.summary.epoch % 10 == 0)
          std::printf("epoch %4d  lr %.3g  train %.4f  val %.4f\n", r.summary.epoch, r.summary.lr,
                      r.summary.mean_loss, r.val_loss);
      });
      std::printf("done in %.1fs, %zu checkpoints, %llu history records\n", outcome.seconds,
                  outcome.checkpoints.size(), static_cast<unsigned long long>(outcome.history_records));
      return 0;
    }

    if (analyze->parsed()) {
      if (a_cluster->parsed()) {
        const auto r = run::open_run(cluster_f.run);
        run::ClusterOptions o;
        o.scope = scope_of(cluster_f);
        o.final_norm = cluster_final_norm;
        emit(run::cluster_report(r, o), cluster_f, r, {{"final_norm", cluster_final_norm}});
      } else if (a_loss->parsed()) {
        const auto r = run::open_run(loss_f.run);
        run::InnerLossReportOptions o;
        o.scope = scope_of(loss_f);
        o.probe.final_norm = !raw_head;
        o.probe.selection.policy = probes::position_policy_from_string(loss_policy);
        if (min_position > 0) {
          o.probe.selection.min_position = min_position;
          if (a_loss->count("--policy") == 0) o.probe.selection.policy = probes::PositionPolicy::kFromPosition;
        }
        if (a_loss->count("--filter-loss")) o.probe.filter_above = filter_loss;
        emit(run::inner_loss_report(r, o), loss_f, r,
             {{"final_norm", o.probe.final_norm},
              {"policy", probes::to_string(o.probe.selection.policy)},
              {"min_position", o.probe.selection.min_position},
              {"filter_loss", o.probe.filter_above ? nlohmann::json(*o.probe.filter_above) : nlohmann::json()}});
      } else if (a_attn->parsed()) {
        const auto r = run::open_run(attn_f.run);
        run::AttentionReportOptions o;
        o.scope = scope_of(attn_f);
        o.top_k = top_k;
        emit(run::attention_report(r, o), attn_f, r, {{"top_k", top_k}});
      } else if (a_norm->parsed()) {
        const auto r = run::open_run(norm_f.run);
        run::NormReportOptions o;
        o.scope = scope_of(norm_f);
        o.exclude_last = exclude_last;
        o.selection.policy = probes::position_policy_from_string(norm_policy);
        if (norm_min_position > 0) {
          o.selection.min_position = norm_min_position;
          if (a_norm->count("--policy") == 0) o.selection.policy = probes::PositionPolicy::kFromPosition;
        }
        emit(run::norm_report(r, o), norm_f, r,
             {{"exclude_last", exclude_last},
              {"policy", probes::to_string(o.selection.policy)},
              {"min_position", o.selection.min_position}});
      } else if (a_pca->parsed()) {
        const auto r = run::open_run(pca_f.run);
        run::PcaReportOptions o;
        o.scope = scope_of(pca_f);
        o.max_trajectories = pca_max;
        emit(run::pca_report(r, o), pca_f, r, {{"max_trajectories", pca_max}});
      } else if (a_eigen->parsed()) {
        const auto r = run::open_run(eigen_f.run);
        run::EigenReportOptions o;
        o.scope = scope_of(eigen_f);
        o.contexts = contexts;
        emit(run::eigen_report(r, o), eigen_f, r, {{"contexts", contexts}});
      }
      return 0;
    }

    if (verify->parsed()) {
      if (v_dual->parsed()) {
        const auto r = run::open_run(v_run);
        const bool f64 = r.config.model.precision == nn::Precision::kF64;
        const double tol = v_tol > 0 ? v_tol : (f64 ? 1e-8 : 1e-3);
        const auto results = run::verify_duality(r, v_epoch >= 0 ? std::optional<int>(v_epoch) : std::nullopt);
        double worst = 0;
        probes::Report rep;
        rep.name = "duality";
        rep.sources = {{"run", v_run}, {"config_hash", r.config.model.hash()}, {"tolerance", tol}};
        for (const auto& d : results) {
          worst = std::max(worst, d.max_abs_diff);
          rep.add(v_epoch >= 0 ? v_epoch : r.final_epoch(), -1, "train", d.weight, "max_abs_diff", d.max_abs_diff);
          std::printf("  %-20s max abs diff %.3e\n", d.weight.c_str(), d.max_abs_diff);
        }
        if (!v_out.empty()) rep.write(v_out);
        const bool pass = worst <= tol;
        std::printf("%s duality: max-abs-diff %.3e (tolerance %.1e)\n", pass ? "PASS" : "FAIL", worst, tol);
        return pass ? 0 : 1;
      }
      if (v_head->parsed()) {
        const auto r = run::open_run(v_run);
        const double tol = v_tol > 0 ? v_tol : 1e-8;
        const auto d = run::verify_dual_head(r, v_queries, v_epoch >= 0 ? std::optional<int>(v_epoch) : std::nullopt);
        if (!d.zero_init) std::cerr << "warning: run did not zero-initialize the LM head; the identity is not exact\n";
        if (!v_out.empty()) {
          probes::Report rep;
          rep.name = "dual_head";
          rep.sources = {{"run", v_run}, {"config_hash", r.config.model.hash()}};
          rep.add(v_epoch >= 0 ? v_epoch : r.final_epoch(), -1, "validation", "-", "max_abs_diff", d.max_abs_diff);
          rep.add(v_epoch >= 0 ? v_epoch : r.final_epoch(), -1, "validation", "-", "argmax_agreement",
                  d.argmax_agreement);
          rep.write(v_out);
        }
        const bool pass = d.max_abs_diff <= tol && d.argmax_agreement == 100.0;
        std::printf("%s dual-head: %zu queries, max-abs-diff %.3e, argmax agreement %.1f%%\n", pass ? "PASS" : "FAIL",
                    d.queries, d.max_abs_diff, d.argmax_agreement);
        return pass ? 0 : 1;
      }
      if (v_grad->parsed()) {
        auto cfg = nn::grad_check_config();
        nn::GradCheckOptions o;
        if (gc_dropout) {
          cfg.dropout = 0.2;
          o.with_dropout = true;
        }
        const auto rep = nn::grad_check(cfg, o);
        for (const auto& g : rep.groups)
          std::printf("  %-18s %6zu entries  max rel err %.3e\n", g.name.c_str(), g.checked, g.max_rel_error);
        const bool pass = rep.max_rel_error <= 1e-5;
        std::printf("%s gradcheck: max relative error %.3e (tolerance 1e-5)\n", pass ? "PASS" : "FAIL",
                    rep.max_rel_error);
        return pass ? 0 : 1;
      }
      if (v_prop->parsed()) {
        const auto s = probes::prop1_sweep(p_draws, p_dim, p_seed);
        const bool pass = s.disagreements == 0;
        std::printf("%s prop1: %zu draws at d=%d, %zu disagreements, condition held in %zu\n", pass ? "PASS" : "FAIL",
                    s.draws, p_dim, s.disagreements, s.condition_holds);
        return pass ? 0 : 1;
      }
    }

    if (imp->parsed()) {
      const auto trace = probes::read_xtrc(t_path);
      const auto labels = probes::read_labels(probes::labels_path(t_path), trace.n_samples);
      std::optional<nn::MatD> head;
      if (!t_head.empty()) head = probes::read_mhead(t_head);
      const auto rep = run::trace_report(trace, t_exclude_last, head, labels, t_filter);
      rep.write(t_out);
      write_json(fs::path(t_out) / "resolved_trace.json", {{"trace", t_path},
                                                           {"head", t_head},
                                                           {"labels", labels.has_value()},
                                                           {"exclude_last", t_exclude_last},
                                                           {"filter_loss", t_filter}});
      for (const auto& row : rep.rows)
        if (row.layer < 0) std::printf("  %-16s %s\n", row.metric.c_str(), probes::format_double(row.value).c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 5;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
