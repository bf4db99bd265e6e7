#include "innerloop/probes/attention_history.hpp"

#include <algorithm>

#include "innerloop/error.hpp"

namespace innerloop::probes {

std::string to_string(ModuleKind k) { return k == ModuleKind::kMhsa ? "mhsa" : "ffn"; }

namespace {

struct Entry {
  double w;
  std::uint64_t step;
  int seed;
  int combination;
};

// Ordering for the top list: larger weight first, earlier step on ties.
bool higher(const Entry& a, const Entry& b) { return a.w > b.w || (a.w == b.w && a.step < b.step); }
bool lower(const Entry& a, const Entry& b) { return a.w < b.w || (a.w == b.w && a.step < b.step); }

// Keeps the k best entries under `better`; front() is the worst kept.
template <bool (*Better)(const Entry&, const Entry&)>
class BoundedList {
 public:
  void offer(const Entry& e, std::size_t k) {
    if (items_.size() < k) {
      items_.push_back(e);
      std::push_heap(items_.begin(), items_.end(), Better);
    } else if (Better(e, items_.front())) {
      std::pop_heap(items_.begin(), items_.end(), Better);
      items_.back() = e;
      std::push_heap(items_.begin(), items_.end(), Better);
    }
  }
  const std::vector<Entry>& items() const { return items_; }

 private:
  std::vector<Entry> items_;
};

struct Slot {
  BoundedList<higher> top;
  BoundedList<lower> bottom;

  void offer(const Entry& e, std::size_t k) {
    top.offer(e, k);
    bottom.offer(e, k);
  }
};

double share(const std::vector<Entry>& items, int seed, int combination, bool by_combination) {
  if (items.empty()) return 0.0;
  std::size_t same = 0;
  for (const auto& e : items) same += by_combination ? e.combination == combination : e.seed == seed;
  return 100.0 * static_cast<double>(same) / static_cast<double>(items.size());
}

}  // namespace

AttentionHistoryResult attention_history(const nn::Model& model, hist::HistoryReader& log,
                                         const std::vector<synthlang::TokenSequence>& sequences,
                                         const std::vector<ProbeInstance>& instances,
                                         const AttentionHistoryOptions& options) {
  const auto& cfg = model.config();
  const auto& layout = log.layout();
  if (log.header().config_hash != cfg.hash())
    throw ConfigError("history log was written for a different model configuration: " + cfg.diff(log.header().model));
  if (instances.empty()) throw ConfigError("no probe instances selected");
  if (options.top_k < 1) throw ConfigError("top_k must be >= 1");
  for (int l = 1; l <= cfg.n_layers; ++l)
    if (layout.attn_value_offset(l) < 0)
      throw ContractError("history log lacks value blocks for layer " + std::to_string(l));

  const auto L = static_cast<std::size_t>(cfg.n_layers);
  const int H = cfg.n_heads;
  const int dh = cfg.d_head();
  const auto P = static_cast<Eigen::Index>(instances.size());
  const auto k = static_cast<std::size_t>(options.top_k);

  // Queries: attention-aggregated values and FFN activations of each instance.
  std::vector<nn::MatD> uq(L, nn::MatD(P, cfg.d_model)), aq(L, nn::MatD(P, cfg.d_ff));
  for (Eigen::Index i = 0; i < P;) {
    const auto seq = instances[static_cast<std::size_t>(i)].sequence;
    if (seq >= sequences.size()) throw ConfigError("probe instance refers to a missing sequence");
    const auto trace = model.probe(sequences[seq].tokens);
    for (; i < P && instances[static_cast<std::size_t>(i)].sequence == seq; ++i) {
      const int pos = instances[static_cast<std::size_t>(i)].position;
      for (std::size_t l = 0; l < L; ++l) {
        uq[l].row(i) = trace.attn_value[l].row(pos);
        aq[l].row(i) = trace.ffn_act[l].row(pos);
      }
    }
  }

  // slots[(i * L + l) * (H + 1) + h]; h == H is the FFN.
  std::vector<Slot> slots(static_cast<std::size_t>(P) * L * static_cast<std::size_t>(H + 1));
  auto slot = [&](Eigen::Index i, std::size_t l, int h) -> Slot& {
    return slots[(static_cast<std::size_t>(i) * L + l) * static_cast<std::size_t>(H + 1) + static_cast<std::size_t>(h)];
  };

  hist::RecordFilter filter;
  if (options.before_epoch == 0) throw ContractError("no history precedes epoch 0");
  filter.epoch_max = options.before_epoch - 1;
  nn::MatD prod(P, cfg.d_model);
  Eigen::VectorXd wf(P);
  const std::uint64_t n = log.for_each(filter, [&](const hist::HistoryRecord& r) {
    const int combo = combination_key(r.seed_label, r.next_token, cfg.vocab);
    for (std::size_t l = 0; l < L; ++l) {
      const int layer = static_cast<int>(l) + 1;
      const auto u = r.attn_value(layout, layer);
      prod.noalias() = uq[l] * u.asDiagonal();
      wf.noalias() = aq[l] * r.ffn_act(layout, layer);
      for (Eigen::Index i = 0; i < P; ++i) {
        for (int h = 0; h < H; ++h)
          slot(i, l, h).offer({prod.row(i).segment(h * dh, dh).sum(), r.step, r.seed_label, combo}, k);
        slot(i, l, H).offer({wf(i), r.step, r.seed_label, combo}, k);
      }
    }
  });
  if (log.truncated()) throw FormatError(log.path() + ": history log is truncated or corrupt");
  if (n < k)
    throw ContractError("history before epoch " + std::to_string(options.before_epoch) + " holds " +
                        std::to_string(n) + " records, fewer than " + std::to_string(k));

  AttentionHistoryResult out;
  out.history_records = n;
  out.instances = instances.size();
  for (std::size_t l = 0; l < L; ++l) {
    for (auto module : {ModuleKind::kMhsa, ModuleKind::kFfn}) {
      AttentionHistoryCell cell;
      cell.layer = static_cast<int>(l) + 1;
      cell.module = module;
      const int h0 = module == ModuleKind::kMhsa ? 0 : H;
      const int h1 = module == ModuleKind::kMhsa ? H : H + 1;
      for (Eigen::Index i = 0; i < P; ++i) {
        const auto& in = instances[static_cast<std::size_t>(i)];
        const int combo = combination_key(in.seed, in.next_token, cfg.vocab);
        double ts = 0, bs = 0, tc = 0, bc = 0;
        for (int h = h0; h < h1; ++h) {
          const auto& s = slot(i, l, h);
          ts += share(s.top.items(), in.seed, combo, false);
          bs += share(s.bottom.items(), in.seed, combo, false);
          tc += share(s.top.items(), in.seed, combo, true);
          bc += share(s.bottom.items(), in.seed, combo, true);
        }
        const double heads = h1 - h0;
        cell.top_same_seed += ts / heads;
        cell.bottom_same_seed += bs / heads;
        cell.top_same_combination += tc / heads;
        cell.bottom_same_combination += bc / heads;
      }
      cell.top_same_seed /= static_cast<double>(P);
      cell.bottom_same_seed /= static_cast<double>(P);
      cell.top_same_combination /= static_cast<double>(P);
      cell.bottom_same_combination /= static_cast<double>(P);
      out.cells.push_back(cell);
    }
  }
  return out;
}

}  // namespace innerloop::probes
