#include "innerloop/synthlang/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "innerloop/error.hpp"
#include "innerloop/util/binary_io.hpp"

namespace innerloop::synthlang {

namespace {
constexpr int kFormatVersion = 1;
constexpr int kMaxResample = 1000;
}  // namespace

GenerationConfig GenerationConfig::small() { return GenerationConfig{}; }

GenerationConfig GenerationConfig::large() {
  GenerationConfig c;
  c.n_seeds = 50;
  return c;
}

void GenerationConfig::validate() const {
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (min_per_seed < 0 || min_per_seed > max_per_seed)
    throw ConfigError("per-seed counts must satisfy 0 <= min_per_seed <= max_per_seed");
  if (val_seeds < 0 || val_seeds > n_seeds) throw ConfigError("val_seeds must lie in [0, n_seeds]");
  if (val_per_seed < 0) throw ConfigError("val_per_seed must be >= 0");
  if (max_seq_len < 3) throw ConfigError("max_seq_len must be >= 3");
  grammar.validate();
}

void to_json(nlohmann::json& j, const GenerationConfig& c) {
  j = nlohmann::json{{"n_seeds", c.n_seeds},         {"min_per_seed", c.min_per_seed},
                     {"max_per_seed", c.max_per_seed}, {"val_seeds", c.val_seeds},
                     {"val_per_seed", c.val_per_seed}, {"max_seq_len", c.max_seq_len},
                     {"rng_seed", c.rng_seed},         {"grammar", c.grammar}};
}

void from_json(const nlohmann::json& j, GenerationConfig& c) {
  GenerationConfig d;
  c.n_seeds = j.value("n_seeds", d.n_seeds);
  c.min_per_seed = j.value("min_per_seed", d.min_per_seed);
  c.max_per_seed = j.value("max_per_seed", d.max_per_seed);
  c.val_seeds = j.value("val_seeds", d.val_seeds);
  c.val_per_seed = j.value("val_per_seed", d.val_per_seed);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.rng_seed = j.value("rng_seed", d.rng_seed);
  c.grammar = j.contains("grammar") ? j.at("grammar").get<GrammarConfig>() : d.grammar;
}

bool DatasetSplit::operator==(const DatasetSplit& other) const {
  if (!(train == other.train && validation == other.validation && config == other.config)) return false;
  if (seeds.size() != other.seeds.size()) return false;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i].seed_id != other.seeds[i].seed_id || seeds[i].display != other.seeds[i].display) return false;
  }
  return true;
}

TokenSequence sample_sequence(const RegexSeed& seed, Rng& rng, int max_len) {
  if (max_len < 3) throw ConfigError("max_len must be >= 3");
  const auto budget = static_cast<std::size_t>(max_len - 2);
  if (min_length(*seed.ast) > budget)
    throw ConfigError("seed " + seed.display + " cannot produce a string of at most " + std::to_string(budget) +
                      " characters");
  for (int attempt = 0; attempt < kMaxResample; ++attempt) {
    auto text = sample_text(*seed.ast, rng);
    if (text.size() > budget) continue;
    TokenSequence seq;
    seq.seed_id = seed.seed_id;
    seq.tokens = encode(text);
    seq.text = std::move(text);
    return seq;
  }
  throw ConfigError("seed " + seed.display + " kept producing strings longer than " + std::to_string(budget) +
                    " characters");
}

DatasetSplit build_dataset(const GenerationConfig& config) {
  config.validate();
  DatasetSplit split;
  split.config = config;
  split.seeds = gen_seeds(config.n_seeds, derive_seed(config.rng_seed, 0), config.grammar);

  Rng rng(derive_seed(config.rng_seed, 1));
  for (const auto& seed : split.seeds) {
    const auto count = rng.range(config.min_per_seed, config.max_per_seed);
    for (std::int64_t i = 0; i < count; ++i) split.train.push_back(sample_sequence(seed, rng, config.max_seq_len));
  }

  // Validation seeds: a deterministic subset of size val_seeds, in id order.
  std::vector<int> ids(static_cast<std::size_t>(config.n_seeds));
  for (int i = 0; i < config.n_seeds; ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng vrng(derive_seed(config.rng_seed, 2));
  vrng.shuffle(ids.begin(), ids.end());
  ids.resize(static_cast<std::size_t>(config.val_seeds));
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    for (int i = 0; i < config.val_per_seed; ++i)
      split.validation.push_back(sample_sequence(split.seeds[static_cast<std::size_t>(id)], vrng, config.max_seq_len));
  }
  return split;
}

std::string serialize_dataset(const DatasetSplit& split) {
  nlohmann::json header;
  header["version"] = kFormatVersion;
  header["rng_seed"] = split.config.rng_seed;
  header["grammar"] = split.config.grammar;
  header["generation"] = split.config;
  auto& seeds = header["seeds"] = nlohmann::json::array();
  for (const auto& s : split.seeds) seeds.push_back(s.display);

  std::ostringstream out;
  out << header.dump() << '\n';
  auto emit = [&](const char* name, const std::vector<TokenSequence>& seqs) {
    for (const auto& s : seqs) {
      out << nlohmann::json{{"split", name}, {"seed_id", s.seed_id}, {"text", s.text}}.dump() << '\n';
    }
  };
  emit("train", split.train);
  emit("validation", split.validation);
  return out.str();
}

void write_dataset(const DatasetSplit& split, const std::string& path) {
  const auto text = serialize_dataset(split);
  bin::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetSplit parse_dataset(const std::string& contents, ReadOptions options) {
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  DatasetSplit split;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("dataset line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    const std::string where = "dataset line " + std::to_string(line_no) + ": ";
    if (!have_header) {
      if (!j.is_object() || !j.contains("version") || !j.contains("seeds"))
        throw FormatError(where + "missing header record");
      if (j.at("version").get<int>() != kFormatVersion)
        throw FormatError(where + "unsupported dataset version " + j.at("version").dump());
      try {
        split.config = j.contains("generation") ? j.at("generation").get<GenerationConfig>() : GenerationConfig{};
        if (j.at("rng_seed").get<std::uint64_t>() != split.config.rng_seed)
          throw FormatError(where + "header rng_seed disagrees with generation config");
        if (j.at("grammar").get<GrammarConfig>() != split.config.grammar)
          throw FormatError(where + "header grammar disagrees with generation config");
        const auto& seeds = j.at("seeds");
        if (static_cast<int>(seeds.size()) != split.config.n_seeds)
          throw FormatError(where + "header lists " + std::to_string(seeds.size()) + " seeds but config has n_seeds=" +
                            std::to_string(split.config.n_seeds));
        int id = 0;
        for (const auto& s : seeds) split.seeds.push_back(seed_from_string(id++, s.get<std::string>()));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + "bad header field (" + e.what() + ")");
      } catch (const ConfigError& e) {
        throw FormatError(where + e.what());
      }
      have_header = true;
      continue;
    }
    TokenSequence seq;
    std::string name;
    try {
      name = j.at("split").get<std::string>();
      seq.seed_id = j.at("seed_id").get<int>();
      seq.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + "bad record (" + e.what() + ")");
    }
    if (seq.seed_id < 0 || seq.seed_id >= static_cast<int>(split.seeds.size()))
      throw FormatError(where + "seed_id " + std::to_string(seq.seed_id) + " out of range");
    if (static_cast<int>(seq.text.size()) + 2 > split.config.max_seq_len)
      throw FormatError(where + "text longer than max_seq_len");
    try {
      seq.tokens = encode(seq.text);
    } catch (const ConfigError& e) {
      throw FormatError(where + e.what());
    }
    if (options.strict && !matches(*split.seeds[static_cast<std::size_t>(seq.seed_id)].ast, seq.text))
      throw FormatError(where + "text \"" + seq.text + "\" does not match seed " +
                        split.seeds[static_cast<std::size_t>(seq.seed_id)].display);
    if (name == "train") {
      split.train.push_back(std::move(seq));
    } else if (name == "validation") {
      split.validation.push_back(std::move(seq));
    } else {
      throw FormatError(where + "unknown split \"" + name + "\"");
    }
  }
  if (!have_header) throw FormatError("dataset has no header record");
  return split;
}

DatasetSplit read_dataset(const std::string& path, ReadOptions options) {
  const auto bytes = bin::read_file(path);
  return parse_dataset(std::string(bytes.begin(), bytes.end()), options);
}

std::uint64_t dataset_hash(const DatasetSplit& split) { return bin::fnv1a64(serialize_dataset(split)); }

}  // namespace innerloop::synthlang
