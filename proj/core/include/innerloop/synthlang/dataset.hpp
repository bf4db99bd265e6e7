#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "innerloop/synthlang/regex.hpp"
#include "innerloop/synthlang/vocab.hpp"

namespace innerloop::synthlang {

struct TokenSequence {
  int seed_id = 0;
  std::vector<TokenId> tokens;  // BOS, letters..., EOS
  std::string text;

  bool operator==(const TokenSequence&) const = default;
};

// Defaults correspond to the small synthetic setting (10 seeds, 10-60
// training sequences per seed, 10 x 20 validation sequences).
struct GenerationConfig {
  int n_seeds = 10;
  int min_per_seed = 10;
  int max_per_seed = 60;
  int val_seeds = 10;
  int val_per_seed = 20;
  int max_seq_len = 64;
  std::uint64_t rng_seed = 1;
  GrammarConfig grammar;

  static GenerationConfig small();
  static GenerationConfig large();

  void validate() const;
  friend void to_json(nlohmann::json& j, const GenerationConfig& c);
  friend void from_json(const nlohmann::json& j, GenerationConfig& c);
  bool operator==(const GenerationConfig&) const = default;
};

struct DatasetSplit {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> validation;
  std::vector<RegexSeed> seeds;
  GenerationConfig config;

  // Structural equality (seeds compared by canonical form).
  bool operator==(const DatasetSplit& other) const;
};

// Samples a sentence for the seed; resamples strings longer than
// max_len - 2 characters. Throws ConfigError if the seed cannot fit.
TokenSequence sample_sequence(const RegexSeed& seed, Rng& rng, int max_len);

DatasetSplit build_dataset(const GenerationConfig& config);

// Line-delimited JSON: a header object then one {split, seed_id, text}
// object per sequence.
void write_dataset(const DatasetSplit& split, const std::string& path);
std::string serialize_dataset(const DatasetSplit& split);

struct ReadOptions {
  // Verify every text against its seed regex.
  bool strict = false;
};
DatasetSplit read_dataset(const std::string& path, ReadOptions options = {});
DatasetSplit parse_dataset(const std::string& contents, ReadOptions options = {});

// Fingerprint of the dataset contents, for cross-checking runs.
std::uint64_t dataset_hash(const DatasetSplit& split);

}  // namespace innerloop::synthlang
