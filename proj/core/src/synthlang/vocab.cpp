#include "innerloop/synthlang/vocab.hpp"

#include "innerloop/error.hpp"

namespace innerloop::synthlang {

std::vector<TokenId> encode(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size() + 2);
  out.push_back(kBos);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c < 'a' || c > 'z')
      throw ConfigError("cannot encode character at offset " + std::to_string(i) + " (only a-z allowed)");
    out.push_back(letter_id(c));
  }
  out.push_back(kEos);
  return out;
}

std::string decode(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (auto id : tokens) {
    if (id == kBos || id == kEos) continue;
    if (id >= kVocabSize) throw ConfigError("token id out of vocabulary: " + std::to_string(id));
    out.push_back(id_letter(id));
  }
  return out;
}

std::string token_name(TokenId id) {
  if (id == kBos) return "<bos>";
  if (id == kEos) return "<eos>";
  if (id < kVocabSize) return std::string(1, id_letter(id));
  return "<" + std::to_string(id) + ">";
}

}  // namespace innerloop::synthlang
