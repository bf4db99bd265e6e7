#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace innerloop::synthlang {

using TokenId = std::uint16_t;

// Fixed vocabulary: BOS, EOS, then 'a'..'z'.
inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr int kVocabSize = 28;

inline constexpr TokenId letter_id(char c) { return static_cast<TokenId>(2 + (c - 'a')); }
inline constexpr char id_letter(TokenId id) { return static_cast<char>('a' + (id - 2)); }

// Wraps the text with BOS/EOS. Throws ConfigError on characters outside a-z.
std::vector<TokenId> encode(std::string_view text);
// Inverse of encode; BOS/EOS are stripped, any other non-letter id throws.
std::string decode(std::span<const TokenId> tokens);

std::string token_name(TokenId id);

}  // namespace innerloop::synthlang
