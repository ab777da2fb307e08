// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mrsa {

using TokenId = std::int32_t;

// Injected token-counting function. Tokenizers are out of scope; every
// component that needs a count for plain text takes one of these.
using TokenCounter = std::function<std::size_t(std::string_view)>;

// Default counter: one token per whitespace-separated word.
std::size_t whitespace_token_count(std::string_view text);

inline TokenCounter default_token_counter() { return &whitespace_token_count; }

struct ThinkDelimiters {
  std::string open = "<think>";
  std::string close = "</think>";
  bool operator==(const ThinkDelimiters&) const = default;
};

// Splits text into token pieces whose concatenation is exactly `text`.
// Each delimiter occurrence becomes its own piece; everything else is cut
// into words carrying their leading whitespace (" foo"). Trailing whitespace
// is appended to the last piece.
std::vector<std::string> split_pieces(std::string_view text,
                                      std::span<const std::string> delimiters);

// Stable 31-bit id for a text piece, used when a backend returns text only.
TokenId synthetic_token_id(std::string_view piece);

std::string join_pieces(std::span<const std::string> pieces);

}  // namespace mrsa
