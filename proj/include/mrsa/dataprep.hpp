// SPDX-License-Identifier: Apache-2.0
//
// Answer-preserving trimming of long reasoning conversations, and
// best-fit-decreasing packing of examples into fixed windows.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrsa/error.hpp"
#include "mrsa/tokens.hpp"

namespace mrsa {

struct Turn {
  std::string role;
  std::string content;
  bool operator==(const Turn&) const = default;
};

struct Conversation {
  std::string id;
  std::vector<Turn> turns;
  bool operator==(const Conversation&) const = default;
};

// An assistant turn split around its think block:
// prefix <open> think <close> answer.
struct ParsedTurn {
  bool has_think = false;
  std::string prefix;
  std::string think;
  std::string answer;  // whole content when there is no think block
};

// Throws ParseError on unbalanced or repeated delimiters.
ParsedTurn parse_turn(std::string_view content, const ThinkDelimiters& delims = {});

struct TrimOptions {
  ThinkDelimiters delimiters;
  TokenCounter counter = default_token_counter();
  std::size_t delimiter_tokens = 0;  // cost charged per delimiter string
};

// Tokens of the conversation under the options' counter. Assistant turns are
// counted per segment so delimiters cost `delimiter_tokens` each.
std::size_t conversation_tokens(const Conversation& c, const TrimOptions& options = {});

enum class TrimVariant { Unchanged, TailTrimmed, PriorThinkDropped, Dropped };
const char* to_string(TrimVariant v);

struct TrimOutcome {
  TrimVariant variant = TrimVariant::Unchanged;
  std::optional<Conversation> conversation;  // absent when Dropped
  std::size_t tokens = 0;                    // of the output, or the answers-only floor
  std::size_t retained_think_tokens = 0;     // of the last think block
  std::size_t original_think_tokens = 0;
  std::size_t dropped_blocks = 0;            // earlier think blocks removed
};

// 1) fits: Unchanged. 2) cut the last think block from the tail, keeping the
// longest prefix that fits. 3) otherwise drop earlier think blocks oldest
// first, retrying 2 after each. 4) if even the answers do not fit: Dropped.
TrimOutcome ap_trim(const Conversation& conversation, std::size_t budget,
                    const TrimOptions& options = {});

struct RetrimItem {
  std::optional<TrimOutcome> outcome;
  std::string error;
};

struct RetrimSet {
  std::size_t budget = 0;
  std::vector<RetrimItem> items;  // parallel to the dataset
};

// Trims every sample independently at every budget; errors are per item.
std::vector<RetrimSet> retrim_stage(const std::vector<Conversation>& dataset,
                                    std::span<const std::size_t> budgets,
                                    const TrimOptions& options = {});

struct Bin {
  std::vector<std::size_t> items;  // indices into the input
  std::size_t tokens = 0;
};

// Sort descending; each example goes to the fullest bin that still fits,
// else a new bin. Throws OversizedExample.
std::vector<Bin> bfd_pack(std::span<const std::size_t> lengths, std::size_t window);

}  // namespace mrsa
