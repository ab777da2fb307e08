// SPDX-License-Identifier: Apache-2.0

#include "mrsa/dataprep.hpp"

#include <algorithm>
#include <numeric>

namespace mrsa {

ParsedTurn parse_turn(std::string_view content, const ThinkDelimiters& delims) {
  ParsedTurn t;
  const auto open = content.find(delims.open);
  const auto close = content.find(delims.close);
  if (open == std::string_view::npos && close == std::string_view::npos) {
    t.answer = std::string(content);
    return t;
  }
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw ParseError("unbalanced think delimiters");
  const auto think_begin = open + delims.open.size();
  if (content.find(delims.open, think_begin) != std::string_view::npos ||
      content.find(delims.close, close + delims.close.size()) != std::string_view::npos)
    throw ParseError("more than one think block in a turn");
  t.has_think = true;
  t.prefix = std::string(content.substr(0, open));
  t.think = std::string(content.substr(think_begin, close - think_begin));
  t.answer = std::string(content.substr(close + delims.close.size()));
  return t;
}

const char* to_string(TrimVariant v) {
  switch (v) {
    case TrimVariant::Unchanged: return "unchanged";
    case TrimVariant::TailTrimmed: return "tail-trimmed";
    case TrimVariant::PriorThinkDropped: return "prior-think-dropped";
    case TrimVariant::Dropped: return "dropped";
  }
  return "dropped";
}

namespace {

struct Segmented {
  std::vector<ParsedTurn> parsed;
  std::vector<std::size_t> fixed;  // tokens outside the think content
  std::vector<std::size_t> think;  // think content tokens
};

Segmented segment(const Conversation& c, const TrimOptions& o) {
  Segmented s;
  for (const auto& turn : c.turns) {
    ParsedTurn p;
    if (turn.role == "assistant") {
      p = parse_turn(turn.content, o.delimiters);
    } else {
      p.answer = turn.content;
    }
    s.fixed.push_back(o.counter(p.prefix) + o.counter(p.answer));
    s.think.push_back(p.has_think ? o.counter(p.think) : 0);
    s.parsed.push_back(std::move(p));
  }
  return s;
}

std::string render(const ParsedTurn& p, const ThinkDelimiters& d, bool keep_think,
                   std::string_view think) {
  if (!p.has_think) return p.answer;
  if (!keep_think) return p.prefix + p.answer;
  return p.prefix + d.open + std::string(think) + d.close + p.answer;
}

}  // namespace

std::size_t conversation_tokens(const Conversation& c, const TrimOptions& options) {
  auto s = segment(c, options);
  std::size_t total = 0;
  for (std::size_t i = 0; i < s.parsed.size(); ++i) {
    total += s.fixed[i] + s.think[i];
    if (s.parsed[i].has_think) total += 2 * options.delimiter_tokens;
  }
  return total;
}

TrimOutcome ap_trim(const Conversation& conversation, std::size_t budget,
                    const TrimOptions& options) {
  if (budget < 1) throw ConfigError("trim budget must be >= 1");
  const auto s = segment(conversation, options);
  const std::size_t n = s.parsed.size();
  const std::size_t delim = 2 * options.delimiter_tokens;

  std::vector<std::size_t> blocks;
  for (std::size_t i = 0; i < n; ++i)
    if (s.parsed[i].has_think) blocks.push_back(i);

  TrimOutcome out;
  std::size_t fixed_total = 0, think_total = 0;
  for (std::size_t i = 0; i < n; ++i) fixed_total += s.fixed[i];
  for (auto b : blocks) think_total += s.think[b] + delim;
  if (!blocks.empty()) out.original_think_tokens = s.think[blocks.back()];

  if (fixed_total + think_total <= budget) {
    out.variant = TrimVariant::Unchanged;
    out.conversation = conversation;
    out.tokens = fixed_total + think_total;
    out.retained_think_tokens = out.original_think_tokens;
    return out;
  }
  if (blocks.empty()) {
    out.variant = TrimVariant::Dropped;
    out.tokens = fixed_total;
    return out;
  }

  const std::size_t last = blocks.back();
  const auto pieces = split_pieces(s.parsed[last].think, std::span<const std::string>{});

  // Everything except the last block's content, with the first `k` earlier
  // blocks dropped.
  std::size_t others = fixed_total + delim;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) others += s.think[blocks[b]] + delim;

  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (k > 0) others -= s.think[blocks[k - 1]] + delim;
    if (others > budget) continue;
    // largest prefix of the last think block that fits
    auto cost = [&](std::size_t i) {
      return options.counter(join_pieces(std::span(pieces.data(), i)));
    };
    std::size_t lo = 0, hi = pieces.size();
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo + 1) / 2;
      if (others + cost(mid) <= budget) lo = mid;
      else hi = mid - 1;
    }
    const std::string kept = join_pieces(std::span(pieces.data(), lo));
    Conversation c = conversation;
    for (std::size_t b = 0; b < k; ++b) {
      const auto t = blocks[b];
      c.turns[t].content = render(s.parsed[t], options.delimiters, false, {});
    }
    c.turns[last].content = render(s.parsed[last], options.delimiters, true, kept);
    out.variant = k == 0 ? TrimVariant::TailTrimmed : TrimVariant::PriorThinkDropped;
    out.retained_think_tokens = options.counter(kept);
    out.tokens = others + out.retained_think_tokens;
    out.dropped_blocks = k;
    out.conversation = std::move(c);
    return out;
  }

  out.variant = TrimVariant::Dropped;
  out.tokens = fixed_total + delim;
  return out;
}

std::vector<RetrimSet> retrim_stage(const std::vector<Conversation>& dataset,
                                    std::span<const std::size_t> budgets,
                                    const TrimOptions& options) {
  if (budgets.empty()) throw ConfigError("retrim needs at least one budget");
  if (!std::is_sorted(budgets.begin(), budgets.end()))
    throw ConfigError("retrim budgets must be ascending");
  std::vector<RetrimSet> out;
  for (auto b : budgets) {
    RetrimSet set;
    set.budget = b;
    for (const auto& conv : dataset) {
      RetrimItem item;
      try {
        item.outcome = ap_trim(conv, b, options);
      } catch (const Error& e) {
        item.error = e.what();
      }
      set.items.push_back(std::move(item));
    }
    out.push_back(std::move(set));
  }
  return out;
}

std::vector<Bin> bfd_pack(std::span<const std::size_t> lengths, std::size_t window) {
  if (window < 1) throw ConfigError("pack window must be >= 1");
  for (std::size_t i = 0; i < lengths.size(); ++i)
    if (lengths[i] > window)
      throw OversizedExample("example " + std::to_string(i) + " has " +
                             std::to_string(lengths[i]) + " tokens, window is " +
                             std::to_string(window));
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  std::vector<Bin> bins;
  for (auto i : order) {
    Bin* best = nullptr;
    for (auto& b : bins)
      if (b.tokens + lengths[i] <= window && (!best || b.tokens > best->tokens)) best = &b;
    if (!best) best = &bins.emplace_back();
    best->items.push_back(i);
    best->tokens += lengths[i];
  }
  return bins;
}

}  // namespace mrsa
