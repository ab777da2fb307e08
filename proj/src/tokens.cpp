// SPDX-License-Identifier: Apache-2.0

#include "mrsa/tokens.hpp"

#include <cctype>

#include "mrsa/error.hpp"
#include "mrsa/rng.hpp"

namespace mrsa {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

void split_words(std::string_view text, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) {
      // trailing whitespace only
      if (out.empty()) {
        out.emplace_back(text.substr(start));
      } else {
        out.back().append(text.substr(start));
      }
      return;
    }
    while (i < text.size() && !is_space(text[i])) ++i;
    out.emplace_back(text.substr(start, i - start));
  }
}

}  // namespace

const char* to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::Transport: return "transport";
    case BackendErrorKind::Timeout: return "timeout";
    case BackendErrorKind::Malformed: return "malformed";
    case BackendErrorKind::HttpStatus: return "http-status";
    case BackendErrorKind::ReplayMiss: return "replay-miss";
    case BackendErrorKind::Scripted: return "scripted";
  }
  return "unknown";
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::vector<std::string> split_pieces(std::string_view text,
                                      std::span<const std::string> delimiters) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t best = std::string_view::npos;
    std::size_t best_len = 0;
    for (const auto& d : delimiters) {
      if (d.empty()) continue;
      auto at = text.find(d, pos);
      if (at < best || (at == best && d.size() > best_len)) {
        best = at;
        best_len = d.size();
      }
    }
    if (best == std::string_view::npos) {
      split_words(text.substr(pos), out);
      break;
    }
    split_words(text.substr(pos, best - pos), out);
    out.emplace_back(text.substr(best, best_len));
    pos = best + best_len;
  }
  return out;
}

TokenId synthetic_token_id(std::string_view piece) {
  return static_cast<TokenId>(fnv1a64(piece) & 0x7fffffffULL);
}

std::string join_pieces(std::span<const std::string> pieces) {
  std::string s;
  for (const auto& p : pieces) s += p;
  return s;
}

}  // namespace mrsa
