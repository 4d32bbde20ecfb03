#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cfx/vocab.hpp"

namespace cfx {

// One sub-token with its [start, end) character offsets into the source text.
// Continuation pieces carry the "##" prefix in `piece` but their offsets
// address the raw characters.
struct SubToken {
  std::string piece;
  int id = -1;
  int start = 0;
  int end = 0;
};

// Whitespace/punctuation pre-split followed by greedy longest-match-first
// WordPiece. A word whose head matches nothing becomes a single [UNK]
// covering the whole word. Matching is done on the lowercased text when
// `lowercase` is set; offsets always address the original string.
std::vector<SubToken> wordpiece_tokenize(const std::string& text, const Vocab& vocab,
                                         bool lowercase = true);

// One encoder input: ids with specials, segment ids, statement mask,
// per-position char spans and word-start positions.
struct PackedSeq {
  std::vector<int> ids;
  std::vector<int> segments;                       // 0/1 per position
  std::vector<bool> statement_mask;                // true exactly on statement sub-tokens
  std::vector<std::pair<int, int>> char_spans;     // empty span (0,0) for specials/query
  std::vector<int> token_firsts;                   // first sub-token index of each whole word
  int len() const { return static_cast<int>(ids.size()); }
  // Positions (into ids) of statement sub-tokens, in order.
  std::vector<int> statement_positions() const;
};

// {[CLS], text, [SEP]}; sub-tokens truncated from the right to fit max_len.
PackedSeq pack_classification(const std::string& text, const Vocab& vocab, int max_len = 128,
                              bool lowercase = true);

// {[CLS], query, [SEP], statement, [SEP]} with segments 0/0/0/1/1. Only the
// statement is truncated; a query that alone exceeds the budget is an error.
PackedSeq pack_qa(const std::string& query, const std::string& statement, const Vocab& vocab,
                  int max_len = 128, bool lowercase = true);

}  // namespace cfx
