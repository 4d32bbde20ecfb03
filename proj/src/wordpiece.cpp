#include "cfx/wordpiece.hpp"

#include <cctype>

#include "cfx/errors.hpp"

namespace cfx {

namespace {

constexpr int kMaxWordChars = 100;

struct RawWord {
  std::string text;  // lowercased when requested
  int start = 0;
  int end = 0;
};

std::vector<RawWord> presplit(const std::string& text, bool lowercase) {
  std::vector<RawWord> words;
  RawWord cur;
  bool open = false;
  auto flush = [&](int end) {
    if (open) {
      cur.end = end;
      words.push_back(cur);
      cur = RawWord{};
      open = false;
    }
  };
  for (int i = 0; i < static_cast<int>(text.size()); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
    if (std::isspace(c)) {
      flush(i);
    } else if (std::ispunct(c)) {
      flush(i);
      words.push_back(RawWord{std::string(1, static_cast<char>(c)), i, i + 1});
    } else {
      if (!open) {
        cur.start = i;
        open = true;
      }
      cur.text += static_cast<char>(lowercase ? std::tolower(c) : c);
    }
  }
  flush(static_cast<int>(text.size()));
  return words;
}

}  // namespace

std::vector<SubToken> wordpiece_tokenize(const std::string& text, const Vocab& vocab,
                                         bool lowercase) {
  std::vector<SubToken> out;
  for (const RawWord& word : presplit(text, lowercase)) {
    const int n = static_cast<int>(word.text.size());
    if (n > kMaxWordChars) {
      out.push_back(SubToken{Vocab::kUnkToken, Vocab::kUnk, word.start, word.end});
      continue;
    }
    std::vector<SubToken> pieces;
    bool bad = false;
    int start = 0;
    while (start < n) {
      int end = n;
      std::string match;
      while (start < end) {
        std::string candidate =
            word.text.substr(static_cast<size_t>(start), static_cast<size_t>(end - start));
        if (start > 0) candidate = Vocab::kContinuation + candidate;
        if (vocab.find(candidate) >= 0) {
          match = std::move(candidate);
          break;
        }
        --end;
      }
      if (match.empty()) {
        bad = true;
        break;
      }
      pieces.push_back(SubToken{match, vocab.find(match), word.start + start, word.start + end});
      start = end;
    }
    if (bad) {
      out.push_back(SubToken{Vocab::kUnkToken, Vocab::kUnk, word.start, word.end});
    } else {
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
  }
  return out;
}

std::vector<int> PackedSeq::statement_positions() const {
  std::vector<int> pos;
  for (int i = 0; i < len(); ++i) {
    if (statement_mask[static_cast<size_t>(i)]) pos.push_back(i);
  }
  return pos;
}

PackedSeq pack_classification(const std::string& text, const Vocab& vocab, int max_len,
                              bool lowercase) {
  if (max_len < 3) throw ConfigError("pack_classification: max_len must be at least 3");
  std::vector<SubToken> subs = wordpiece_tokenize(text, vocab, lowercase);
  const int budget = max_len - 2;
  if (static_cast<int>(subs.size()) > budget) subs.resize(static_cast<size_t>(budget));

  PackedSeq p;
  auto push = [&p](int id, int seg, bool stmt, int cs, int ce) {
    p.ids.push_back(id);
    p.segments.push_back(seg);
    p.statement_mask.push_back(stmt);
    p.char_spans.emplace_back(cs, ce);
  };
  push(Vocab::kCls, 0, false, 0, 0);
  int prev_end = -1;
  for (const SubToken& s : subs) {
    const bool continuation = s.piece.rfind(Vocab::kContinuation, 0) == 0 && s.start == prev_end;
    if (!continuation) p.token_firsts.push_back(p.len());
    push(s.id, 0, true, s.start, s.end);
    prev_end = s.end;
  }
  push(Vocab::kSep, 0, false, 0, 0);
  return p;
}

PackedSeq pack_qa(const std::string& query, const std::string& statement, const Vocab& vocab,
                  int max_len, bool lowercase) {
  std::vector<SubToken> q = wordpiece_tokenize(query, vocab, lowercase);
  const int overhead = static_cast<int>(q.size()) + 3;  // [CLS] q [SEP] ... [SEP]
  if (overhead >= max_len) {
    throw InputError("pack_qa: query needs " + std::to_string(overhead) +
                     " positions, over the " + std::to_string(max_len) + " budget");
  }
  std::vector<SubToken> s = wordpiece_tokenize(statement, vocab, lowercase);
  const int budget = max_len - overhead;
  if (static_cast<int>(s.size()) > budget) s.resize(static_cast<size_t>(budget));

  PackedSeq p;
  auto push = [&p](int id, int seg, bool stmt, int cs, int ce) {
    p.ids.push_back(id);
    p.segments.push_back(seg);
    p.statement_mask.push_back(stmt);
    p.char_spans.emplace_back(cs, ce);
  };
  push(Vocab::kCls, 0, false, 0, 0);
  for (const SubToken& t : q) push(t.id, 0, false, 0, 0);
  push(Vocab::kSep, 0, false, 0, 0);
  int prev_end = -1;
  for (const SubToken& t : s) {
    const bool continuation = t.piece.rfind(Vocab::kContinuation, 0) == 0 && t.start == prev_end;
    if (!continuation) p.token_firsts.push_back(p.len());
    push(t.id, 1, true, t.start, t.end);
    prev_end = t.end;
  }
  push(Vocab::kSep, 1, false, 0, 0);
  return p;
}

}  // namespace cfx
