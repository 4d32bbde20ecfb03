#include <random>

#include "cfx/errors.hpp"
#include "cfx/vocab.hpp"
#include "cfx/wordpiece.hpp"
#include "doctest.h"

using namespace cfx;

namespace {

Vocab tiny_vocab(std::vector<std::string> extra) {
  std::vector<std::string> toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  toks.insert(toks.end(), extra.begin(), extra.end());
  return Vocab(std::move(toks));
}

// Random sentences over a fixed word list, for round-trip properties.
std::string random_line(std::mt19937_64& rng) {
  static const std::vector<std::string> words = {"the",     "flood", "could",   "have", "been",
                                                 "avoided", "if",    "dam",     "was",  "built",
                                                 "earlier", "storm", "warning", "sent", "a"};
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
  std::bernoulli_distribution punct(0.2);
  std::string line;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    if (i) line += ' ';
    line += words[pick(rng)];
    if (punct(rng)) line += ',';
  }
  line += '.';
  return line;
}

}  // namespace

TEST_SUITE_BEGIN("tokenizer");

TEST_CASE("greedy longest match with offsets") {
  Vocab v = tiny_vocab({"count", "##er", "##factual", "c", "o", "u", "n", "t"});
  auto subs = wordpiece_tokenize("counterfactual", v);
  REQUIRE(subs.size() == 3);
  CHECK(subs[0].piece == "count");
  CHECK(subs[1].piece == "##er");
  CHECK(subs[2].piece == "##factual");
  CHECK(subs[0].start == 0);
  CHECK(subs[0].end == 5);
  CHECK(subs[1].start == 5);
  CHECK(subs[1].end == 7);
  CHECK(subs[2].start == 7);
  CHECK(subs[2].end == 14);
}

TEST_CASE("empty input gives no tokens") {
  Vocab v = tiny_vocab({"a"});
  CHECK(wordpiece_tokenize("", v).empty());
  CHECK(wordpiece_tokenize("   ", v).empty());
}

TEST_CASE("unmatched word head becomes a single UNK covering the word") {
  Vocab v = tiny_vocab({"count"});
  auto subs = wordpiece_tokenize("zzz count", v);
  REQUIRE(subs.size() == 2);
  CHECK(subs[0].id == Vocab::kUnk);
  CHECK(subs[0].start == 0);
  CHECK(subs[0].end == 3);
  CHECK(subs[1].piece == "count");

  // Head match but missing continuation: the whole word falls back to UNK.
  auto subs2 = wordpiece_tokenize("countz", v);
  REQUIRE(subs2.size() == 1);
  CHECK(subs2[0].id == Vocab::kUnk);
  CHECK(subs2[0].end == 6);
}

TEST_CASE("offset slices reproduce the source text") {
  std::mt19937_64 rng(17);
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(random_line(rng));
  Vocab v = build_vocab(corpus, 256);
  for (const std::string& line : corpus) {
    std::string rebuilt;
    for (const SubToken& s : wordpiece_tokenize(line, v)) {
      rebuilt += line.substr(static_cast<size_t>(s.start), static_cast<size_t>(s.end - s.start));
    }
    std::string no_space;
    for (char c : line) {
      if (c != ' ') no_space += c;
    }
    CHECK(rebuilt == no_space);
  }
}

TEST_CASE("lowercasing affects matching but not offsets") {
  Vocab v = tiny_vocab({"flood", "the"});
  auto subs = wordpiece_tokenize("The FLOOD", v);
  REQUIRE(subs.size() == 2);
  CHECK(subs[0].piece == "the");
  CHECK(subs[1].piece == "flood");
  CHECK(subs[1].start == 4);
  CHECK(subs[1].end == 9);
}

TEST_CASE("pack_classification shape and specials") {
  Vocab v = tiny_vocab({"if", "only"});
  PackedSeq p = pack_classification("If only", v);
  CHECK(p.len() == 4);  // [CLS] if only [SEP]
  CHECK(p.ids.front() == Vocab::kCls);
  CHECK(p.ids.back() == Vocab::kSep);
  CHECK(p.statement_mask == std::vector<bool>{false, true, true, false});
  CHECK(p.token_firsts == std::vector<int>{1, 2});
  CHECK(p.segments == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("pack_classification truncates to max_len") {
  std::vector<std::string> corpus;
  std::string text;
  for (int i = 0; i < 500; ++i) text += "flood ";
  corpus.push_back(text);
  Vocab v = build_vocab(corpus, 64);
  PackedSeq p = pack_classification(text, v, 128);
  CHECK(p.len() == 128);
  CHECK(p.ids.front() == Vocab::kCls);
  CHECK(p.ids.back() == Vocab::kSep);

  // Truncation mid-word keeps a trailing continuation with valid offsets.
  Vocab v2 = tiny_vocab({"co", "##un", "##t"});
  PackedSeq p2 = pack_classification("count count", v2, 6);
  CHECK(p2.len() == 6);
  CHECK(p2.ids.back() == Vocab::kSep);
  const auto [cs, ce] = p2.char_spans[static_cast<size_t>(p2.len() - 2)];
  CHECK(cs >= 0);
  CHECK(ce > cs);
}

TEST_CASE("pack_qa segments, mask and truncation") {
  Vocab v = tiny_vocab({"antecedent", "the", "flood", "was", "bad"});
  PackedSeq p = pack_qa("antecedent", "the flood was bad", v);
  // [CLS] antecedent [SEP] the flood was bad [SEP]
  CHECK(p.len() == 8);
  CHECK(p.segments == std::vector<int>{0, 0, 0, 1, 1, 1, 1, 1});
  CHECK(p.statement_mask == std::vector<bool>{false, false, false, true, true, true, true, false});
  CHECK(p.statement_positions() == std::vector<int>{3, 4, 5, 6});

  // Only the statement shrinks; both separators survive.
  PackedSeq t = pack_qa("antecedent", "the flood was bad the flood was bad", v, 8);
  CHECK(t.len() == 8);
  CHECK(t.ids[2] == Vocab::kSep);
  CHECK(t.ids.back() == Vocab::kSep);
  CHECK(t.statement_positions().size() == 4);
}

TEST_CASE("definition query packs in segment 0") {
  std::vector<std::string> corpus = {"a preceding event, condition, or cause",
                                     "the flood was bad"};
  Vocab v = build_vocab(corpus, 128);
  PackedSeq p = pack_qa("a preceding event, condition, or cause", "the flood was bad", v);
  for (int i = 0; i < p.len(); ++i) {
    if (p.segments[static_cast<size_t>(i)] == 0) {
      CHECK_FALSE(p.statement_mask[static_cast<size_t>(i)]);
    }
  }
  // Final [SEP] closes segment 1.
  CHECK(p.segments.back() == 1);
  CHECK(p.statement_positions().size() == 5);  // the flood was bad .
}

TEST_CASE("pack_qa rejects an oversized query") {
  Vocab v = tiny_vocab({"the", "flood"});
  std::string query;
  for (int i = 0; i < 20; ++i) query += "the flood ";
  CHECK_THROWS_AS(pack_qa(query, "the flood", v, 16), InputError);
}

TEST_CASE("build_vocab basics and determinism") {
  Vocab v = build_vocab({"a a b"}, 10);
  CHECK(v.find("a") >= 0);
  CHECK(v.find("b") >= 0);
  CHECK(v.find("[CLS]") == Vocab::kCls);
  CHECK(v.find("[SEP]") == Vocab::kSep);

  Vocab v1 = build_vocab({"the flood could have been avoided", "the dam was built"}, 64);
  Vocab v2 = build_vocab({"the flood could have been avoided", "the dam was built"}, 64);
  CHECK(v1.serialize() == v2.serialize());
  CHECK(v1.content_hash() == v2.content_hash());

  CHECK_THROWS_AS(build_vocab({"abcdefghij"}, 5), ConfigError);
}

TEST_CASE("vocab covers a synthetic corpus with zero UNK") {
  std::mt19937_64 rng(7);
  std::vector<std::string> corpus;
  for (int i = 0; i < 300; ++i) corpus.push_back(random_line(rng));
  Vocab v = build_vocab(corpus, 512);
  for (const std::string& line : corpus) {
    for (const SubToken& s : wordpiece_tokenize(line, v)) CHECK(s.id != Vocab::kUnk);
  }
}

TEST_CASE("vocab file round trip is bit exact") {
  Vocab v = build_vocab({"the flood could have been avoided if the dam held"}, 64);
  const std::string path = "vocab_roundtrip_test.txt";
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded.serialize() == v.serialize());
  CHECK(loaded.content_hash() == v.content_hash());
  std::remove(path.c_str());
}

TEST_CASE("packing invariants on random inputs") {
  std::mt19937_64 rng(23);
  std::vector<std::string> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(random_line(rng));
  Vocab v = build_vocab(corpus, 256);

  for (int trial = 0; trial < 60; ++trial) {
    const std::string stmt = random_line(rng);
    const int max_len = 16 + static_cast<int>(rng() % 112);
    PackedSeq p = pack_qa("antecedent", stmt, v, max_len);

    CHECK(p.len() <= max_len);
    CHECK(p.ids.front() == Vocab::kCls);
    CHECK(p.ids.back() == Vocab::kSep);
    CHECK_FALSE(p.statement_mask.front());
    CHECK_FALSE(p.statement_mask.back());

    // Statement spans are ordered and non-overlapping; masked positions are
    // exactly the segment-1 non-special positions.
    int prev_end = -1;
    for (int i = 0; i < p.len(); ++i) {
      if (p.statement_mask[static_cast<size_t>(i)]) {
        CHECK(p.segments[static_cast<size_t>(i)] == 1);
        const auto [cs, ce] = p.char_spans[static_cast<size_t>(i)];
        CHECK(cs >= prev_end);
        CHECK(ce > cs);
        prev_end = ce;
        CHECK(p.ids[static_cast<size_t>(i)] != Vocab::kCls);
        CHECK(p.ids[static_cast<size_t>(i)] != Vocab::kSep);
      }
    }

    // No truncation when the statement fits.
    const auto subs = wordpiece_tokenize(stmt, v);
    if (static_cast<int>(subs.size()) + 3 + 1 <= max_len) {
      CHECK(p.statement_positions().size() == subs.size());
    }
  }
}

TEST_SUITE_END();
