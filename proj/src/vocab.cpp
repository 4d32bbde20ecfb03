#include "cfx/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "cfx/errors.hpp"

namespace cfx {

const std::string Vocab::kPadToken = "[PAD]";
const std::string Vocab::kUnkToken = "[UNK]";
const std::string Vocab::kClsToken = "[CLS]";
const std::string Vocab::kSepToken = "[SEP]";
const std::string Vocab::kContinuation = "##";

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const std::vector<const std::string*> specials = {&kPadToken, &kUnkToken, &kClsToken,
                                                    &kSepToken};
  if (tokens_.size() < specials.size()) {
    throw ConfigError("vocab needs at least the 4 special tokens");
  }
  for (size_t i = 0; i < specials.size(); ++i) {
    if (tokens_[i] != *specials[i]) {
      throw ConfigError("vocab slot " + std::to_string(i) + " must be " + *specials[i] +
                        ", got " + tokens_[i]);
    }
  }
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw ConfigError("empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate token: " + tokens_[i]);
    }
  }
}

int Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const std::string& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write vocab file: " + path);
  const std::string body = serialize();
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw FormatError("short write to vocab file: " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read vocab file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw FormatError("empty line " + std::to_string(tokens.size() + 1) + " in vocab file " +
                        path);
    }
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

std::uint64_t Vocab::content_hash() const { return fnv1a64(serialize()); }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

// Words of a line: maximal runs of non-space non-punct chars, plus each
// punctuation char by itself.
std::vector<std::string> split_words(const std::string& line, bool lowercase) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : line) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      words.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur += static_cast<char>(lowercase ? std::tolower(c) : c);
    }
  }
  flush();
  return words;
}

}  // namespace

Vocab build_vocab(const std::vector<std::string>& corpus_lines, int target_size, bool lowercase) {
  if (corpus_lines.empty()) throw ConfigError("build_vocab: empty corpus");

  std::map<std::string, long> word_freq;
  std::map<char, long> char_freq;
  for (const std::string& line : corpus_lines) {
    for (const std::string& w : split_words(line, lowercase)) {
      word_freq[w] += 1;
      for (char c : w) char_freq[c] += 1;
    }
  }
  if (word_freq.empty()) throw ConfigError("build_vocab: corpus has no words");

  const int reserved = 4 + static_cast<int>(char_freq.size());
  if (target_size < reserved) {
    throw ConfigError("vocab target_size " + std::to_string(target_size) + " below alphabet (" +
                      std::to_string(char_freq.size()) + " chars) plus 4 specials");
  }

  std::vector<std::string> tokens = {Vocab::kPadToken, Vocab::kUnkToken, Vocab::kClsToken,
                                     Vocab::kSepToken};

  // Alphabet first, by descending frequency then lexicographic.
  {
    std::vector<std::pair<char, long>> chars(char_freq.begin(), char_freq.end());
    std::sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    for (const auto& [c, f] : chars) tokens.push_back(std::string(1, c));
  }

  std::vector<std::string> seen(tokens);
  std::sort(seen.begin(), seen.end());
  auto taken = [&seen](const std::string& t) {
    return std::binary_search(seen.begin(), seen.end(), t);
  };

  auto append_by_freq = [&](const std::map<std::string, long>& freq) {
    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    for (const auto& [tok, f] : items) {
      if (static_cast<int>(tokens.size()) >= target_size) break;
      if (!taken(tok)) {
        tokens.push_back(tok);
        seen.insert(std::upper_bound(seen.begin(), seen.end(), tok), tok);
      }
    }
  };

  append_by_freq(word_freq);

  // Word-internal substrings as "##" continuations.
  if (static_cast<int>(tokens.size()) < target_size) {
    std::map<std::string, long> cont_freq;
    for (const auto& [w, f] : word_freq) {
      const int n = static_cast<int>(w.size());
      for (int start = 1; start < n; ++start) {
        for (int len = 1; start + len <= n; ++len) {
          cont_freq[Vocab::kContinuation +
                    w.substr(static_cast<size_t>(start), static_cast<size_t>(len))] += f;
        }
      }
    }
    append_by_freq(cont_freq);
  }

  return Vocab(std::move(tokens));
}

}  // namespace cfx
