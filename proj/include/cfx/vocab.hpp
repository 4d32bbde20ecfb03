#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace cfx {

// WordPiece vocabulary. Ids are dense in [0, size); the four specials occupy
// fixed slots so checkpoints can rely on them. Immutable after construction
// and safe to share across threads.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  static const std::string kPadToken;
  static const std::string kUnkToken;
  static const std::string kClsToken;
  static const std::string kSepToken;
  static const std::string kContinuation;  // "##"

  // tokens[0..3] must be the specials above, in order.
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int find(const std::string& token) const;  // -1 when absent
  const std::string& token(int id) const { return tokens_[static_cast<size_t>(id)]; }

  // One token per line, line number = id. This byte layout is the
  // checkpoint-compatibility contract, so keep it stable.
  std::string serialize() const;
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // FNV-1a over serialize(); recorded in checkpoints.
  std::uint64_t content_hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Deterministic vocabulary construction: specials, every character of the
// corpus alphabet, then whole words and word-internal continuations by
// descending frequency (ties lexicographic) until target_size is reached.
Vocab build_vocab(const std::vector<std::string>& corpus_lines, int target_size,
                  bool lowercase = true);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace cfx
