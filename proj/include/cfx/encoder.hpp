#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cfx/params.hpp"
#include "cfx/tape.hpp"
#include "cfx/wordpiece.hpp"

namespace cfx {

struct EncoderConfig {
  int layers = 4;
  int hidden = 128;
  int heads = 4;
  int ffn = 512;
  int max_len = 128;
  int vocab_size = 0;
  double dropout = 0.1;
  // Whether the embedding output participates in the scalar mix as layer 0.
  bool mix_includes_embedding = true;

  void validate() const;
};

// Per-layer hidden states: states[0] is the embedding output, states[j] the
// output of layer j. All are [seq_len x hidden] on the same tape.
struct LayerStack {
  std::vector<Var> states;
  Var final_layer() const { return states.back(); }
};

// Learned-absolute-position transformer encoder, post-layer-norm blocks,
// GELU feed-forward. Parameters live in a ParamStore under "enc.*" names.
class Encoder {
 public:
  // Registers freshly initialized parameters.
  Encoder(const EncoderConfig& cfg, ParamStore& store, std::mt19937_64& rng);
  // Attaches to parameters already present in the store (checkpoint load).
  Encoder(const EncoderConfig& cfg, const ParamStore& store);

  const EncoderConfig& config() const { return cfg_; }

  // Forward pass over one packed sequence. `bound` is ParamStore::bind
  // output for the store this encoder was built on. With a null rng, dropout
  // is disabled (inference). `attn_probs`, when given, receives the
  // softmaxed attention matrix of every (layer, head).
  LayerStack encode(Tape& tape, const std::vector<Var>& bound, const PackedSeq& packed,
                    std::mt19937_64* dropout_rng = nullptr,
                    std::vector<Var>* attn_probs = nullptr) const;

 private:
  struct LayerIds {
    int wq, bq, wk, bk, wv, bv, wo, bo;
    int ln1_g, ln1_b;
    int w1, b1, w2, b2;
    int ln2_g, ln2_b;
  };

  EncoderConfig cfg_;
  int tok_emb_, pos_emb_, seg_emb_;
  int ln0_g_, ln0_b_;
  std::vector<LayerIds> layer_ids_;
};

// Softmax-weighted, gamma-scaled combination of stack layers.
struct ScalarMixIds {
  int logits = -1;
  int gamma = -1;

  static ScalarMixIds create(ParamStore& store, const std::string& prefix, int mixture_size);
  static ScalarMixIds attach(const ParamStore& store, const std::string& prefix);
};

Var scalar_mix_pool(Tape& tape, const std::vector<Var>& bound, const LayerStack& stack,
                    const ScalarMixIds& mix, bool include_embedding);

// Rows of `mixed` at the first sub-token of each whole word.
Var token_level_select(Tape& tape, Var mixed, const PackedSeq& packed);

// Row 0 ([CLS]) of a representation matrix, as a vector.
Var cls_vector(Tape& tape, Var rep);

}  // namespace cfx
