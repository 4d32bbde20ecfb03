#include "cfx/encoder.hpp"

#include <cmath>

#include "cfx/errors.hpp"

namespace cfx {

namespace {

constexpr double kInitStd = 0.02;

std::string layer_name(int layer, const char* suffix) {
  return "enc.layer" + std::to_string(layer) + "." + suffix;
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (hidden < 1 || heads < 1 || ffn < 1 || max_len < 3) {
    throw ConfigError("encoder sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (vocab_size < 5) throw ConfigError("encoder vocab_size must cover the special tokens");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

Encoder::Encoder(const EncoderConfig& cfg, ParamStore& store, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.hidden;
  tok_emb_ = store.add("enc.tok_emb", Tensor::randn({cfg_.vocab_size, d}, rng, kInitStd));
  pos_emb_ = store.add("enc.pos_emb", Tensor::randn({cfg_.max_len, d}, rng, kInitStd));
  seg_emb_ = store.add("enc.seg_emb", Tensor::randn({2, d}, rng, kInitStd));
  ln0_g_ = store.add("enc.ln0.gain", Tensor::full({d}, 1.0));
  ln0_b_ = store.add("enc.ln0.shift", Tensor::zeros({d}));
  for (int l = 0; l < cfg_.layers; ++l) {
    LayerIds ids;
    ids.wq = store.add(layer_name(l, "wq"), Tensor::randn({d, d}, rng, kInitStd));
    ids.bq = store.add(layer_name(l, "bq"), Tensor::zeros({d}));
    ids.wk = store.add(layer_name(l, "wk"), Tensor::randn({d, d}, rng, kInitStd));
    ids.bk = store.add(layer_name(l, "bk"), Tensor::zeros({d}));
    ids.wv = store.add(layer_name(l, "wv"), Tensor::randn({d, d}, rng, kInitStd));
    ids.bv = store.add(layer_name(l, "bv"), Tensor::zeros({d}));
    ids.wo = store.add(layer_name(l, "wo"), Tensor::randn({d, d}, rng, kInitStd));
    ids.bo = store.add(layer_name(l, "bo"), Tensor::zeros({d}));
    ids.ln1_g = store.add(layer_name(l, "ln1.gain"), Tensor::full({d}, 1.0));
    ids.ln1_b = store.add(layer_name(l, "ln1.shift"), Tensor::zeros({d}));
    ids.w1 = store.add(layer_name(l, "ffn.w1"), Tensor::randn({d, cfg_.ffn}, rng, kInitStd));
    ids.b1 = store.add(layer_name(l, "ffn.b1"), Tensor::zeros({cfg_.ffn}));
    ids.w2 = store.add(layer_name(l, "ffn.w2"), Tensor::randn({cfg_.ffn, d}, rng, kInitStd));
    ids.b2 = store.add(layer_name(l, "ffn.b2"), Tensor::zeros({d}));
    ids.ln2_g = store.add(layer_name(l, "ln2.gain"), Tensor::full({d}, 1.0));
    ids.ln2_b = store.add(layer_name(l, "ln2.shift"), Tensor::zeros({d}));
    layer_ids_.push_back(ids);
  }
}

Encoder::Encoder(const EncoderConfig& cfg, const ParamStore& store) : cfg_(cfg) {
  cfg_.validate();
  tok_emb_ = store.require("enc.tok_emb");
  pos_emb_ = store.require("enc.pos_emb");
  seg_emb_ = store.require("enc.seg_emb");
  ln0_g_ = store.require("enc.ln0.gain");
  ln0_b_ = store.require("enc.ln0.shift");
  for (int l = 0; l < cfg_.layers; ++l) {
    LayerIds ids;
    ids.wq = store.require(layer_name(l, "wq"));
    ids.bq = store.require(layer_name(l, "bq"));
    ids.wk = store.require(layer_name(l, "wk"));
    ids.bk = store.require(layer_name(l, "bk"));
    ids.wv = store.require(layer_name(l, "wv"));
    ids.bv = store.require(layer_name(l, "bv"));
    ids.wo = store.require(layer_name(l, "wo"));
    ids.bo = store.require(layer_name(l, "bo"));
    ids.ln1_g = store.require(layer_name(l, "ln1.gain"));
    ids.ln1_b = store.require(layer_name(l, "ln1.shift"));
    ids.w1 = store.require(layer_name(l, "ffn.w1"));
    ids.b1 = store.require(layer_name(l, "ffn.b1"));
    ids.w2 = store.require(layer_name(l, "ffn.w2"));
    ids.b2 = store.require(layer_name(l, "ffn.b2"));
    ids.ln2_g = store.require(layer_name(l, "ln2.gain"));
    ids.ln2_b = store.require(layer_name(l, "ln2.shift"));
    layer_ids_.push_back(ids);
  }
}

LayerStack Encoder::encode(Tape& tape, const std::vector<Var>& bound, const PackedSeq& packed,
                           std::mt19937_64* dropout_rng, std::vector<Var>* attn_probs) const {
  const int n = packed.len();
  if (n < 1) throw InputError("encode: empty sequence");
  if (n > cfg_.max_len) {
    throw InputError("encode: sequence length " + std::to_string(n) + " over max_len " +
                     std::to_string(cfg_.max_len));
  }
  for (int id : packed.ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw InputError("encode: token id " + std::to_string(id) + " outside vocab of " +
                       std::to_string(cfg_.vocab_size));
    }
  }
  const int d = cfg_.hidden;
  const int dh = d / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  auto p = [&bound](int id) { return bound[static_cast<size_t>(id)]; };
  auto maybe_dropout = [&](Var x) {
    return dropout_rng != nullptr && cfg_.dropout > 0.0 ? tape.dropout(x, cfg_.dropout, *dropout_rng)
                                                        : x;
  };

  std::vector<int> positions(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;

  Var x = tape.add(tape.gather_rows(p(tok_emb_), packed.ids),
                   tape.add(tape.gather_rows(p(pos_emb_), positions),
                            tape.gather_rows(p(seg_emb_), packed.segments)));
  x = tape.layer_norm(x, p(ln0_g_), p(ln0_b_));
  x = maybe_dropout(x);

  LayerStack stack;
  stack.states.push_back(x);

  for (const LayerIds& ids : layer_ids_) {
    Var q = tape.add_rowvec(tape.matmul(x, p(ids.wq)), p(ids.bq));
    Var k = tape.add_rowvec(tape.matmul(x, p(ids.wk)), p(ids.bk));
    Var v = tape.add_rowvec(tape.matmul(x, p(ids.wv)), p(ids.bv));

    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
      Var qh = tape.slice_cols(q, h * dh, dh);
      Var kh = tape.slice_cols(k, h * dh, dh);
      Var vh = tape.slice_cols(v, h * dh, dh);
      Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh);
      Var probs = tape.softmax_lastdim(scores);
      if (attn_probs != nullptr) attn_probs->push_back(probs);
      head_outs.push_back(tape.matmul(probs, vh));
    }
    Var attn = tape.concat_cols(head_outs);
    attn = tape.add_rowvec(tape.matmul(attn, p(ids.wo)), p(ids.bo));
    attn = maybe_dropout(attn);
    Var h1 = tape.layer_norm(tape.add(x, attn), p(ids.ln1_g), p(ids.ln1_b));

    Var f = tape.gelu(tape.add_rowvec(tape.matmul(h1, p(ids.w1)), p(ids.b1)));
    f = tape.add_rowvec(tape.matmul(f, p(ids.w2)), p(ids.b2));
    f = maybe_dropout(f);
    x = tape.layer_norm(tape.add(h1, f), p(ids.ln2_g), p(ids.ln2_b));
    stack.states.push_back(x);
  }
  return stack;
}

ScalarMixIds ScalarMixIds::create(ParamStore& store, const std::string& prefix,
                                  int mixture_size) {
  ScalarMixIds ids;
  ids.logits = store.add(prefix + ".logits", Tensor::zeros({mixture_size}));
  ids.gamma = store.add(prefix + ".gamma", Tensor::scalar(1.0));
  return ids;
}

ScalarMixIds ScalarMixIds::attach(const ParamStore& store, const std::string& prefix) {
  ScalarMixIds ids;
  ids.logits = store.require(prefix + ".logits");
  ids.gamma = store.require(prefix + ".gamma");
  return ids;
}

Var scalar_mix_pool(Tape& tape, const std::vector<Var>& bound, const LayerStack& stack,
                    const ScalarMixIds& mix, bool include_embedding) {
  std::vector<Var> layers(stack.states.begin() + (include_embedding ? 0 : 1),
                          stack.states.end());
  return tape.scalar_mix(layers, bound[static_cast<size_t>(mix.logits)],
                         bound[static_cast<size_t>(mix.gamma)]);
}

Var token_level_select(Tape& tape, Var mixed, const PackedSeq& packed) {
  return tape.gather_rows(mixed, packed.token_firsts);
}

Var cls_vector(Tape& tape, Var rep) {
  const int cols = tape.val(rep).cols();
  return tape.reshape(tape.gather_rows(rep, {0}), {cols});
}

}  // namespace cfx
