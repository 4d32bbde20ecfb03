#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cfx/encoder.hpp"

namespace cfx {

enum class Aggregation { cls, cnn, cls_cnn };

std::string aggregation_name(Aggregation a);
Aggregation aggregation_from_name(const std::string& name);

// Convolutional aggregator: `filters` kernels of `window` token rows each,
// tanh activation, max pooling over positions.
struct CnnIds {
  int window = 3;
  int filters = 300;
  int weight = -1;  // [window * hidden, filters]
  int bias = -1;    // [filters]

  static CnnIds create(ParamStore& store, int window, int filters, int hidden,
                       std::mt19937_64& rng);
  static CnnIds attach(const ParamStore& store, int window, int filters);
};

// Affine score + sigmoid over the aggregate feature.
struct ClassifierIds {
  int weight = -1;  // [feature_dim]
  int bias = -1;    // [1]

  static ClassifierIds create(ParamStore& store, int feature_dim, std::mt19937_64& rng);
  static ClassifierIds attach(const ParamStore& store);
};

// [CLS] pass-through: the aggregate feature is C itself.
Var aggregate_cls(Tape& tape, Var cls_vec);

// tanh conv over token rows, max-pooled per filter. Sequences shorter than
// the window are zero-padded so exactly one window exists.
Var aggregate_cnn(Tape& tape, const std::vector<Var>& bound, Var token_rows, const CnnIds& cnn);

// Concatenation [aggregate_cls ; aggregate_cnn].
Var aggregate_combined(Tape& tape, const std::vector<Var>& bound, Var cls_vec, Var token_rows,
                       const CnnIds& cnn);

// P(y=1 | x) = sigmoid(w . r + b).
Var classify(Tape& tape, const std::vector<Var>& bound, Var feature, const ClassifierIds& cls);

// Summed binary cross-entropy over a batch of probabilities.
Var bce_loss(Tape& tape, const std::vector<Var>& probs, const std::vector<int>& labels);

// Plain-value BCE for evaluation paths; same clamp as the tape op.
double bce_loss_value(const std::vector<double>& probs, const std::vector<int>& labels);

int predict_label(double prob, double threshold = 0.5);

struct CfdConfig {
  EncoderConfig encoder;
  Aggregation aggregation = Aggregation::cls_cnn;
  int cnn_window = 3;
  int cnn_filters = 300;

  int feature_dim() const;
  void validate() const;
};

// Counterfactual-statement classifier: encoder + scalar mix + aggregation +
// sigmoid classifier. Owns its parameters.
class CfdModel {
 public:
  CfdModel(const CfdConfig& cfg, std::uint64_t seed);
  // Rebuilds the module layout over an existing store (checkpoint load).
  CfdModel(const CfdConfig& cfg, ParamStore store);

  const CfdConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::vector<Var> bind(Tape& tape, bool requires_grad) const {
    return params_.bind(tape, requires_grad);
  }

  // Probability that `packed` is a counterfactual statement. Training mode
  // (non-null rng) applies dropout.
  Var prob(Tape& tape, const std::vector<Var>& bound, const PackedSeq& packed,
           std::mt19937_64* dropout_rng = nullptr) const;

  // Summed BCE over a batch.
  Var batch_loss(Tape& tape, const std::vector<Var>& bound,
                 const std::vector<const PackedSeq*>& batch, const std::vector<int>& labels,
                 std::mt19937_64* dropout_rng) const;

  // Inference over many inputs with bounded tape growth.
  std::vector<double> predict_probs(const std::vector<PackedSeq>& inputs) const;
  double predict_prob(const PackedSeq& packed) const;

 private:
  const Encoder& enc() const { return *encoder_; }
  bool uses_cnn() const { return cfg_.aggregation != Aggregation::cls; }
  bool uses_cls() const { return cfg_.aggregation != Aggregation::cnn; }

  CfdConfig cfg_;
  ParamStore params_;
  std::optional<Encoder> encoder_;
  ScalarMixIds mix_;
  CnnIds cnn_;
  ClassifierIds cls_;
};

}  // namespace cfx
