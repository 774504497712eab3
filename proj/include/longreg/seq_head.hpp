#pragma once

// GRU-with-attention regression head over frozen window embeddings.
//
//   h_t   = GRU stack(x_1..x_t), unidirectional, h_0 = 0
//   alpha = masked softmax_t(a . h_t)          (no bias, no scaling)
//   c     = sum_t alpha_t h_t
//   y     = V dropout(c) + b
//
// GRU cell (gate rows ordered update, reset, candidate):
//   z = sigmoid(Wz x + bz + Uz h + cz)
//   r = sigmoid(Wr x + br + Ur h + cr)
//   n = tanh(Wn x + bn + r * (Un h + cn))
//   h' = (1 - z) * n + z * h
//
// Embeddings are constants: no gradient is ever formed for them.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "longreg/core.hpp"
#include "longreg/optim.hpp"

namespace longreg {

struct SeqHeadConfig {
  std::size_t input_dim = kDefaultEmbeddingDim;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t output_dim = 1;
  double dropout = 0.1;  // regression head only
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SeqHeadConfig&, const SeqHeadConfig&) = default;
};

/// Named slice of the flat parameter vector; the checkpoint's declared
/// parameter ordering is the sequence of blocks.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

class SeqHeadParams {
 public:
  SeqHeadParams() = default;
  explicit SeqHeadParams(const SeqHeadConfig& config);  // all zeros

  const SeqHeadConfig& config() const { return config_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> block(std::string_view name);
  std::span<const double> block(std::string_view name) const;

  struct Layer {
    const double* w_input;   // 3H x in
    const double* w_hidden;  // 3H x H
    const double* b_input;   // 3H
    const double* b_hidden;  // 3H
    std::size_t in;
  };
  Layer layer(std::size_t l) const;
  std::span<const double> attention() const;  // H
  const double* output_weight() const;        // O x H
  const double* output_bias() const;          // O

  friend bool operator==(const SeqHeadParams& a, const SeqHeadParams& b) {
    return a.config_ == b.config_ && a.values_ == b.values_;
  }

 private:
  SeqHeadConfig config_;
  std::vector<ParamBlock> layout_;
  std::vector<double> values_;
};

/// Deterministic in config.seed: GRU, attention and output weights drawn
/// U(-1/sqrt(H), 1/sqrt(H)); biases zero.
SeqHeadParams init_params(const SeqHeadConfig& config);

struct AttentionResult {
  std::vector<double> alpha;    // one per step; exactly 0 where masked
  std::vector<double> context;  // H
};

/// hidden is steps x H row-major; mask empty means all steps valid.
/// Throws std::invalid_argument when every step is masked.
AttentionResult attention_pool(std::span<const double> hidden, std::size_t steps, std::span<const std::uint8_t> mask,
                               std::span<const double> attention_vector);

/// Top-layer hidden states for every step of every batch row (masked steps
/// included): batch x cap x H.
std::vector<double> gru_forward(const SeqHeadParams& params, const PaddedBatch& batch);

struct ForwardTrace {
  std::size_t length = 0;           // true length
  std::vector<double> hidden;       // steps x H (top layer)
  std::vector<double> alpha;        // steps
  std::vector<double> context;      // H
  std::vector<double> prediction;   // output_dim
  std::vector<std::uint8_t> mask;   // steps
};

/// Inference (dropout off). Throws std::invalid_argument on dim mismatch.
ForwardTrace predict(const SeqHeadParams& params, const EmbeddingSequence& seq);

/// Inference on row b of a padded batch; masked steps run through the GRU
/// but receive zero attention.
ForwardTrace predict_padded(const SeqHeadParams& params, const PaddedBatch& batch, std::size_t b);

/// Mean squared error. Throws std::invalid_argument on empty or mismatched input.
double loss_mse(std::span<const double> predicted, std::span<const double> target);

/// Per-item inverted-dropout multipliers on the context vector
/// (0 or 1/(1-p)), batch x H. Empty means dropout off.
using DropoutMasks = std::vector<double>;

DropoutMasks sample_dropout(std::size_t batch, std::size_t hidden, double rate, std::mt19937_64& rng);

struct GradientResult {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as SeqHeadParams::values()
};

/// Exact gradient of the batch-mean MSE with respect to every parameter.
/// targets holds batch x output_dim values. Throws DivergenceError on a
/// non-finite intermediate.
GradientResult backward(const SeqHeadParams& params, std::span<const EmbeddingSequence* const> batch,
                        std::span<const double> targets, const DropoutMasks& dropout = {});

struct SequenceSet {
  std::vector<const EmbeddingSequence*> seqs;
  std::vector<double> targets;  // seqs.size() x output_dim
};

struct SeqHeadModel {
  SeqHeadParams params;
  TrainHistory history;
  TrainConfig train_config;
};

/// Mini-batch Adam on the batch-mean MSE with early stopping on val MSE.
/// Returns the best-validation checkpoint. Deterministic given the seeds.
SeqHeadModel fit(const SequenceSet& train, const SequenceSet& val, const SeqHeadConfig& config,
                 const TrainConfig& train_config);

/// Mean squared error of the model over a set (dropout off).
double evaluate_mse(const SeqHeadParams& params, const SequenceSet& set);

}  // namespace longreg
