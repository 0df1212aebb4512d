#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sec/matrix.hpp"

namespace sec {

// Expert level, 1-based. Level 1 holds the highest-retention experts.
struct Level {
  int value = 1;
  std::size_t index() const { return static_cast<std::size_t>(value - 1); }
  static Level from_index(std::size_t i) { return Level{static_cast<int>(i) + 1}; }
  friend auto operator<=>(const Level&, const Level&) = default;
};

enum class HeadKind { kContinuous, kDiscrete };

std::string to_string(HeadKind head);
HeadKind head_kind_from_string(const std::string& name);

// y = x·weight + bias, weight is in×out, bias is 1×out.
struct DenseLayer {
  Matrix weight;
  Matrix bias;
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Shared state encoder: every layer is followed by a ReLU.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Per-level action predictor: ReLU on every layer except the last. The last
// layer emits the action embedding (continuous) or class logits (discrete).
struct PredictorParams {
  HeadKind head = HeadKind::kContinuous;
  std::vector<DenseLayer> layers;
  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

struct PolicyParams {
  EncoderParams encoder;
  std::vector<PredictorParams> predictors;  // predictors[level.index()]

  std::size_t levels() const { return predictors.size(); }
  HeadKind head() const { return predictors.front().head; }
  std::size_t state_dim() const { return encoder.input_dim(); }
  std::size_t hidden_dim() const { return encoder.output_dim(); }
  std::size_t action_dim() const { return predictors.front().output_dim(); }
  const PredictorParams& predictor(Level k) const;

  // Throws ContractError when layer shapes do not chain or K == 0.
  void validate() const;
  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct PolicyShape {
  std::size_t state_dim = 16;
  std::size_t hidden = 32;
  std::size_t predictor_hidden = 32;
  std::size_t action_dim = 8;  // embedding width, continuous head
  std::size_t classes = 32;    // logits, discrete head
  HeadKind head = HeadKind::kContinuous;
  std::size_t levels = 3;

  std::size_t output_dim() const { return head == HeadKind::kContinuous ? action_dim : classes; }
};

// Glorot-uniform weights, zero biases.
PolicyParams init_policy(const PolicyShape& shape, std::uint64_t seed);

// Gradient set with the same shapes as PolicyParams. `touched[k]` records
// whether predictor k received any gradient; untouched predictors are zero
// and are skipped by the optimizer.
struct PolicyGradients {
  EncoderParams encoder;
  std::vector<PredictorParams> predictors;
  std::vector<bool> touched;

  static PolicyGradients zeros_like(const PolicyParams& params);
  PolicyGradients& operator+=(const PolicyGradients& other);
  void scale(double s);
  double norm() const;
  bool all_finite() const;
};

// Activations recorded during a forward pass. layer_inputs[i] feeds layer i,
// pre_activations[i] is its output before the nonlinearity.
struct MlpTrace {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
};

struct PolicyForward {
  Level level;
  HeadKind head = HeadKind::kContinuous;
  MlpTrace encoder;
  MlpTrace predictor;
  Matrix hidden;  // encoder output
  Matrix output;  // actions (continuous) or softmax probabilities (discrete)
  Matrix logits;  // discrete head only
  bool valid() const { return !encoder.layer_inputs.empty(); }
};

Matrix encode(const EncoderParams& params, const Matrix& states);
Matrix predict_continuous(const PredictorParams& params, const Matrix& hidden);
// Row-wise softmax of the predictor logits.
Matrix predict_discrete(const PredictorParams& params, const Matrix& hidden);
Matrix softmax_rows(const Matrix& logits);

PolicyForward forward(const PolicyParams& params, Level level, const Matrix& states);

// Backpropagates `grad_at_head` through predictor `fwd.level` and the shared
// encoder. For the discrete head `grad_at_head` is the gradient with respect
// to the logits (see softmax_backward). Gradients of all other predictors are
// zero and marked untouched.
PolicyGradients backward(const PolicyParams& params, const PolicyForward& fwd, const Matrix& grad_at_head);

// Chain rule through a row-wise softmax: gradient at probabilities to gradient at logits.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

// Every parameter tensor in a fixed order: encoder layers (weight, bias) then
// predictors in level order.
std::vector<Matrix*> parameter_tensors(PolicyParams& params);
std::vector<const Matrix*> parameter_tensors(const PolicyParams& params);
std::size_t parameter_count(const PolicyParams& params);

// Checkpoint document (JSON text). write(read(write(p))) == write(p).
std::string policy_to_json(const PolicyParams& params);
PolicyParams policy_from_json(const std::string& text);
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

}  // namespace sec
