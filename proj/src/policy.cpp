#include "sec/policy.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "sec/error.hpp"
#include "sec/io.hpp"
#include "sec/random.hpp"

namespace sec {

using nlohmann::json;

std::string to_string(HeadKind head) { return head == HeadKind::kContinuous ? "continuous" : "discrete"; }

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "continuous") return HeadKind::kContinuous;
  if (name == "discrete") return HeadKind::kDiscrete;
  throw ConfigError("unknown action kind '" + name + "'");
}

const PredictorParams& PolicyParams::predictor(Level k) const {
  if (k.value < 1 || k.index() >= predictors.size()) {
    throw ContractError("level " + std::to_string(k.value) + " outside 1.." + std::to_string(predictors.size()));
  }
  return predictors[k.index()];
}

namespace {

void validate_chain(const std::vector<DenseLayer>& layers, const char* what) {
  if (layers.empty()) throw ContractError(std::string(what) + ": no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ContractError(std::string(what) + ": bias shape " + l.bias.shape_string() + " does not match weight " +
                          l.weight.shape_string());
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw ContractError(std::string(what) + ": layer " + std::to_string(i) + " input " +
                          std::to_string(l.in_dim()) + " does not chain with previous output " +
                          std::to_string(layers[i - 1].out_dim()));
    }
    if (!l.weight.all_finite() || !l.bias.all_finite()) {
      throw ContractError(std::string(what) + ": non-finite parameter");
    }
  }
}

DenseLayer glorot_layer(std::size_t in, std::size_t out, Engine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer layer{Matrix(in, out), Matrix(1, out)};
  for (double& w : layer.weight.values()) w = dist(rng);
  return layer;
}

Matrix relu(Matrix m) {
  for (double& x : m.values()) x = x > 0.0 ? x : 0.0;
  return m;
}

// Forward through `layers`; ReLU after every layer except possibly the last.
Matrix run_mlp(const std::vector<DenseLayer>& layers, const Matrix& input, bool relu_last, MlpTrace* trace) {
  Matrix x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (x.cols() != layers[i].in_dim()) {
      throw ContractError("mlp: input " + x.shape_string() + " does not match layer " + std::to_string(i) +
                          " weight " + layers[i].weight.shape_string());
    }
    Matrix z = matmul(x, layers[i].weight);
    add_row_vector(z, layers[i].bias);
    const bool act = relu_last || i + 1 < layers.size();
    if (trace != nullptr) {
      trace->layer_inputs.push_back(std::move(x));
      trace->pre_activations.push_back(z);
    }
    x = act ? relu(std::move(z)) : std::move(z);
  }
  return x;
}

// Backward through `layers` given the gradient at the MLP output; writes
// parameter gradients into `grads` and returns the gradient at the input.
Matrix backprop_mlp(const std::vector<DenseLayer>& layers, const MlpTrace& trace, bool relu_last, Matrix grad,
                    std::vector<DenseLayer>& grads, bool need_input_grad) {
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    const bool act = relu_last || ii + 1 < layers.size();
    if (act) {
      auto g = grad.values();
      auto z = trace.pre_activations[ii].values();
      for (std::size_t j = 0; j < g.size(); ++j)
        if (z[j] <= 0.0) g[j] = 0.0;
    }
    grads[ii].weight = matmul_at_b(trace.layer_inputs[ii], grad);
    grads[ii].bias = column_sums(grad);
    if (ii > 0 || need_input_grad) grad = matmul_a_bt(grad, layers[ii].weight);
  }
  return grad;
}

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(1, l.bias.cols())});
  return out;
}

template <typename Layers, typename Fn>
void visit_layers(Layers& layers, Fn&& fn) {
  for (auto& l : layers) {
    fn(l.weight);
    fn(l.bias);
  }
}

}  // namespace

void PolicyParams::validate() const {
  if (predictors.empty()) throw ContractError("policy: K must be >= 1");
  validate_chain(encoder.layers, "encoder");
  for (std::size_t k = 0; k < predictors.size(); ++k) {
    validate_chain(predictors[k].layers, "predictor");
    if (predictors[k].input_dim() != encoder.output_dim()) {
      throw ContractError("predictor " + std::to_string(k + 1) + " input " +
                          std::to_string(predictors[k].input_dim()) + " does not match encoder output " +
                          std::to_string(encoder.output_dim()));
    }
    if (predictors[k].head != predictors.front().head || predictors[k].output_dim() != predictors.front().output_dim()) {
      throw ContractError("predictors disagree on head kind or output width");
    }
  }
}

PolicyParams init_policy(const PolicyShape& shape, std::uint64_t seed) {
  if (shape.levels < 1) throw ConfigError("policy: levels must be >= 1");
  Engine rng = make_engine(seed, {stream::kInit});
  PolicyParams p;
  p.encoder.layers.push_back(glorot_layer(shape.state_dim, shape.hidden, rng));
  p.encoder.layers.push_back(glorot_layer(shape.hidden, shape.hidden, rng));
  for (std::size_t k = 0; k < shape.levels; ++k) {
    PredictorParams pred;
    pred.head = shape.head;
    pred.layers.push_back(glorot_layer(shape.hidden, shape.predictor_hidden, rng));
    pred.layers.push_back(glorot_layer(shape.predictor_hidden, shape.output_dim(), rng));
    p.predictors.push_back(std::move(pred));
  }
  p.validate();
  return p;
}

PolicyGradients PolicyGradients::zeros_like(const PolicyParams& params) {
  PolicyGradients g;
  g.encoder.layers = sec::zeros_like(params.encoder.layers);
  for (const auto& pred : params.predictors) g.predictors.push_back({pred.head, sec::zeros_like(pred.layers)});
  g.touched.assign(params.predictors.size(), false);
  return g;
}

PolicyGradients& PolicyGradients::operator+=(const PolicyGradients& other) {
  if (other.predictors.size() != predictors.size()) throw ContractError("gradient sets disagree on K");
  for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
    encoder.layers[i].weight += other.encoder.layers[i].weight;
    encoder.layers[i].bias += other.encoder.layers[i].bias;
  }
  for (std::size_t k = 0; k < predictors.size(); ++k) {
    if (!other.touched[k]) continue;
    for (std::size_t i = 0; i < predictors[k].layers.size(); ++i) {
      predictors[k].layers[i].weight += other.predictors[k].layers[i].weight;
      predictors[k].layers[i].bias += other.predictors[k].layers[i].bias;
    }
    touched[k] = true;
  }
  return *this;
}

void PolicyGradients::scale(double s) {
  auto f = [s](Matrix& m) {
    for (double& x : m.values()) x *= s;
  };
  visit_layers(encoder.layers, f);
  for (auto& pred : predictors) visit_layers(pred.layers, f);
}

double PolicyGradients::norm() const {
  double s = 0.0;
  auto f = [&s](const Matrix& m) {
    for (double x : m.values()) s += x * x;
  };
  visit_layers(encoder.layers, f);
  for (const auto& pred : predictors) visit_layers(pred.layers, f);
  return std::sqrt(s);
}

bool PolicyGradients::all_finite() const {
  bool ok = true;
  auto f = [&ok](const Matrix& m) { ok = ok && m.all_finite(); };
  visit_layers(encoder.layers, f);
  for (const auto& pred : predictors) visit_layers(pred.layers, f);
  return ok;
}

Matrix encode(const EncoderParams& params, const Matrix& states) {
  return run_mlp(params.layers, states, true, nullptr);
}

Matrix predict_continuous(const PredictorParams& params, const Matrix& hidden) {
  if (params.head != HeadKind::kContinuous) throw ContractError("predict_continuous: predictor has a discrete head");
  return run_mlp(params.layers, hidden, false, nullptr);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto r = p.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double& x : r) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (double& x : r) x /= sum;
  }
  return p;
}

Matrix predict_discrete(const PredictorParams& params, const Matrix& hidden) {
  if (params.head != HeadKind::kDiscrete) throw ContractError("predict_discrete: predictor has a continuous head");
  return softmax_rows(run_mlp(params.layers, hidden, false, nullptr));
}

PolicyForward forward(const PolicyParams& params, Level level, const Matrix& states) {
  const PredictorParams& pred = params.predictor(level);
  if (states.cols() != params.state_dim()) {
    throw ContractError("forward: states " + states.shape_string() + " but policy expects " +
                        std::to_string(params.state_dim()) + " columns");
  }
  PolicyForward fwd;
  fwd.level = level;
  fwd.head = pred.head;
  fwd.hidden = run_mlp(params.encoder.layers, states, true, &fwd.encoder);
  Matrix out = run_mlp(pred.layers, fwd.hidden, false, &fwd.predictor);
  if (pred.head == HeadKind::kDiscrete) {
    fwd.output = softmax_rows(out);
    fwd.logits = std::move(out);
  } else {
    fwd.output = std::move(out);
  }
  return fwd;
}

PolicyGradients backward(const PolicyParams& params, const PolicyForward& fwd, const Matrix& grad_at_head) {
  if (!fwd.valid()) throw ContractError("backward: no cached forward pass");
  const PredictorParams& pred = params.predictor(fwd.level);
  require_same_shape(grad_at_head, fwd.output, "backward");

  PolicyGradients g = PolicyGradients::zeros_like(params);
  const std::size_t k = fwd.level.index();
  Matrix dh = backprop_mlp(pred.layers, fwd.predictor, false, grad_at_head, g.predictors[k].layers, true);
  backprop_mlp(params.encoder.layers, fwd.encoder, true, std::move(dh), g.encoder.layers, false);
  g.touched[k] = true;
  return g;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  require_same_shape(probs, grad_probs, "softmax_backward");
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    auto g = grad_probs.row(i);
    double inner = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) inner += p[j] * g[j];
    auto o = out.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) o[j] = p[j] * (g[j] - inner);
  }
  return out;
}

std::vector<Matrix*> parameter_tensors(PolicyParams& params) {
  std::vector<Matrix*> out;
  auto f = [&out](Matrix& m) { out.push_back(&m); };
  visit_layers(params.encoder.layers, f);
  for (auto& pred : params.predictors) visit_layers(pred.layers, f);
  return out;
}

std::vector<const Matrix*> parameter_tensors(const PolicyParams& params) {
  std::vector<const Matrix*> out;
  auto f = [&out](const Matrix& m) { out.push_back(&m); };
  visit_layers(params.encoder.layers, f);
  for (const auto& pred : params.predictors) visit_layers(pred.layers, f);
  return out;
}

std::size_t parameter_count(const PolicyParams& params) {
  std::size_t n = 0;
  for (const Matrix* m : parameter_tensors(params)) n += m->size();
  return n;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

json layers_to_json(const std::vector<DenseLayer>& layers) {
  json arr = json::array();
  for (const auto& l : layers) {
    arr.push_back({{"in", l.in_dim()},
                   {"out", l.out_dim()},
                   {"weight", std::vector<double>(l.weight.values().begin(), l.weight.values().end())},
                   {"bias", std::vector<double>(l.bias.values().begin(), l.bias.values().end())}});
  }
  return arr;
}

std::vector<DenseLayer> layers_from_json(const json& arr) {
  std::vector<DenseLayer> layers;
  for (const auto& j : arr) {
    const auto in = j.at("in").get<std::size_t>();
    const auto out = j.at("out").get<std::size_t>();
    layers.push_back({Matrix(in, out, j.at("weight").get<std::vector<double>>()),
                      Matrix(1, out, j.at("bias").get<std::vector<double>>())});
  }
  return layers;
}

}  // namespace

std::string policy_to_json(const PolicyParams& params) {
  params.validate();
  json doc;
  doc["format"] = "sec-policy";
  doc["version"] = 1;
  doc["head"] = to_string(params.head());
  doc["levels"] = params.levels();
  doc["state_dim"] = params.state_dim();
  doc["hidden_dim"] = params.hidden_dim();
  doc["output_dim"] = params.action_dim();
  doc["encoder"] = layers_to_json(params.encoder.layers);
  json preds = json::array();
  for (const auto& p : params.predictors) preds.push_back(layers_to_json(p.layers));
  doc["predictors"] = std::move(preds);
  return doc.dump(1) + "\n";
}

PolicyParams policy_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "sec-policy") throw DataError("checkpoint: unexpected format tag");
    PolicyParams p;
    const HeadKind head = head_kind_from_string(doc.at("head").get<std::string>());
    p.encoder.layers = layers_from_json(doc.at("encoder"));
    for (const auto& pj : doc.at("predictors")) p.predictors.push_back({head, layers_from_json(pj)});
    if (p.levels() != doc.at("levels").get<std::size_t>()) throw DataError("checkpoint: level count mismatch");
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_policy(const PolicyParams& params, const std::string& path) {
  write_text_file(path, policy_to_json(params));
}

PolicyParams load_policy(const std::string& path) { return policy_from_json(read_text_file(path)); }

}  // namespace sec
