#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wsc::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);
  static Tensor zeros(std::vector<std::size_t> s);

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }
};

enum class Activation { kRelu };
enum class InitScheme { kKaimingUniform };

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::kRelu;
  InitScheme init_scheme = InitScheme::kKaimingUniform;
  uint64_t init_seed = 0;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  // out/in widths of layer l (0-based; the last layer is the class head)
  std::size_t layer_out(std::size_t l) const;
  std::size_t layer_in(std::size_t l) const;
  void validate() const;  // throws ConfigError
};

struct Segment {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;

  std::size_t size() const;
};

// Flat view of all trainable parameters with named layer segments.
struct ParameterSet {
  std::vector<Segment> segments;
  std::vector<double> flat;

  bool same_layout(const ParameterSet& other) const;
  const Segment* find(std::string_view name) const;
  std::size_t size() const { return flat.size(); }
};

struct Batch {
  Tensor inputs;  // [B, input_dim]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> task_ids;

  std::size_t size() const { return labels.size(); }
};

// Class-IL visibility mask over the full head; empty means all classes visible.
using ClassMask = std::vector<uint8_t>;

// Zero-filled parameters with the layout determined by the spec.
ParameterSet make_param_layout(const NetworkSpec& spec);

double kaiming_uniform_bound(std::size_t fan_in);

// Deterministic function of spec.init_seed; weights ~ U(-b, b) with
// b = sqrt(6/fan_in), biases zero.
ParameterSet init_params(const NetworkSpec& spec);

Tensor forward(const ParameterSet& params, const NetworkSpec& spec, const Tensor& inputs);

// Softmax over the visible classes of one logit row; masked entries get
// probability 0.
std::vector<double> softmax_row(std::span<const double> logits, const ClassMask& mask);

struct LossGrad {
  double loss = 0.0;
  ParameterSet grads;
};

// Softmax cross-entropy (mean over batch) with logits of masked-out classes
// excluded from the softmax. Gradient layout matches params exactly.
LossGrad loss_and_grad(const ParameterSet& params, const NetworkSpec& spec, const Batch& batch,
                       const ClassMask& mask = {});

// Argmax over visible classes, ties broken toward the lowest class index.
std::vector<std::size_t> predict(const ParameterSet& params, const NetworkSpec& spec,
                                 const Tensor& inputs, const ClassMask& mask = {});

// Per-sample gradient of log p(y_n | x_n) delivered through `sink`, one call
// per sample in batch order. Backs the empirical Fisher diagonal.
void per_sample_loglik_grads(const ParameterSet& params, const NetworkSpec& spec,
                             const Batch& batch, const ClassMask& mask,
                             const std::function<void(std::span<const double>)>& sink);

}  // namespace wsc::nn
