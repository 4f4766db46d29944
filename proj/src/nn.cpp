#include "wsc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "wsc/errors.hpp"
#include "wsc/rng.hpp"

namespace wsc::nn {

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  std::size_t n = 1;
  for (std::size_t dim : shape) n *= dim;
  if (n != data.size()) throw ShapeError("Tensor: shape product != data length");
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
  std::size_t n = 1;
  for (std::size_t dim : s) n *= dim;
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

std::size_t NetworkSpec::layer_out(std::size_t l) const {
  return l < hidden_dims.size() ? hidden_dims[l] : num_classes;
}

std::size_t NetworkSpec::layer_in(std::size_t l) const {
  return l == 0 ? input_dim : hidden_dims[l - 1];
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw ConfigError("NetworkSpec: input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("NetworkSpec: num_classes must be >= 2");
  for (std::size_t h : hidden_dims)
    if (h < 1) throw ConfigError("NetworkSpec: hidden layer width must be >= 1");
}

std::size_t Segment::size() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (segments.size() != other.segments.size()) return false;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].name != other.segments[i].name ||
        segments[i].shape != other.segments[i].shape ||
        segments[i].offset != other.segments[i].offset)
      return false;
  }
  return flat.size() == other.flat.size();
}

const Segment* ParameterSet::find(std::string_view name) const {
  for (const Segment& s : segments)
    if (s.name == name) return &s;
  return nullptr;
}

ParameterSet make_param_layout(const NetworkSpec& spec) {
  spec.validate();
  ParameterSet p;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t out = spec.layer_out(l), in = spec.layer_in(l);
    std::string base = "linear" + std::to_string(l);
    p.segments.push_back({base + ".weight", {out, in}, offset});
    offset += out * in;
    p.segments.push_back({base + ".bias", {out}, offset});
    offset += out;
  }
  p.flat.assign(offset, 0.0);
  return p;
}

double kaiming_uniform_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

ParameterSet init_params(const NetworkSpec& spec) {
  ParameterSet p = make_param_layout(spec);
  rng::Rng gen(rng::derive_stream(spec.init_seed, 0, "init-params"));
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Segment& w = *p.find("linear" + std::to_string(l) + ".weight");
    const double bound = kaiming_uniform_bound(spec.layer_in(l));
    for (std::size_t i = 0; i < w.size(); ++i)
      p.flat[w.offset + i] = gen.uniform(-bound, bound);
    // biases stay zero
  }
  return p;
}

namespace {

void check_params(const ParameterSet& params, const NetworkSpec& spec) {
  if (params.segments.size() != 2 * spec.num_layers())
    throw ShapeError("parameter layout does not match spec");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t out = spec.layer_out(l), in = spec.layer_in(l);
    const Segment& w = params.segments[2 * l];
    const Segment& b = params.segments[2 * l + 1];
    if (w.shape != std::vector<std::size_t>{out, in} || w.offset != offset ||
        b.shape != std::vector<std::size_t>{out} || b.offset != offset + out * in)
      throw ShapeError("parameter layout does not match spec");
    offset += out * in + out;
  }
  if (params.flat.size() != offset) throw ShapeError("parameter layout does not match spec");
}

void check_inputs(const Tensor& inputs, const NetworkSpec& spec) {
  if (inputs.shape.size() != 2 || inputs.shape[1] != spec.input_dim)
    throw ShapeError("input tensor must be [B, input_dim]");
}

// z = x * W^T + b for one layer; x is [B, in], W is [out, in].
void linear_forward(const double* x, std::size_t batch, std::size_t in, const double* w,
                    const double* b, std::size_t out, double* z) {
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = x + r * in;
    double* zr = z + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      zr[o] = acc;
    }
  }
}

struct ForwardCache {
  // acts[0] = inputs; acts[l+1] = output of layer l (post-ReLU except the head)
  std::vector<Tensor> acts;
};

Tensor forward_cached(const ParameterSet& params, const NetworkSpec& spec, const Tensor& inputs,
                      ForwardCache* cache) {
  const std::size_t batch = inputs.rows();
  Tensor cur = inputs;
  if (cache) cache->acts.push_back(cur);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    const Segment& w = *params.find("linear" + std::to_string(l) + ".weight");
    const Segment& b = *params.find("linear" + std::to_string(l) + ".bias");
    Tensor next = Tensor::zeros({batch, out});
    linear_forward(cur.data.data(), batch, in, params.flat.data() + w.offset,
                   params.flat.data() + b.offset, out, next.data.data());
    if (l + 1 < spec.num_layers())
      for (double& v : next.data) v = v > 0.0 ? v : 0.0;
    cur = std::move(next);
    if (cache) cache->acts.push_back(cur);
  }
  for (double v : cur.data)
    if (!std::isfinite(v)) throw DomainError("forward produced non-finite logits");
  return cur;
}

// Backprop dZ of the head through the cached activations; accumulates into
// grads (which must be zero-filled or hold prior accumulation).
void backward_from_head(const ParameterSet& params, const NetworkSpec& spec,
                        const ForwardCache& cache, Tensor dz, ParameterSet& grads) {
  const std::size_t batch = dz.rows();
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    const Segment& wseg = *params.find("linear" + std::to_string(l) + ".weight");
    const Segment& bseg = *params.find("linear" + std::to_string(l) + ".bias");
    const double* w = params.flat.data() + wseg.offset;
    double* dw = grads.flat.data() + wseg.offset;
    double* db = grads.flat.data() + bseg.offset;
    const Tensor& h = cache.acts[l];  // layer input

    for (std::size_t r = 0; r < batch; ++r) {
      const double* dzr = dz.row(r);
      const double* hr = h.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dzr[o];
        if (g == 0.0) continue;
        db[o] += g;
        double* dwo = dw + o * in;
        for (std::size_t i = 0; i < in; ++i) dwo[i] += g * hr[i];
      }
    }
    if (l == 0) break;

    Tensor dh = Tensor::zeros({batch, in});
    for (std::size_t r = 0; r < batch; ++r) {
      const double* dzr = dz.row(r);
      double* dhr = dh.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dzr[o];
        if (g == 0.0) continue;
        const double* wo = w + o * in;
        for (std::size_t i = 0; i < in; ++i) dhr[i] += g * wo[i];
      }
      // ReLU gate: h[r][i] > 0 iff the pre-activation was positive
      const double* hr = h.row(r);
      for (std::size_t i = 0; i < in; ++i)
        if (hr[i] <= 0.0) dhr[i] = 0.0;
    }
    dz = std::move(dh);
  }
}

void check_mask(const ClassMask& mask, std::size_t num_classes) {
  if (!mask.empty() && mask.size() != num_classes)
    throw ShapeError("class mask length must equal num_classes");
}

}  // namespace

Tensor forward(const ParameterSet& params, const NetworkSpec& spec, const Tensor& inputs) {
  check_params(params, spec);
  check_inputs(inputs, spec);
  return forward_cached(params, spec, inputs, nullptr);
}

std::vector<double> softmax_row(std::span<const double> logits, const ClassMask& mask) {
  check_mask(mask, logits.size());
  double maxv = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < logits.size(); ++c)
    if ((mask.empty() || mask[c]) && logits[c] > maxv) maxv = logits[c];
  if (!std::isfinite(maxv)) throw DomainError("softmax_row: no visible class");
  std::vector<double> p(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (!mask.empty() && !mask[c]) continue;
    p[c] = std::exp(logits[c] - maxv);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

LossGrad loss_and_grad(const ParameterSet& params, const NetworkSpec& spec, const Batch& batch,
                       const ClassMask& mask) {
  check_params(params, spec);
  check_mask(mask, spec.num_classes);
  if (batch.size() == 0) throw DomainError("loss_and_grad: empty batch");
  check_inputs(batch.inputs, spec);
  if (batch.inputs.rows() != batch.size())
    throw ShapeError("batch inputs/labels row count mismatch");

  ForwardCache cache;
  Tensor logits = forward_cached(params, spec, batch.inputs, &cache);
  const std::size_t batch_n = batch.size(), classes = spec.num_classes;

  double loss = 0.0;
  Tensor dz = Tensor::zeros({batch_n, classes});
  const double inv_b = 1.0 / static_cast<double>(batch_n);
  for (std::size_t r = 0; r < batch_n; ++r) {
    const std::size_t y = batch.labels[r];
    if (y >= classes) throw DomainError("loss_and_grad: label out of range");
    if (!mask.empty() && !mask[y]) throw DomainError("loss_and_grad: label is masked out");
    std::vector<double> p = softmax_row({logits.row(r), classes}, mask);
    loss -= std::log(std::max(p[y], 1e-300));
    double* dzr = dz.row(r);
    for (std::size_t c = 0; c < classes; ++c) {
      if (!mask.empty() && !mask[c]) continue;
      dzr[c] = (p[c] - (c == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  loss *= inv_b;
  if (!std::isfinite(loss)) throw DomainError("loss_and_grad: non-finite loss");

  LossGrad out;
  out.loss = loss;
  out.grads = make_param_layout(spec);
  backward_from_head(params, spec, cache, std::move(dz), out.grads);
  return out;
}

std::vector<std::size_t> predict(const ParameterSet& params, const NetworkSpec& spec,
                                 const Tensor& inputs, const ClassMask& mask) {
  check_mask(mask, spec.num_classes);
  Tensor logits = forward(params, spec, inputs);
  std::vector<std::size_t> out(inputs.rows());
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const double* row = logits.row(r);
    std::size_t best = spec.num_classes;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      if (!mask.empty() && !mask[c]) continue;
      if (row[c] > best_v) {
        best_v = row[c];
        best = c;
      }
    }
    if (best == spec.num_classes) throw DomainError("predict: no visible class");
    out[r] = best;
  }
  return out;
}

void per_sample_loglik_grads(const ParameterSet& params, const NetworkSpec& spec,
                             const Batch& batch, const ClassMask& mask,
                             const std::function<void(std::span<const double>)>& sink) {
  check_params(params, spec);
  check_mask(mask, spec.num_classes);
  if (batch.size() == 0) throw DomainError("per_sample_loglik_grads: empty batch");
  const std::size_t classes = spec.num_classes;
  ParameterSet grad = make_param_layout(spec);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    Tensor x({1, spec.input_dim},
             std::vector<double>(batch.inputs.row(r), batch.inputs.row(r) + spec.input_dim));
    ForwardCache cache;
    Tensor logits = forward_cached(params, spec, x, &cache);
    const std::size_t y = batch.labels[r];
    if (!mask.empty() && !mask[y]) throw DomainError("per_sample_loglik_grads: label masked out");
    std::vector<double> p = softmax_row({logits.row(0), classes}, mask);
    Tensor dz = Tensor::zeros({1, classes});
    // d log p(y|x) / dz_c = 1[c==y] - p_c on visible classes
    for (std::size_t c = 0; c < classes; ++c) {
      if (!mask.empty() && !mask[c]) continue;
      dz.data[c] = (c == y ? 1.0 : 0.0) - p[c];
    }
    std::fill(grad.flat.begin(), grad.flat.end(), 0.0);
    backward_from_head(params, spec, cache, std::move(dz), grad);
    sink(std::span<const double>(grad.flat));
  }
}

}  // namespace wsc::nn
