#include "wsc/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wsc/errors.hpp"

namespace wsc::consol {

void ResetConfig::validate() const {
  if (retain_fraction < 0.0 || retain_fraction > 1.0)
    throw ConfigError("reset.retain_fraction must be in [0, 1]");
  if (blend_alpha < 0.0 || blend_alpha > 1.0)
    throw ConfigError("reset.blend_alpha must be in [0, 1]");
  if (cbp_reset_fraction < 0.0 || cbp_reset_fraction > 1.0)
    throw ConfigError("reset.cbp_reset_fraction must be in [0, 1]");
  if (hutchinson_probes < 1) throw ConfigError("reset.hutchinson_probes must be >= 1");
  if (score_probe_samples < 1) throw ConfigError("reset.score_probe_samples must be >= 1");
}

namespace {

optim::CorrectedMoments moments_view(const optim::MomentState& ms, bool corrected) {
  if (ms.step_count == 0) throw DomainError("importance: moment state has no recorded steps");
  if (corrected) return optim::bias_corrected(ms);
  return {ms.m, ms.v};
}

}  // namespace

ImportanceVector score_moment(const optim::MomentState& moments, bool bias_corrected) {
  auto [m_hat, v_hat] = moments_view(moments, bias_corrected);
  ImportanceVector out;
  out.metric_used = ImportanceMetric::kMoment;
  out.scores.resize(m_hat.size());
  for (std::size_t i = 0; i < m_hat.size(); ++i) out.scores[i] = std::abs(m_hat[i]) * v_hat[i];
  return out;
}

ImportanceVector score_first_moment(const optim::MomentState& moments, bool bias_corrected) {
  auto [m_hat, v_hat] = moments_view(moments, bias_corrected);
  ImportanceVector out;
  out.metric_used = ImportanceMetric::kFirstMomentOnly;
  out.scores.resize(m_hat.size());
  for (std::size_t i = 0; i < m_hat.size(); ++i) out.scores[i] = std::abs(m_hat[i]);
  return out;
}

ImportanceVector score_second_moment(const optim::MomentState& moments, bool bias_corrected) {
  auto [m_hat, v_hat] = moments_view(moments, bias_corrected);
  ImportanceVector out;
  out.metric_used = ImportanceMetric::kSecondMomentOnly;
  out.scores = std::move(v_hat);
  return out;
}

ImportanceVector score_param_drift(const nn::ParameterSet& theta,
                                   const nn::ParameterSet& theta_prev) {
  if (!theta.same_layout(theta_prev)) throw ShapeError("score_param_drift: layout mismatch");
  ImportanceVector out;
  out.metric_used = ImportanceMetric::kParamDrift;
  out.scores.resize(theta.flat.size());
  for (std::size_t i = 0; i < theta.flat.size(); ++i)
    out.scores[i] = std::abs(theta.flat[i] - theta_prev.flat[i]);
  return out;
}

ImportanceVector score_fisher(const nn::ParameterSet& params, const nn::NetworkSpec& spec,
                              std::span<const nn::Batch> sample_batches,
                              const nn::ClassMask& mask) {
  std::size_t total = 0;
  for (const nn::Batch& b : sample_batches) total += b.size();
  if (total == 0) throw DomainError("score_fisher: no samples");

  ImportanceVector out;
  out.metric_used = ImportanceMetric::kFisher;
  out.scores.assign(params.flat.size(), 0.0);
  for (const nn::Batch& b : sample_batches) {
    nn::per_sample_loglik_grads(params, spec, b, mask, [&](std::span<const double> g) {
      for (std::size_t i = 0; i < g.size(); ++i) out.scores[i] += g[i] * g[i];
    });
  }
  const double inv_n = 1.0 / static_cast<double>(total);
  for (double& s : out.scores) s *= inv_n;
  return out;
}

std::vector<double> hutchinson_diagonal(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    const std::vector<double>& theta, std::size_t probes, rng::Rng& gen, double fd_eps) {
  if (probes < 1) throw DomainError("hutchinson_diagonal: needs probes >= 1");
  std::vector<double> acc(theta.size(), 0.0);
  std::vector<double> probe(theta.size());
  std::vector<double> shifted(theta.size());
  for (std::size_t k = 0; k < probes; ++k) {
    for (double& v : probe) v = gen.rademacher();
    for (std::size_t i = 0; i < theta.size(); ++i) shifted[i] = theta[i] + fd_eps * probe[i];
    std::vector<double> g_plus = grad_fn(shifted);
    for (std::size_t i = 0; i < theta.size(); ++i) shifted[i] = theta[i] - fd_eps * probe[i];
    std::vector<double> g_minus = grad_fn(shifted);
    const double inv = 1.0 / (2.0 * fd_eps);
    // v (.) Hv with Hv ~ (g(theta + eps v) - g(theta - eps v)) / (2 eps)
    for (std::size_t i = 0; i < theta.size(); ++i)
      acc[i] += probe[i] * (g_plus[i] - g_minus[i]) * inv;
  }
  for (double& v : acc) v /= static_cast<double>(probes);
  return acc;
}

ImportanceVector score_hessian_hutchinson(const nn::ParameterSet& params,
                                          const nn::NetworkSpec& spec, const nn::Batch& batch,
                                          std::size_t probes, uint64_t probe_seed,
                                          const nn::ClassMask& mask) {
  double max_abs = 0.0;
  for (double v : params.flat) max_abs = std::max(max_abs, std::abs(v));
  const double eps = 1e-4 * (1.0 + max_abs);

  nn::ParameterSet work = params;
  auto grad_fn = [&](const std::vector<double>& theta) {
    work.flat = theta;
    return nn::loss_and_grad(work, spec, batch, mask).grads.flat;
  };
  rng::Rng gen(probe_seed);
  std::vector<double> diag = hutchinson_diagonal(grad_fn, params.flat, probes, gen, eps);

  ImportanceVector out;
  out.metric_used = ImportanceMetric::kHessianHutchinson;
  out.scores.resize(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) out.scores[i] = std::abs(diag[i]);
  return out;
}

std::vector<uint8_t> head_eligibility_mask(const nn::NetworkSpec& spec,
                                           const nn::ParameterSet& layout,
                                           const nn::ClassMask& class_seen_before) {
  std::vector<uint8_t> eligible(layout.flat.size(), 1);
  if (class_seen_before.empty()) return eligible;
  const std::size_t head = spec.num_layers() - 1;
  const nn::Segment* w = layout.find("linear" + std::to_string(head) + ".weight");
  const nn::Segment* b = layout.find("linear" + std::to_string(head) + ".bias");
  if (!w || !b) throw ShapeError("head_eligibility_mask: head segments missing");
  const std::size_t in = spec.layer_in(head);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    if (class_seen_before[c]) continue;
    for (std::size_t i = 0; i < in; ++i) eligible[w->offset + c * in + i] = 0;
    eligible[b->offset + c] = 0;
  }
  return eligible;
}

namespace {

// lowest-score selection with ties toward the lower flat index
void select_bottom(const std::vector<double>& scores, std::vector<std::size_t>& pool,
                   double retain_fraction, std::vector<std::size_t>& out) {
  const std::size_t n_reset = static_cast<std::size_t>(
      std::floor((1.0 - retain_fraction) * static_cast<double>(pool.size())));
  if (n_reset == 0) return;
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_reset - 1),
                   pool.end(), [&](std::size_t a, std::size_t b) {
                     return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
                   });
  out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_reset));
}

}  // namespace

std::vector<std::size_t> find_dormant_params(const ImportanceVector& scores,
                                             const ResetConfig& cfg,
                                             const nn::ParameterSet& layout,
                                             const std::vector<uint8_t>& eligible) {
  cfg.validate();
  if (scores.scores.size() != layout.flat.size())
    throw ShapeError("find_dormant_params: score length does not match layout");
  if (!eligible.empty() && eligible.size() != layout.flat.size())
    throw ShapeError("find_dormant_params: eligibility mask length mismatch");

  std::vector<std::size_t> out;
  auto is_eligible = [&](std::size_t i) { return eligible.empty() || eligible[i]; };

  if (cfg.ranking_scope == RankingScope::kGlobal) {
    std::vector<std::size_t> pool;
    pool.reserve(layout.flat.size());
    for (std::size_t i = 0; i < layout.flat.size(); ++i)
      if (is_eligible(i)) pool.push_back(i);
    select_bottom(scores.scores, pool, cfg.retain_fraction, out);
  } else {
    for (const nn::Segment& seg : layout.segments) {
      std::vector<std::size_t> pool;
      pool.reserve(seg.size());
      for (std::size_t i = seg.offset; i < seg.offset + seg.size(); ++i)
        if (is_eligible(i)) pool.push_back(i);
      select_bottom(scores.scores, pool, cfg.retain_fraction, out);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void soft_reset(nn::ParameterSet& theta, const nn::ParameterSet& theta_prev,
                std::span<const std::size_t> reset_indices, double blend_alpha) {
  if (!theta.same_layout(theta_prev)) throw ShapeError("soft_reset: layout mismatch");
  for (std::size_t l : reset_indices)
    theta.flat[l] = blend_alpha * theta.flat[l] + (1.0 - blend_alpha) * theta_prev.flat[l];
}

namespace {

// segment index covering a flat coordinate
std::size_t segment_of(const nn::ParameterSet& layout, std::size_t flat_idx) {
  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    const nn::Segment& seg = layout.segments[s];
    if (flat_idx >= seg.offset && flat_idx < seg.offset + seg.size()) return s;
  }
  throw ShapeError("coordinate outside all segments");
}

void reset_continual_backprop(nn::ParameterSet& theta, const nn::NetworkSpec& spec,
                              const ResetConfig& cfg, const nn::Batch& probe, rng::Rng& gen) {
  struct Unit {
    std::size_t layer;
    std::size_t unit;
    double utility;
  };
  std::vector<Unit> units;

  // forward over the probe batch, collecting mean |activation| per hidden unit
  nn::Tensor cur = probe.inputs;
  const std::size_t batch = cur.rows();
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    const std::size_t in = spec.layer_in(l), out = spec.layer_out(l);
    const nn::Segment& w = *theta.find("linear" + std::to_string(l) + ".weight");
    const nn::Segment& b = *theta.find("linear" + std::to_string(l) + ".bias");
    nn::Tensor next = nn::Tensor::zeros({batch, out});
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        double acc = theta.flat[b.offset + o];
        const double* wo = theta.flat.data() + w.offset + o * in;
        const double* xr = cur.row(r);
        for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
        next.row(r)[o] = std::max(acc, 0.0);
      }
    }
    const nn::Segment& w_next = *theta.find("linear" + std::to_string(l + 1) + ".weight");
    const std::size_t out_next = spec.layer_out(l + 1);
    for (std::size_t o = 0; o < out; ++o) {
      double mean_act = 0.0;
      for (std::size_t r = 0; r < batch; ++r) mean_act += std::abs(next.row(r)[o]);
      mean_act /= static_cast<double>(batch);
      double outgoing_l1 = 0.0;
      for (std::size_t p = 0; p < out_next; ++p)
        outgoing_l1 += std::abs(theta.flat[w_next.offset + p * out + o]);
      units.push_back({l, o, mean_act * outgoing_l1});
    }
    cur = std::move(next);
  }

  const std::size_t n_reset = static_cast<std::size_t>(
      std::floor(cfg.cbp_reset_fraction * static_cast<double>(units.size())));
  if (n_reset == 0) return;
  std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
    if (a.utility != b.utility) return a.utility < b.utility;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.unit < b.unit;
  });

  for (std::size_t k = 0; k < n_reset; ++k) {
    const Unit& u = units[k];
    const std::size_t in = spec.layer_in(u.layer);
    const nn::Segment& w = *theta.find("linear" + std::to_string(u.layer) + ".weight");
    const nn::Segment& b = *theta.find("linear" + std::to_string(u.layer) + ".bias");
    const double bound = nn::kaiming_uniform_bound(in);
    for (std::size_t i = 0; i < in; ++i)
      theta.flat[w.offset + u.unit * in + i] = gen.uniform(-bound, bound);
    theta.flat[b.offset + u.unit] = 0.0;
    const nn::Segment& w_next = *theta.find("linear" + std::to_string(u.layer + 1) + ".weight");
    const std::size_t out_next = spec.layer_out(u.layer + 1);
    const std::size_t width = spec.layer_out(u.layer);
    for (std::size_t p = 0; p < out_next; ++p) theta.flat[w_next.offset + p * width + u.unit] = 0.0;
  }
}

}  // namespace

void alt_reset(nn::ParameterSet& theta, const nn::ParameterSet& theta_prev,
               std::span<const std::size_t> reset_indices, const nn::NetworkSpec& spec,
               const ResetConfig& cfg, const nn::Batch* probe, rng::Rng& gen) {
  if (!theta.same_layout(theta_prev)) throw ShapeError("alt_reset: layout mismatch");
  switch (cfg.strategy) {
    case ResetStrategy::kSoftBlend:
      soft_reset(theta, theta_prev, reset_indices, cfg.blend_alpha);
      return;
    case ResetStrategy::kRevert:
      for (std::size_t l : reset_indices) theta.flat[l] = theta_prev.flat[l];
      return;
    case ResetStrategy::kRandomReinit: {
      for (std::size_t l : reset_indices) {
        const std::size_t s = segment_of(theta, l);
        if (theta.segments[s].shape.size() == 1) {
          theta.flat[l] = 0.0;  // bias init
        } else {
          const std::size_t layer = s / 2;
          theta.flat[l] = gen.uniform(-nn::kaiming_uniform_bound(spec.layer_in(layer)),
                                      nn::kaiming_uniform_bound(spec.layer_in(layer)));
        }
      }
      return;
    }
    case ResetStrategy::kShrinkPerturb: {
      // applied to every coordinate; the dormant set is ignored by design of
      // the cited method
      for (std::size_t s = 0; s < theta.segments.size(); ++s) {
        const nn::Segment& seg = theta.segments[s];
        double sigma = cfg.sp_noise_scale;
        if (sigma < 0.0) {
          const bool is_bias = seg.shape.size() == 1;
          const double init_std =
              is_bias ? 0.0 : nn::kaiming_uniform_bound(spec.layer_in(s / 2)) / std::sqrt(3.0);
          sigma = 0.01 * init_std;
        }
        for (std::size_t i = seg.offset; i < seg.offset + seg.size(); ++i) {
          const double noise = sigma > 0.0 ? sigma * gen.normal() : 0.0;
          theta.flat[i] = cfg.sp_shrink * theta.flat[i] + noise;
        }
      }
      return;
    }
    case ResetStrategy::kContinualBackprop: {
      if (!probe) throw ConfigError("alt_reset: continual_backprop needs a probe batch");
      if (spec.hidden_dims.empty()) return;  // no hidden units to recycle
      reset_continual_backprop(theta, spec, cfg, *probe, gen);
      return;
    }
  }
  throw ConfigError("alt_reset: unknown reset strategy");
}

}  // namespace wsc::consol
