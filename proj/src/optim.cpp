#include "wsc/optim.hpp"

#include <cmath>

#include "wsc/errors.hpp"

namespace wsc::optim {

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("optimizer: learning_rate must be > 0");
  if (sgd_momentum < 0.0 || sgd_momentum >= 1.0)
    throw ConfigError("optimizer: sgd_momentum must be in [0, 1)");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0)
    throw ConfigError("optimizer: adam_beta1 must be in [0, 1)");
  if (adam_beta2 < 0.0 || adam_beta2 >= 1.0)
    throw ConfigError("optimizer: adam_beta2 must be in [0, 1)");
  if (adam_eps <= 0.0) throw ConfigError("optimizer: adam_eps must be > 0");
}

MomentState MomentState::zeros(std::size_t n, double beta1, double beta2) {
  MomentState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.beta1 = beta1;
  s.beta2 = beta2;
  return s;
}

void MomentState::reset() {
  std::fill(m.begin(), m.end(), 0.0);
  std::fill(v.begin(), v.end(), 0.0);
  step_count = 0;
}

VelocityState VelocityState::zeros(std::size_t n) {
  VelocityState s;
  s.u.assign(n, 0.0);
  return s;
}

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": layout mismatch");
}

void ema_update(std::vector<double>& m, std::vector<double>& v, const std::vector<double>& g,
                double beta1, double beta2) {
  const double c1 = 1.0 - beta1, c2 = 1.0 - beta2;
  for (std::size_t i = 0; i < g.size(); ++i) {
    m[i] = beta1 * m[i] + c1 * g[i];
    v[i] = beta2 * v[i] + c2 * g[i] * g[i];
  }
}

}  // namespace

void sgd_step(nn::ParameterSet& params, const nn::ParameterSet& grads, const OptimizerConfig& cfg,
              VelocityState& velocity) {
  if (!params.same_layout(grads)) throw ShapeError("sgd_step: layout mismatch");
  check_same_size(velocity.u.size(), params.flat.size(), "sgd_step");
  const double lr = cfg.learning_rate, mu = cfg.sgd_momentum;
  if (mu == 0.0) {
    for (std::size_t i = 0; i < params.flat.size(); ++i) params.flat[i] -= lr * grads.flat[i];
    return;
  }
  for (std::size_t i = 0; i < params.flat.size(); ++i) {
    velocity.u[i] = mu * velocity.u[i] + grads.flat[i];
    params.flat[i] -= lr * velocity.u[i];
  }
}

void adam_step(nn::ParameterSet& params, const nn::ParameterSet& grads, const OptimizerConfig& cfg,
               MomentState& moments) {
  if (!params.same_layout(grads)) throw ShapeError("adam_step: layout mismatch");
  check_same_size(moments.m.size(), params.flat.size(), "adam_step");
  moments.beta1 = cfg.adam_beta1;
  moments.beta2 = cfg.adam_beta2;
  ema_update(moments.m, moments.v, grads.flat, cfg.adam_beta1, cfg.adam_beta2);
  moments.step_count += 1;
  const double corr1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(moments.step_count));
  const double corr2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(moments.step_count));
  const double lr = cfg.learning_rate;
  for (std::size_t i = 0; i < params.flat.size(); ++i) {
    const double m_hat = moments.m[i] / corr1;
    const double v_hat = moments.v[i] / corr2;
    params.flat[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

void update_shadow_moments(MomentState& moments, const nn::ParameterSet& grads, double beta1,
                           double beta2) {
  check_same_size(moments.m.size(), grads.flat.size(), "update_shadow_moments");
  moments.beta1 = beta1;
  moments.beta2 = beta2;
  ema_update(moments.m, moments.v, grads.flat, beta1, beta2);
  moments.step_count += 1;
}

CorrectedMoments bias_corrected(const MomentState& moments) {
  if (moments.step_count == 0)
    throw DomainError("bias_corrected: moment state has no recorded steps");
  const double corr1 = 1.0 - std::pow(moments.beta1, static_cast<double>(moments.step_count));
  const double corr2 = 1.0 - std::pow(moments.beta2, static_cast<double>(moments.step_count));
  CorrectedMoments out;
  out.m_hat.resize(moments.m.size());
  out.v_hat.resize(moments.v.size());
  for (std::size_t i = 0; i < moments.m.size(); ++i) {
    out.m_hat[i] = moments.m[i] / corr1;
    out.v_hat[i] = moments.v[i] / corr2;
  }
  return out;
}

}  // namespace wsc::optim
