#pragma once

#include <cstdint>
#include <vector>

#include "wsc/nn.hpp"

namespace wsc::optim {

enum class OptKind { kSgd, kAdam };

struct OptimizerConfig {
  OptKind kind = OptKind::kSgd;
  double learning_rate = 0.1;
  double sgd_momentum = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;  // throws ConfigError
};

// First/second exponential gradient moments plus the step counter needed for
// bias correction. Also used standalone as the shadow tracker feeding the
// moment-based importance score, independent of which optimizer runs updates.
struct MomentState {
  std::vector<double> m;
  std::vector<double> v;
  uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;

  static MomentState zeros(std::size_t n, double beta1 = 0.9, double beta2 = 0.999);
  void reset();
};

struct VelocityState {
  std::vector<double> u;

  static VelocityState zeros(std::size_t n);
};

// params <- params - lr * (momentum-accumulated grads)
void sgd_step(nn::ParameterSet& params, const nn::ParameterSet& grads, const OptimizerConfig& cfg,
              VelocityState& velocity);

// Standard Adam update with bias correction; advances moments by one step.
void adam_step(nn::ParameterSet& params, const nn::ParameterSet& grads, const OptimizerConfig& cfg,
               MomentState& moments);

// m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ; step_count += 1
void update_shadow_moments(MomentState& moments, const nn::ParameterSet& grads, double beta1,
                           double beta2);

struct CorrectedMoments {
  std::vector<double> m_hat;
  std::vector<double> v_hat;
};

// m_hat = m / (1 - b1^step), v_hat = v / (1 - b2^step); does not mutate state.
CorrectedMoments bias_corrected(const MomentState& moments);

}  // namespace wsc::optim
