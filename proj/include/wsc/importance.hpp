#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wsc/nn.hpp"
#include "wsc/optim.hpp"
#include "wsc/rng.hpp"

namespace wsc::consol {

enum class ImportanceMetric {
  kMoment,
  kParamDrift,
  kFisher,
  kHessianHutchinson,
  kFirstMomentOnly,
  kSecondMomentOnly,
};

enum class ResetStrategy {
  kSoftBlend,
  kRandomReinit,
  kRevert,
  kShrinkPerturb,
  kContinualBackprop,
};

enum class RankingScope { kGlobal, kPerLayer };

struct ResetConfig {
  ImportanceMetric metric = ImportanceMetric::kMoment;
  double retain_fraction = 0.20;  // q: fraction of eligible coordinates kept
  double blend_alpha = 0.5;       // soft-reset mix toward the current theta
  ResetStrategy strategy = ResetStrategy::kSoftBlend;
  RankingScope ranking_scope = RankingScope::kGlobal;
  bool exclude_unseen_head = true;
  bool bias_corrected_moments = true;
  double sp_shrink = 0.5;        // shrink&perturb lambda
  double sp_noise_scale = -1.0;  // sigma; negative = 0.01 * per-segment init std
  double cbp_reset_fraction = 0.05;
  std::size_t hutchinson_probes = 8;
  std::size_t score_probe_samples = 128;  // batch size for fisher/hessian probes

  void validate() const;  // throws ConfigError
};

struct ImportanceVector {
  std::vector<double> scores;
  ImportanceMetric metric_used = ImportanceMetric::kMoment;
};

// S_l = |m_hat_l| * v_hat_l (raw moments when bias_corrected is false).
ImportanceVector score_moment(const optim::MomentState& moments, bool bias_corrected = true);
ImportanceVector score_first_moment(const optim::MomentState& moments, bool bias_corrected = true);
ImportanceVector score_second_moment(const optim::MomentState& moments, bool bias_corrected = true);

// Delta_l = |theta[l] - theta_prev[l]|
ImportanceVector score_param_drift(const nn::ParameterSet& theta,
                                   const nn::ParameterSet& theta_prev);

// Empirical Fisher diagonal: mean of squared per-sample log-likelihood grads.
ImportanceVector score_fisher(const nn::ParameterSet& params, const nn::NetworkSpec& spec,
                              std::span<const nn::Batch> sample_batches,
                              const nn::ClassMask& mask = {});

// Generic Hutchinson diagonal estimate: mean over Rademacher probes of
// v (.) grad_fn-difference quotient, usable with any gradient oracle.
std::vector<double> hutchinson_diagonal(
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
    const std::vector<double>& theta, std::size_t probes, rng::Rng& gen, double fd_eps);

// |Hessian diagonal| estimated with Hutchinson probes; Hessian-vector products
// via central differences of the analytic gradient with
// eps = 1e-4 * (1 + max|theta|).
ImportanceVector score_hessian_hutchinson(const nn::ParameterSet& params,
                                          const nn::NetworkSpec& spec, const nn::Batch& batch,
                                          std::size_t probes, uint64_t probe_seed,
                                          const nn::ClassMask& mask = {});

// 1 = eligible for ranking/reset. Head rows (weight row + bias entry) of
// classes with class_seen_before[c] == 0 are excluded.
std::vector<uint8_t> head_eligibility_mask(const nn::NetworkSpec& spec,
                                           const nn::ParameterSet& layout,
                                           const nn::ClassMask& class_seen_before);

// The floor((1-q) * eligible) eligible coordinates with the lowest scores;
// per-layer scope applies the quota within each segment. Ties break toward
// the lower flat index. Returned indices are sorted ascending.
std::vector<std::size_t> find_dormant_params(const ImportanceVector& scores,
                                             const ResetConfig& cfg,
                                             const nn::ParameterSet& layout,
                                             const std::vector<uint8_t>& eligible = {});

// theta[l] <- alpha * theta[l] + (1 - alpha) * theta_prev[l] on the reset set.
void soft_reset(nn::ParameterSet& theta, const nn::ParameterSet& theta_prev,
                std::span<const std::size_t> reset_indices, double blend_alpha);

// Alternative reset strategies (random re-init, revert, shrink&perturb,
// continual-backprop unit reset). The probe batch is required only for
// continual_backprop.
void alt_reset(nn::ParameterSet& theta, const nn::ParameterSet& theta_prev,
               std::span<const std::size_t> reset_indices, const nn::NetworkSpec& spec,
               const ResetConfig& cfg, const nn::Batch* probe, rng::Rng& gen);

}  // namespace wsc::consol
