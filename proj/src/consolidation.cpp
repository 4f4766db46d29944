#include "wsc/consolidation.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "wsc/errors.hpp"

namespace wsc::consol {

void ConsolidationSchedule::validate() const {
  if (epochs_per_task < 1) throw ConfigError("schedule.epochs_per_task must be >= 1");
  if (warmup_epochs >= epochs_per_task)
    throw ConfigError("schedule.warmup_epochs must be < epochs_per_task");
  if (avg_interval < 1) throw ConfigError("schedule.avg_interval must be >= 1");
}

std::size_t update_running_average(RunningAverage& avg, const nn::ParameterSet& theta,
                                   std::size_t epoch, const ConsolidationSchedule& schedule) {
  if (epoch <= schedule.warmup_epochs || epoch % schedule.avg_interval != 0)
    throw ContractError("update_running_average: called outside the i > n_warm, i % j == 0 guard");
  if (avg.theta_bar.size() != theta.flat.size())
    throw ShapeError("update_running_average: layout mismatch");

  const std::size_t n_avg = schedule.avg_count_mode == AvgCountMode::kPaper
                                ? epoch / schedule.avg_interval
                                : avg.updates_done;
  const double n = static_cast<double>(n_avg);
  const double inv = 1.0 / (n + 1.0);
  for (std::size_t i = 0; i < theta.flat.size(); ++i)
    avg.theta_bar[i] = (n * avg.theta_bar[i] + theta.flat[i]) * inv;
  avg.updates_done += 1;
  return n_avg;
}

namespace {

std::size_t batches_per_epoch(std::size_t pool_size, std::size_t batch_size) {
  return (pool_size + batch_size - 1) / batch_size;
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

struct ConsolidationHooks {
  const ConsolidationSchedule* schedule = nullptr;
  const ResetConfig* reset_cfg = nullptr;
  const nn::ParameterSet* theta_prev = nullptr;  // null on the first task
  RunningAverage* avg = nullptr;
};

// Shared minibatch loop. Replay runs it bare; the consolidation trainer adds
// reset and averaging hooks on top.
TaskTrainReport train_loop(nn::ParameterSet& theta, const nn::NetworkSpec& spec,
                           const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                           std::size_t epochs, const optim::OptimizerConfig& opt_cfg,
                           std::size_t batch_size, uint64_t seed, const nn::ClassMask& seen_mask,
                           const ConsolidationHooks& hooks) {
  opt_cfg.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const auto t_start = std::chrono::steady_clock::now();

  TaskTrainReport report;
  if (epochs == 0) return report;

  rng::Rng batch_gen(rng::derive_stream(seed, task.task_id, "batches"));
  rng::Rng reset_gen(rng::derive_stream(seed, task.task_id, "reset"));
  rng::Rng probe_gen(rng::derive_stream(seed, task.task_id, "score-probe"));

  tasks::HybridPool pool(task, buffer);
  const std::size_t pool_size = pool.current_size() + pool.buffer_size();
  const std::size_t steps = batches_per_epoch(pool_size, batch_size);

  optim::VelocityState velocity = optim::VelocityState::zeros(theta.flat.size());
  optim::MomentState adam_state = optim::MomentState::zeros(theta.flat.size());
  // shadow moments feeding the importance score; zeroed per task so scores
  // reflect only this task's warm-up gradients
  optim::MomentState shadow = optim::MomentState::zeros(theta.flat.size());

  const bool consolidating = hooks.schedule != nullptr;
  nn::ClassMask class_seen_before;
  std::vector<uint8_t> eligible;
  if (consolidating && hooks.theta_prev) {
    class_seen_before = seen_mask.empty() ? nn::ClassMask(spec.num_classes, 1) : seen_mask;
    for (std::size_t c : task.class_ids) class_seen_before[c] = 0;
    if (hooks.reset_cfg->exclude_unseen_head)
      eligible = head_eligibility_mask(spec, theta, class_seen_before);
  }

  auto score_and_reset = [&](std::size_t epoch) {
    const ResetConfig& cfg = *hooks.reset_cfg;
    if (cfg.retain_fraction >= 1.0) return;  // q = 1: reset is a no-op
    ImportanceVector scores;
    switch (cfg.metric) {
      case ImportanceMetric::kMoment:
        scores = score_moment(shadow, cfg.bias_corrected_moments);
        break;
      case ImportanceMetric::kFirstMomentOnly:
        scores = score_first_moment(shadow, cfg.bias_corrected_moments);
        break;
      case ImportanceMetric::kSecondMomentOnly:
        scores = score_second_moment(shadow, cfg.bias_corrected_moments);
        break;
      case ImportanceMetric::kParamDrift:
        scores = score_param_drift(theta, *hooks.theta_prev);
        break;
      case ImportanceMetric::kFisher: {
        const std::size_t n = std::min(cfg.score_probe_samples, pool_size);
        nn::Batch probe = pool.sample(n, tasks::SampleMode::kPooled, 1.0, probe_gen);
        scores = score_fisher(theta, spec, {&probe, 1}, seen_mask);
        report.extra_passes += n;
        break;
      }
      case ImportanceMetric::kHessianHutchinson: {
        const std::size_t n = std::min(cfg.score_probe_samples, pool_size);
        nn::Batch probe = pool.sample(n, tasks::SampleMode::kPooled, 1.0, probe_gen);
        scores = score_hessian_hutchinson(theta, spec, probe, cfg.hutchinson_probes,
                                          probe_gen.next_u64(), seen_mask);
        report.extra_passes += 2 * cfg.hutchinson_probes * n;
        break;
      }
    }
    std::vector<std::size_t> reset_set = find_dormant_params(scores, cfg, theta, eligible);
    if (cfg.strategy == ResetStrategy::kSoftBlend) {
      soft_reset(theta, *hooks.theta_prev, reset_set, cfg.blend_alpha);
    } else if (cfg.strategy == ResetStrategy::kContinualBackprop) {
      const std::size_t n = std::min(cfg.score_probe_samples, pool_size);
      nn::Batch probe = pool.sample(n, tasks::SampleMode::kPooled, 1.0, probe_gen);
      alt_reset(theta, *hooks.theta_prev, reset_set, spec, cfg, &probe, reset_gen);
    } else {
      alt_reset(theta, *hooks.theta_prev, reset_set, spec, cfg, nullptr, reset_gen);
    }
    const std::size_t touched = cfg.strategy == ResetStrategy::kShrinkPerturb
                                    ? theta.flat.size()
                                    : reset_set.size();
    report.reset_events.push_back({epoch, touched});
  };

  const bool do_reset = consolidating && hooks.theta_prev != nullptr;
  const std::size_t n_warm = consolidating ? hooks.schedule->warmup_epochs : 0;

  std::vector<double> epoch_start(theta.flat.size());
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    epoch_start = theta.flat;
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      nn::Batch batch = pool.sample(batch_size, tasks::SampleMode::kPooled, 1.0, batch_gen);
      nn::LossGrad lg = nn::loss_and_grad(theta, spec, batch, seen_mask);
      update_shadow_moments(shadow, lg.grads, 0.9, 0.999);
      if (opt_cfg.kind == optim::OptKind::kSgd)
        optim::sgd_step(theta, lg.grads, opt_cfg, velocity);
      else
        optim::adam_step(theta, lg.grads, opt_cfg, adam_state);
      loss_sum += lg.loss;
      report.optimizer_steps += 1;
      if (do_reset && hooks.schedule->reset_frequency == ResetFrequency::kEveryIteration &&
          epoch > n_warm)
        score_and_reset(epoch);
    }
    report.epoch_train_loss.push_back(loss_sum / static_cast<double>(steps));
    report.intra_task_drift_l2.push_back(l2_distance(theta.flat, epoch_start));

    if (do_reset && epoch == n_warm)
      score_and_reset(epoch);
    else if (do_reset && hooks.schedule->reset_frequency == ResetFrequency::kEveryEpoch &&
             epoch > n_warm)
      score_and_reset(epoch);

    if (consolidating && hooks.schedule->averaging_enabled && hooks.theta_prev != nullptr &&
        epoch > n_warm && epoch % hooks.schedule->avg_interval == 0) {
      update_running_average(*hooks.avg, theta, epoch, *hooks.schedule);
      report.avg_update_count += 1;
    }
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace

TaskTrainReport wsc_train_task(nn::ParameterSet& theta, const nn::NetworkSpec& spec,
                               const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                               const ConsolidationSchedule& schedule, const ResetConfig& reset_cfg,
                               const optim::OptimizerConfig& opt_cfg, std::size_t batch_size,
                               uint64_t seed, const nn::ClassMask& seen_mask) {
  schedule.validate();
  reset_cfg.validate();
  const bool first_task = task.task_id == 0;

  std::optional<nn::ParameterSet> theta_prev;
  if (!first_task) theta_prev = theta;

  RunningAverage avg;
  avg.theta_bar = theta.flat;

  ConsolidationHooks hooks;
  hooks.schedule = &schedule;
  hooks.reset_cfg = &reset_cfg;
  hooks.theta_prev = theta_prev ? &*theta_prev : nullptr;
  hooks.avg = &avg;

  TaskTrainReport report = train_loop(theta, spec, task, buffer, schedule.epochs_per_task,
                                      opt_cfg, batch_size, seed, seen_mask, hooks);
  // install the averaged weights; skipped when no update happened (always on
  // the first task), which would otherwise erase the task's training
  if (report.avg_update_count > 0) theta.flat = avg.theta_bar;
  return report;
}

TaskTrainReport replay_train_task(nn::ParameterSet& theta, const nn::NetworkSpec& spec,
                                  const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                                  std::size_t epochs, const optim::OptimizerConfig& opt_cfg,
                                  std::size_t batch_size, uint64_t seed,
                                  const nn::ClassMask& seen_mask) {
  return train_loop(theta, spec, task, buffer, epochs, opt_cfg, batch_size, seed, seen_mask, {});
}

ScratchResult scratch_train(const nn::NetworkSpec& spec, const tasks::TaskStream& stream,
                            std::size_t buffer_budget, std::size_t upto_task, std::size_t epochs,
                            const optim::OptimizerConfig& opt_cfg, std::size_t batch_size,
                            uint64_t seed) {
  if (upto_task < 1 || upto_task > stream.num_tasks())
    throw DomainError("scratch_train: upto_task out of range");

  nn::NetworkSpec fresh = spec;
  fresh.init_seed = rng::derive_stream(seed, upto_task, "scratch-init");
  ScratchResult out{nn::init_params(fresh), {}};

  tasks::ReplayBuffer buffer;
  buffer.selection_seed = rng::derive_stream(seed, 0, "scratch-buffer");
  for (std::size_t t = 0; t + 1 < upto_task; ++t)
    buffer = tasks::buffer_update(buffer, stream.tasks[t], buffer_budget);

  const nn::ClassMask mask = stream.seen_mask(upto_task);
  out.report = replay_train_task(out.theta, fresh, stream.tasks[upto_task - 1], buffer, epochs,
                                 opt_cfg, batch_size, rng::derive_stream(seed, upto_task, "scratch"),
                                 mask);
  return out;
}

}  // namespace wsc::consol
