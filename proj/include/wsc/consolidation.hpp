#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wsc/importance.hpp"
#include "wsc/nn.hpp"
#include "wsc/optim.hpp"
#include "wsc/tasks.hpp"

namespace wsc::consol {

enum class AvgCountMode { kPaper, kSnapshots };
enum class ResetFrequency { kOnce, kEveryEpoch, kEveryIteration };

struct ConsolidationSchedule {
  std::size_t epochs_per_task = 8;  // n_iter
  std::size_t warmup_epochs = 2;    // n_warm
  std::size_t avg_interval = 1;     // j
  AvgCountMode avg_count_mode = AvgCountMode::kSnapshots;
  ResetFrequency reset_frequency = ResetFrequency::kOnce;
  bool averaging_enabled = true;

  void validate() const;  // throws ConfigError
};

struct ResetEvent {
  std::size_t epoch = 0;
  std::size_t reset_count = 0;
};

struct TaskTrainReport {
  std::vector<double> epoch_train_loss;
  std::vector<ResetEvent> reset_events;
  std::size_t avg_update_count = 0;
  double wall_clock_seconds = 0.0;
  std::size_t optimizer_steps = 0;
  // forward/backward evaluations spent on importance scoring beyond training
  std::size_t extra_passes = 0;
  std::vector<double> intra_task_drift_l2;  // per-epoch parameter movement
};

struct RunningAverage {
  std::vector<double> theta_bar;
  std::size_t updates_done = 0;
};

// Running weight average update, valid only when epoch > n_warm and
// epoch % j == 0. Paper mode counts n_avg = floor(epoch / j); snapshots mode
// counts prior updates, so theta_bar equals the plain mean of snapshots.
// Returns the n_avg value used.
std::size_t update_running_average(RunningAverage& avg, const nn::ParameterSet& theta,
                                   std::size_t epoch, const ConsolidationSchedule& schedule);

// One task of Weight Space Consolidation: warm-up with shadow moments, a
// rank-based reset of dormant coordinates toward the pre-task snapshot, then
// a running weight average installed at task end.
TaskTrainReport wsc_train_task(nn::ParameterSet& theta, const nn::NetworkSpec& spec,
                               const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                               const ConsolidationSchedule& schedule, const ResetConfig& reset_cfg,
                               const optim::OptimizerConfig& opt_cfg, std::size_t batch_size,
                               uint64_t seed, const nn::ClassMask& seen_mask);

// Plain minibatch training on hybrid batches; no reset, no averaging.
TaskTrainReport replay_train_task(nn::ParameterSet& theta, const nn::NetworkSpec& spec,
                                  const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                                  std::size_t epochs, const optim::OptimizerConfig& opt_cfg,
                                  std::size_t batch_size, uint64_t seed,
                                  const nn::ClassMask& seen_mask);

// Fresh initialization followed by one training phase on D_t plus a buffer
// built over tasks < t with the given per-class budget.
struct ScratchResult {
  nn::ParameterSet theta;
  TaskTrainReport report;
};
ScratchResult scratch_train(const nn::NetworkSpec& spec, const tasks::TaskStream& stream,
                            std::size_t buffer_budget, std::size_t upto_task, std::size_t epochs,
                            const optim::OptimizerConfig& opt_cfg, std::size_t batch_size,
                            uint64_t seed);

}  // namespace wsc::consol
