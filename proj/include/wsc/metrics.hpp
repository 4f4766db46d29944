#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsc/nn.hpp"
#include "wsc/rng.hpp"
#include "wsc/tasks.hpp"

namespace wsc::metrics {

// a(k, i) = test accuracy on task k measured immediately after training task
// i, defined for k <= i (both 0-based here; the harness reports 1-based).
struct AccuracyMatrix {
  std::size_t num_tasks = 0;
  std::vector<double> cells;  // row-major, -1 marks undefined

  explicit AccuracyMatrix(std::size_t T = 0)
      : num_tasks(T), cells(T * T, -1.0) {}

  double at(std::size_t k, std::size_t i) const { return cells[k * num_tasks + i]; }
  void set(std::size_t k, std::size_t i, double v) { cells[k * num_tasks + i] = v; }
  bool defined(std::size_t k, std::size_t i) const { return at(k, i) >= 0.0; }
};

// Accuracies a(k, i) for all k <= i using class-IL prediction over the
// classes seen through task i. after_task is 1-based.
std::vector<double> eval_accuracy_row(const nn::ParameterSet& params, const nn::NetworkSpec& spec,
                                      const tasks::TaskStream& stream, std::size_t after_task);

// Mean over k of a(k, T).
double average_final_accuracy(const AccuracyMatrix& a);

// (1/(T-1)) * sum_{k<T} (max_i a(k, i) - a(k, T))
double forgetting(const AccuracyMatrix& a);

// Mean over t of a(t, t).
double plasticity(const AccuracyMatrix& a);

struct AlignmentRecord {
  std::size_t task = 0;  // 1-based
  double rho = 0.0;
  double norm_new = 0.0;
  double norm_past = 0.0;
  bool degenerate = false;  // a gradient norm fell below 1e-12; rho forced to 0
};

// Cosine similarity between the mean gradient over a probe batch from the
// current task's train split and one from the buffer.
AlignmentRecord gradient_alignment(const nn::ParameterSet& params, const nn::NetworkSpec& spec,
                                   const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                                   std::size_t probe_size, const nn::ClassMask& mask,
                                   rng::Rng& gen);

struct DriftRecord {
  std::size_t task = 0;  // 1-based
  double inter_task_l2 = 0.0;
  std::vector<double> intra_task_l2_per_epoch;
};

DriftRecord drift_record(const nn::ParameterSet& theta_before, const nn::ParameterSet& theta_after,
                         std::span<const nn::ParameterSet> per_epoch_snapshots);

struct CostRecord {
  std::size_t optimizer_steps = 0;
  double wall_clock_seconds = 0.0;
  std::size_t scored_coordinates = 0;
  // importance-metric overhead, counted in per-sample forward/backward
  // evaluations (a training step over a batch of B counts as B)
  std::size_t extra_forward_backward_passes = 0;
};

}  // namespace wsc::metrics
