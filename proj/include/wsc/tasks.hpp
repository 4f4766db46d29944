#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wsc/nn.hpp"
#include "wsc/rng.hpp"

namespace wsc::tasks {

struct LabeledExample {
  std::vector<double> features;
  std::size_t label = 0;
  std::size_t source_task = 0;
};

struct TaskSpec {
  std::size_t task_id = 0;  // 0-based
  std::vector<std::size_t> class_ids;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
};

struct TaskStream {
  std::vector<TaskSpec> tasks;
  std::size_t num_classes = 0;
  std::size_t input_dim = 0;

  std::size_t num_tasks() const { return tasks.size(); }
  // Visibility mask covering classes of tasks[0..upto), upto counted in tasks.
  nn::ClassMask seen_mask(std::size_t upto) const;
  void validate() const;
};

// Per-class exemplar store. Only classes from finished tasks are present.
struct ReplayBuffer {
  std::size_t per_class_budget = 0;
  std::map<std::size_t, std::vector<LabeledExample>> stored;
  uint64_t selection_seed = 0;

  std::size_t total_stored() const;
  bool has_class(std::size_t class_id) const { return stored.count(class_id) != 0; }
};

// Each class is an isotropic unit-variance Gaussian cluster whose mean lies on
// a sphere of radius cluster_separation. Deterministic in seed.
TaskStream gen_synthetic_stream(uint64_t seed, std::size_t num_tasks, std::size_t classes_per_task,
                                std::size_t input_dim, std::size_t n_train_per_class,
                                std::size_t n_test_per_class, double cluster_separation);

// IDX-format ingestion (magic 0x00000803 images / 0x00000801 labels,
// big-endian dims, raw bytes). Pixels scaled to [0,1]; classes partitioned
// into T equal groups by ascending class id, group-to-task assignment
// shuffled by seed; within each class a deterministic 1/6 holdout forms the
// test split.
TaskStream load_idx_stream(const std::string& images_path, const std::string& labels_path,
                           std::size_t num_tasks, uint64_t seed);

// WSC-STREAM v1 text codec. Header line "WSC-STREAM v1"; data rows are
// "task,label,f0,...,fD". Lines starting with '#' carry section markers
// ("# split train" / "# split test").
void save_stream(const TaskStream& stream, const std::string& path);
TaskStream load_stream(const std::string& path);

// Retain min(budget, n) uniformly selected examples per new class; existing
// classes untouched when the budget is unchanged, truncated to the first
// selected when it decreases.
ReplayBuffer buffer_update(const ReplayBuffer& buffer, const TaskSpec& finished_task,
                           std::size_t per_class_budget);

// kappa = |buffer| / sum of |D_j| over tasks j < upto_task (1-based).
double memory_ratio(const ReplayBuffer& buffer, const TaskStream& stream, std::size_t upto_task);

// Empirical task weights: stored examples from task j divided by |buffer|.
std::map<std::size_t, double> task_weights(const ReplayBuffer& buffer);

enum class SampleMode { kPooled, kExplicit };

// Flat index over D_t and the buffer, built once per task so batch sampling
// stays O(batch) per draw.
class HybridPool {
 public:
  HybridPool(const TaskSpec& current, const ReplayBuffer& buffer);

  // pooled: every slot uniform over the multiset D_t u M.
  // explicit: every slot from D_t with probability alpha, else uniform over M
  // (equivalent to task-weight sampling with uniform within-task draws).
  nn::Batch sample(std::size_t batch_size, SampleMode mode, double alpha_override, rng::Rng& gen);

  std::size_t current_size() const { return current_size_; }
  std::size_t buffer_size() const { return entries_.size() - current_size_; }

 private:
  std::vector<const LabeledExample*> entries_;  // current task first, then buffer
  std::size_t current_size_ = 0;
  std::size_t input_dim_ = 0;
};

nn::Batch sample_hybrid_batch(const TaskSpec& current, const ReplayBuffer& buffer,
                              std::size_t batch_size, SampleMode mode, double alpha_override,
                              rng::Rng& gen);

}  // namespace wsc::tasks
