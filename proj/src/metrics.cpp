#include "wsc/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "wsc/errors.hpp"

namespace wsc::metrics {

std::vector<double> eval_accuracy_row(const nn::ParameterSet& params, const nn::NetworkSpec& spec,
                                      const tasks::TaskStream& stream, std::size_t after_task) {
  if (after_task < 1 || after_task > stream.num_tasks())
    throw DomainError("eval_accuracy_row: after_task out of range");
  const nn::ClassMask mask = stream.seen_mask(after_task);
  std::vector<double> row;
  for (std::size_t k = 0; k < after_task; ++k) {
    const std::vector<tasks::LabeledExample>& test = stream.tasks[k].test;
    if (test.empty()) throw DomainError("eval_accuracy_row: task has no test split");
    nn::Tensor inputs = nn::Tensor::zeros({test.size(), stream.input_dim});
    for (std::size_t r = 0; r < test.size(); ++r)
      std::copy(test[r].features.begin(), test[r].features.end(), inputs.row(r));
    std::vector<std::size_t> pred = nn::predict(params, spec, inputs, mask);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < test.size(); ++r)
      if (pred[r] == test[r].label) ++hits;
    row.push_back(static_cast<double>(hits) / static_cast<double>(test.size()));
  }
  return row;
}

double average_final_accuracy(const AccuracyMatrix& a) {
  if (a.num_tasks == 0) throw DomainError("average_final_accuracy: empty matrix");
  double sum = 0.0;
  for (std::size_t k = 0; k < a.num_tasks; ++k) {
    if (!a.defined(k, a.num_tasks - 1))
      throw DomainError("average_final_accuracy: final column incomplete");
    sum += a.at(k, a.num_tasks - 1);
  }
  return sum / static_cast<double>(a.num_tasks);
}

double forgetting(const AccuracyMatrix& a) {
  if (a.num_tasks < 2) throw DomainError("forgetting: needs at least 2 tasks");
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < a.num_tasks; ++k) {
    double best = -1.0;
    for (std::size_t i = k; i < a.num_tasks; ++i) {
      if (!a.defined(k, i)) throw DomainError("forgetting: matrix incomplete");
      best = std::max(best, a.at(k, i));
    }
    sum += best - a.at(k, a.num_tasks - 1);
  }
  return sum / static_cast<double>(a.num_tasks - 1);
}

double plasticity(const AccuracyMatrix& a) {
  if (a.num_tasks == 0) throw DomainError("plasticity: empty matrix");
  double sum = 0.0;
  for (std::size_t t = 0; t < a.num_tasks; ++t) {
    if (!a.defined(t, t)) throw DomainError("plasticity: diagonal incomplete");
    sum += a.at(t, t);
  }
  return sum / static_cast<double>(a.num_tasks);
}

namespace {

nn::Batch probe_batch(const std::vector<const tasks::LabeledExample*>& pool,
                      std::size_t probe_size, std::size_t input_dim, rng::Rng& gen) {
  // without replacement when the pool is large enough, with otherwise
  std::vector<std::size_t> picks;
  if (probe_size <= pool.size()) {
    picks = gen.sample_without_replacement(pool.size(), probe_size);
  } else {
    picks.resize(probe_size);
    for (std::size_t& p : picks) p = gen.index(pool.size());
  }
  nn::Batch batch;
  batch.inputs = nn::Tensor::zeros({picks.size(), input_dim});
  batch.labels.resize(picks.size());
  batch.task_ids.resize(picks.size());
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const tasks::LabeledExample& ex = *pool[picks[r]];
    std::copy(ex.features.begin(), ex.features.end(), batch.inputs.row(r));
    batch.labels[r] = ex.label;
    batch.task_ids[r] = ex.source_task;
  }
  return batch;
}

}  // namespace

AlignmentRecord gradient_alignment(const nn::ParameterSet& params, const nn::NetworkSpec& spec,
                                   const tasks::TaskSpec& task, const tasks::ReplayBuffer& buffer,
                                   std::size_t probe_size, const nn::ClassMask& mask,
                                   rng::Rng& gen) {
  if (buffer.total_stored() == 0) throw DomainError("gradient_alignment: empty buffer");
  if (probe_size < 1) throw DomainError("gradient_alignment: probe_size must be >= 1");
  if (task.train.empty()) throw DomainError("gradient_alignment: task has no train data");

  std::vector<const tasks::LabeledExample*> new_pool, past_pool;
  for (const tasks::LabeledExample& ex : task.train) new_pool.push_back(&ex);
  for (const auto& [cls, items] : buffer.stored)
    for (const tasks::LabeledExample& ex : items) past_pool.push_back(&ex);

  const std::size_t dim = task.train.front().features.size();
  nn::Batch new_probe = probe_batch(new_pool, probe_size, dim, gen);
  nn::Batch past_probe = probe_batch(past_pool, probe_size, dim, gen);

  const std::vector<double> g_new = nn::loss_and_grad(params, spec, new_probe, mask).grads.flat;
  const std::vector<double> g_past = nn::loss_and_grad(params, spec, past_probe, mask).grads.flat;

  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < g_new.size(); ++i) {
    dot += g_new[i] * g_past[i];
    n1 += g_new[i] * g_new[i];
    n2 += g_past[i] * g_past[i];
  }
  AlignmentRecord rec;
  rec.task = task.task_id + 1;
  rec.norm_new = std::sqrt(n1);
  rec.norm_past = std::sqrt(n2);
  if (rec.norm_new < 1e-12 || rec.norm_past < 1e-12) {
    rec.rho = 0.0;
    rec.degenerate = true;
  } else {
    rec.rho = dot / (rec.norm_new * rec.norm_past);
  }
  return rec;
}

DriftRecord drift_record(const nn::ParameterSet& theta_before, const nn::ParameterSet& theta_after,
                         std::span<const nn::ParameterSet> per_epoch_snapshots) {
  if (!theta_before.same_layout(theta_after)) throw ShapeError("drift_record: layout mismatch");
  auto l2 = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  DriftRecord rec;
  rec.inter_task_l2 = l2(theta_after.flat, theta_before.flat);
  const std::vector<double>* prev = &theta_before.flat;
  for (const nn::ParameterSet& snap : per_epoch_snapshots) {
    if (!snap.same_layout(theta_before)) throw ShapeError("drift_record: snapshot layout mismatch");
    rec.intra_task_l2_per_epoch.push_back(l2(snap.flat, *prev));
    prev = &snap.flat;
  }
  return rec;
}

}  // namespace wsc::metrics
