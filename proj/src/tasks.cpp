#include "wsc/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "wsc/errors.hpp"

namespace wsc::tasks {

nn::ClassMask TaskStream::seen_mask(std::size_t upto) const {
  nn::ClassMask mask(num_classes, 0);
  for (std::size_t t = 0; t < upto && t < tasks.size(); ++t)
    for (std::size_t c : tasks[t].class_ids) mask[c] = 1;
  return mask;
}

void TaskStream::validate() const {
  std::set<std::size_t> seen;
  for (const TaskSpec& task : tasks) {
    for (std::size_t c : task.class_ids) {
      if (c >= num_classes) throw ConfigError("stream: class id out of range");
      if (!seen.insert(c).second) throw ConfigError("stream: class ids overlap across tasks");
    }
    for (const LabeledExample& ex : task.train)
      if (std::find(task.class_ids.begin(), task.class_ids.end(), ex.label) ==
          task.class_ids.end())
        throw ConfigError("stream: train label outside owning task's class set");
    for (const LabeledExample& ex : task.test)
      if (std::find(task.class_ids.begin(), task.class_ids.end(), ex.label) ==
          task.class_ids.end())
        throw ConfigError("stream: test label outside owning task's class set");
  }
  if (seen.size() != num_classes)
    throw ConfigError("stream: union of task classes must cover all classes");
}

std::size_t ReplayBuffer::total_stored() const {
  std::size_t n = 0;
  for (const auto& [cls, items] : stored) n += items.size();
  return n;
}

TaskStream gen_synthetic_stream(uint64_t seed, std::size_t num_tasks, std::size_t classes_per_task,
                                std::size_t input_dim, std::size_t n_train_per_class,
                                std::size_t n_test_per_class, double cluster_separation) {
  if (num_tasks < 1 || classes_per_task < 1 || input_dim < 1 || n_train_per_class < 1 ||
      n_test_per_class < 1)
    throw ConfigError("gen_synthetic_stream: all counts must be >= 1");

  TaskStream stream;
  stream.num_classes = num_tasks * classes_per_task;
  stream.input_dim = input_dim;
  stream.tasks.resize(num_tasks);

  // class means on a sphere of radius cluster_separation
  std::vector<std::vector<double>> means(stream.num_classes);
  rng::Rng mean_gen(rng::derive_stream(seed, 0, "synthetic-means"));
  for (auto& mu : means) {
    mu.resize(input_dim);
    double norm = 0.0;
    for (double& v : mu) {
      v = mean_gen.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (double& v : mu) v *= cluster_separation / norm;
  }

  for (std::size_t t = 0; t < num_tasks; ++t) {
    TaskSpec& task = stream.tasks[t];
    task.task_id = t;
    for (std::size_t k = 0; k < classes_per_task; ++k) {
      const std::size_t cls = t * classes_per_task + k;
      task.class_ids.push_back(cls);
      rng::Rng gen(rng::derive_stream(seed, cls, "synthetic-samples"));
      auto draw = [&](std::vector<LabeledExample>& dst, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          LabeledExample ex;
          ex.label = cls;
          ex.source_task = t;
          ex.features.resize(input_dim);
          for (std::size_t d = 0; d < input_dim; ++d) ex.features[d] = means[cls][d] + gen.normal();
          dst.push_back(std::move(ex));
        }
      };
      draw(task.train, n_train_per_class);
      draw(task.test, n_test_per_class);
    }
  }
  return stream;
}

namespace {

uint32_t read_be_u32(std::ifstream& in, const std::string& path, std::size_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4)
    throw FormatError(path + ": truncated header at byte " + std::to_string(offset));
  return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
         uint32_t(buf[3]);
}

struct IdxData {
  std::size_t count = 0;
  std::size_t feature_dim = 0;
  std::vector<unsigned char> bytes;
};

IdxData read_idx(const std::string& path, uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open file");
  const uint32_t magic = read_be_u32(in, path, 0);
  if (magic != expected_magic) {
    char msg[160];
    std::snprintf(msg, sizeof(msg), "%s: bad magic 0x%08x at byte 0 (expected 0x%08x)",
                  path.c_str(), magic, expected_magic);
    throw FormatError(msg);
  }
  const std::size_t ndims = magic & 0xff;
  std::vector<std::size_t> dims(ndims);
  for (std::size_t d = 0; d < ndims; ++d) dims[d] = read_be_u32(in, path, 4 + 4 * d);

  IdxData out;
  out.count = dims[0];
  out.feature_dim = 1;
  for (std::size_t d = 1; d < ndims; ++d) out.feature_dim *= dims[d];
  const std::size_t payload = out.count * out.feature_dim;
  out.bytes.resize(payload);
  in.read(reinterpret_cast<char*>(out.bytes.data()), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload)
    throw FormatError(path + ": truncated payload at byte " +
                      std::to_string(4 + 4 * ndims + static_cast<std::size_t>(in.gcount())) +
                      " (expected " + std::to_string(payload) + " data bytes)");
  return out;
}

}  // namespace

TaskStream load_idx_stream(const std::string& images_path, const std::string& labels_path,
                           std::size_t num_tasks, uint64_t seed) {
  if (num_tasks < 1) throw ConfigError("load_idx_stream: num_tasks must be >= 1");
  IdxData images = read_idx(images_path, 0x00000803u);
  IdxData labels = read_idx(labels_path, 0x00000801u);
  if (labels.count != images.count)
    throw FormatError(labels_path + ": label count " + std::to_string(labels.count) +
                      " != image count " + std::to_string(images.count));

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < images.count; ++i) by_class[labels.bytes[i]].push_back(i);

  const std::size_t num_classes = by_class.size();
  if (num_classes < 2) throw FormatError(labels_path + ": need at least 2 distinct classes");
  if (num_classes % num_tasks != 0)
    throw ConfigError("load_idx_stream: " + std::to_string(num_classes) +
                      " classes not divisible into " + std::to_string(num_tasks) + " tasks");
  const std::size_t per_task = num_classes / num_tasks;

  std::vector<std::size_t> class_order;
  for (const auto& [cls, idx] : by_class) class_order.push_back(cls);  // ascending

  // groups formed by ascending class id; group-to-task assignment shuffled
  std::vector<std::size_t> group_of_task(num_tasks);
  for (std::size_t g = 0; g < num_tasks; ++g) group_of_task[g] = g;
  rng::Rng assign_gen(rng::derive_stream(seed, 0, "idx-task-assign"));
  assign_gen.shuffle(group_of_task);

  TaskStream stream;
  stream.num_classes = num_classes;
  stream.input_dim = images.feature_dim;
  stream.tasks.resize(num_tasks);

  // dense relabeling so class ids are 0..C-1 even if raw labels are sparse
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t i = 0; i < class_order.size(); ++i) dense[class_order[i]] = i;

  for (std::size_t t = 0; t < num_tasks; ++t) {
    TaskSpec& task = stream.tasks[t];
    task.task_id = t;
    const std::size_t group = group_of_task[t];
    for (std::size_t k = 0; k < per_task; ++k) {
      const std::size_t raw_cls = class_order[group * per_task + k];
      const std::size_t cls = dense[raw_cls];
      task.class_ids.push_back(cls);

      std::vector<std::size_t> rows = by_class[raw_cls];
      rng::Rng split_gen(rng::derive_stream(seed, raw_cls, "idx-split"));
      split_gen.shuffle(rows);
      const std::size_t n_test = rows.size() / 6;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        LabeledExample ex;
        ex.label = cls;
        ex.source_task = t;
        ex.features.resize(images.feature_dim);
        const unsigned char* px = images.bytes.data() + rows[i] * images.feature_dim;
        for (std::size_t d = 0; d < images.feature_dim; ++d)
          ex.features[d] = static_cast<double>(px[d]) / 255.0;
        if (i < n_test)
          task.test.push_back(std::move(ex));
        else
          task.train.push_back(std::move(ex));
      }
    }
  }
  return stream;
}

void save_stream(const TaskStream& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "WSC-STREAM v1\n";
  char buf[64];
  auto write_rows = [&](const char* split, auto getter) {
    out << "# split " << split << "\n";
    for (const TaskSpec& task : stream.tasks) {
      for (const LabeledExample& ex : getter(task)) {
        out << task.task_id << ',' << ex.label;
        for (double f : ex.features) {
          std::snprintf(buf, sizeof(buf), "%.17g", f);
          out << ',' << buf;
        }
        out << '\n';
      }
    }
  };
  write_rows("train", [](const TaskSpec& t) -> const std::vector<LabeledExample>& { return t.train; });
  write_rows("test", [](const TaskSpec& t) -> const std::vector<LabeledExample>& { return t.test; });
}

TaskStream load_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line) || line != "WSC-STREAM v1")
    throw FormatError(path + ": missing 'WSC-STREAM v1' header at byte 0");

  TaskStream stream;
  bool in_test = false;
  std::size_t max_task = 0, max_label = 0;
  std::vector<std::pair<bool, LabeledExample>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("split test") != std::string::npos) in_test = true;
      else if (line.find("split train") != std::string::npos) in_test = false;
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    LabeledExample ex;
    std::size_t task_id = 0;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      try {
        if (col == 0) task_id = std::stoul(field);
        else if (col == 1) ex.label = std::stoul(field);
        else ex.features.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw FormatError(path + ": bad field on line " + std::to_string(lineno));
      }
      ++col;
    }
    if (col < 3) throw FormatError(path + ": too few fields on line " + std::to_string(lineno));
    if (!rows.empty() && ex.features.size() != rows.front().second.features.size())
      throw FormatError(path + ": inconsistent feature count on line " + std::to_string(lineno));
    ex.source_task = task_id;
    max_task = std::max(max_task, task_id);
    max_label = std::max(max_label, ex.label);
    rows.emplace_back(in_test, std::move(ex));
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");

  stream.num_classes = max_label + 1;
  stream.input_dim = rows.front().second.features.size();
  stream.tasks.resize(max_task + 1);
  for (std::size_t t = 0; t <= max_task; ++t) stream.tasks[t].task_id = t;
  std::vector<std::set<std::size_t>> class_sets(max_task + 1);
  for (auto& [is_test, ex] : rows) {
    TaskSpec& task = stream.tasks[ex.source_task];
    class_sets[ex.source_task].insert(ex.label);
    (is_test ? task.test : task.train).push_back(std::move(ex));
  }
  for (std::size_t t = 0; t <= max_task; ++t)
    stream.tasks[t].class_ids.assign(class_sets[t].begin(), class_sets[t].end());
  stream.validate();
  return stream;
}

ReplayBuffer buffer_update(const ReplayBuffer& buffer, const TaskSpec& finished_task,
                           std::size_t per_class_budget) {
  for (std::size_t cls : finished_task.class_ids)
    if (buffer.has_class(cls))
      throw DomainError("buffer_update: task's classes already present in buffer");

  ReplayBuffer out = buffer;
  const bool shrunk = per_class_budget < out.per_class_budget && !out.stored.empty();
  out.per_class_budget = per_class_budget;
  if (shrunk)
    for (auto& [cls, items] : out.stored)
      if (items.size() > per_class_budget) items.resize(per_class_budget);

  for (std::size_t cls : finished_task.class_ids) {
    std::vector<const LabeledExample*> candidates;
    for (const LabeledExample& ex : finished_task.train)
      if (ex.label == cls) candidates.push_back(&ex);
    rng::Rng gen(rng::derive_stream(buffer.selection_seed, cls, "buffer-select"));
    const std::size_t keep = std::min(per_class_budget, candidates.size());
    std::vector<std::size_t> chosen = gen.sample_without_replacement(candidates.size(), keep);
    std::vector<LabeledExample>& slot = out.stored[cls];
    for (std::size_t idx : chosen) slot.push_back(*candidates[idx]);  // selection order
  }
  return out;
}

double memory_ratio(const ReplayBuffer& buffer, const TaskStream& stream, std::size_t upto_task) {
  if (upto_task < 2) throw DomainError("memory_ratio: needs upto_task >= 2");
  std::size_t past = 0;
  for (std::size_t t = 0; t + 1 < upto_task && t < stream.num_tasks(); ++t)
    past += stream.tasks[t].train.size();
  if (past == 0) throw DomainError("memory_ratio: no past training data");
  return static_cast<double>(buffer.total_stored()) / static_cast<double>(past);
}

std::map<std::size_t, double> task_weights(const ReplayBuffer& buffer) {
  const std::size_t total = buffer.total_stored();
  if (total == 0) throw DomainError("task_weights: empty buffer");
  std::map<std::size_t, double> counts;
  for (const auto& [cls, items] : buffer.stored)
    for (const LabeledExample& ex : items) counts[ex.source_task] += 1.0;
  for (auto& [task, w] : counts) w /= static_cast<double>(total);
  return counts;
}

HybridPool::HybridPool(const TaskSpec& current, const ReplayBuffer& buffer) {
  if (current.train.empty()) throw DomainError("hybrid sampling: current task has no train data");
  for (const LabeledExample& ex : current.train) entries_.push_back(&ex);
  current_size_ = entries_.size();
  for (const auto& [cls, items] : buffer.stored)
    for (const LabeledExample& ex : items) entries_.push_back(&ex);
  input_dim_ = current.train.front().features.size();
}

nn::Batch HybridPool::sample(std::size_t batch_size, SampleMode mode, double alpha_override,
                             rng::Rng& gen) {
  if (batch_size < 1) throw DomainError("hybrid sampling: batch_size must be >= 1");
  const std::size_t buf_n = buffer_size();
  if (mode == SampleMode::kExplicit && buf_n == 0 && alpha_override < 1.0)
    throw DomainError("hybrid sampling: explicit mode with empty buffer needs alpha = 1");

  nn::Batch batch;
  batch.inputs = nn::Tensor::zeros({batch_size, input_dim_});
  batch.labels.resize(batch_size);
  batch.task_ids.resize(batch_size);
  for (std::size_t s = 0; s < batch_size; ++s) {
    std::size_t pick;
    if (mode == SampleMode::kPooled) {
      pick = gen.index(entries_.size());
    } else {
      if (gen.uniform() < alpha_override)
        pick = gen.index(current_size_);
      else
        pick = current_size_ + gen.index(buf_n);
    }
    const LabeledExample& ex = *entries_[pick];
    std::copy(ex.features.begin(), ex.features.end(), batch.inputs.row(s));
    batch.labels[s] = ex.label;
    batch.task_ids[s] = ex.source_task;
  }
  return batch;
}

nn::Batch sample_hybrid_batch(const TaskSpec& current, const ReplayBuffer& buffer,
                              std::size_t batch_size, SampleMode mode, double alpha_override,
                              rng::Rng& gen) {
  HybridPool pool(current, buffer);
  return pool.sample(batch_size, mode, alpha_override, gen);
}

}  // namespace wsc::tasks
