#include <algorithm>
#include <numeric>
#include <set>

#include "randproto/error.hpp"
#include "randproto/feature_store.hpp"
#include "randproto/rng.hpp"

namespace randproto {

std::vector<std::size_t> cil_group_sizes(std::size_t num_classes,
                                         std::size_t num_tasks) {
  if (num_tasks == 0) fail(Errc::kParameter, "task count must be positive");
  if (num_tasks > num_classes)
    fail(Errc::kInfeasibleSplit, std::to_string(num_tasks) + " tasks for " +
                                     std::to_string(num_classes) + " classes");
  const std::size_t per_task = (num_classes + num_tasks - 1) / num_tasks;
  std::vector<std::size_t> sizes(num_tasks, per_task);
  if (num_classes > (num_tasks - 1) * per_task) {
    sizes[0] = num_classes - (num_tasks - 1) * per_task;
  } else {
    const std::size_t floor_size = num_classes / num_tasks;
    std::fill(sizes.begin(), sizes.end(), floor_size);
    sizes[0] += num_classes % num_tasks;
  }
  return sizes;
}

TaskSplit split_cil(const StoreIndex& index, std::size_t num_tasks,
                    std::uint64_t seed) {
  const std::size_t K = index.manifest.num_classes;
  const auto sizes = cil_group_sizes(K, num_tasks);

  std::vector<std::uint32_t> order(K);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(seed);
  rng.shuffle(std::span<std::uint32_t>(order));

  TaskSplit split;
  split.class_incremental = true;
  split.seed = seed;
  split.classes.resize(num_tasks);
  split.train.resize(num_tasks);
  split.val.resize(num_tasks);

  std::vector<std::size_t> task_of_class(K);
  std::size_t next = 0;
  for (std::size_t t = 0; t < num_tasks; ++t) {
    for (std::size_t i = 0; i < sizes[t]; ++i) {
      const std::uint32_t c = order[next++];
      split.classes[t].push_back(c);
      task_of_class[c] = t;
    }
  }
  for (std::uint64_t id = 0; id < index.size(); ++id) {
    const std::size_t t = task_of_class[index.labels[id]];
    (index.split_of(id) == Split::kTrain ? split.train : split.val)[t].push_back(id);
  }
  return split;
}

TaskSplit split_dil(const StoreIndex& index) {
  if (!index.manifest.has_domains() || index.domains.empty())
    fail(Errc::kMissingDomain, "store '" + index.manifest.name + "' has no domain annotations");
  const std::size_t num_domains = index.manifest.domains.size();
  TaskSplit split;
  split.class_incremental = false;
  split.classes.resize(num_domains);
  split.train.resize(num_domains);
  split.val.resize(num_domains);
  std::vector<std::set<std::uint32_t>> seen(num_domains);
  for (std::uint64_t id = 0; id < index.size(); ++id) {
    const std::uint32_t d = index.domains[id];
    if (index.split_of(id) == Split::kTrain) {
      split.train[d].push_back(id);
      seen[d].insert(index.labels[id]);
    } else {
      split.val[d].push_back(id);
    }
  }
  for (std::size_t d = 0; d < num_domains; ++d)
    split.classes[d].assign(seen[d].begin(), seen[d].end());
  return split;
}

}  // namespace randproto
