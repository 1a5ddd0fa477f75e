#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace dba {

/// Persistent fork-join pool. run(n, fn) invokes fn(i) for i in [0, n) across
/// the workers and returns when all items are done. Work items must write to
/// disjoint state; the pool adds no reductions, so results are independent of
/// the worker count and of scheduling.
class WorkerPool {
 public:
  /// workers <= 1 means run() executes inline on the caller.
  explicit WorkerPool(int workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void run(int n, const std::function<void(int)>& fn);

  int workers() const { return static_cast<int>(threads_.size()) + 1; }

 private:
  void worker_loop();

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* fn_ = nullptr;
  int total_ = 0;
  std::atomic<int> next_{0};
  std::atomic<int> remaining_{0};
  int active_ = 0;  ///< workers currently inside the grab loop
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace dba
