#include "dba/parallel.hpp"

namespace dba {

WorkerPool::WorkerPool(int workers) {
  const int extra = workers - 1;
  for (int i = 0; i < extra; ++i) {
    threads_.emplace_back([this] { worker_loop(); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (std::thread& t : threads_) {
    t.join();
  }
}

void WorkerPool::run(int n, const std::function<void(int)>& fn) {
  if (n <= 0) {
    return;
  }
  if (threads_.empty()) {
    for (int i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }

  {
    std::lock_guard lock(mutex_);
    fn_ = &fn;
    total_ = n;
    next_.store(0, std::memory_order_relaxed);
    remaining_.store(n, std::memory_order_relaxed);
    ++generation_;
  }
  start_cv_.notify_all();

  // The caller participates as a worker.
  for (;;) {
    const int i = next_.fetch_add(1, std::memory_order_relaxed);
    if (i >= total_) {
      break;
    }
    fn(i);
    remaining_.fetch_sub(1, std::memory_order_acq_rel);
  }

  // Wait until every item ran AND every worker left the grab loop; a worker
  // still inside it must not observe the next generation's reset counters.
  std::unique_lock lock(mutex_);
  done_cv_.wait(lock, [this] {
    return remaining_.load(std::memory_order_acquire) == 0 && active_ == 0;
  });
  fn_ = nullptr;
}

void WorkerPool::worker_loop() {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(int)>* fn = nullptr;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) {
        return;
      }
      seen = generation_;
      fn = fn_;
      ++active_;
    }
    for (;;) {
      const int i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= total_) {
        break;
      }
      (*fn)(i);
      remaining_.fetch_sub(1, std::memory_order_acq_rel);
    }
    {
      std::lock_guard lock(mutex_);
      --active_;
    }
    done_cv_.notify_all();
  }
}

}  // namespace dba
