#ifndef TOMALIGN_WORKER_POOL_HPP
#define TOMALIGN_WORKER_POOL_HPP

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

#include "tomalign/error.hpp"

namespace tomalign {

/// Fixed-size FIFO thread pool. The destructor finishes queued jobs first.
class WorkerPool {
 public:
  static constexpr std::size_t kDefaultSize = 10;

  explicit WorkerPool(std::size_t size = kDefaultSize) {
    if (size == 0) throw ConfigError("worker pool needs at least one worker");
    workers_.reserve(size);
    for (std::size_t i = 0; i < size; ++i) workers_.emplace_back([this] { run(); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : workers_) t.join();
  }

  template <class F>
  auto submit(F&& job) -> std::future<std::invoke_result_t<std::decay_t<F>>> {
    using R = std::invoke_result_t<std::decay_t<F>>;
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(job));
    auto result = task->get_future();
    {
      std::lock_guard lock(mutex_);
      if (stopping_) throw StateError("worker pool is shutting down");
      queue_.emplace_back([task] { (*task)(); });
    }
    wake_.notify_one();
    return result;
  }

  /// Blocks until the queue is empty and no job is running.
  void wait_idle() {
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
  }

  std::size_t size() const noexcept { return workers_.size(); }

  std::size_t peak_concurrency() const {
    std::lock_guard lock(mutex_);
    return peak_;
  }

 private:
  void run() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
        peak_ = std::max(peak_, ++active_);
      }
      job();
      {
        std::lock_guard lock(mutex_);
        --active_;
        if (queue_.empty() && active_ == 0) idle_.notify_all();
      }
    }
  }

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::thread> workers_;
  std::size_t active_ = 0;
  std::size_t peak_ = 0;
  bool stopping_ = false;
};

}  // namespace tomalign

#endif  // TOMALIGN_WORKER_POOL_HPP
