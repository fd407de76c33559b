#include "hybens/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace hybens {

namespace {

// Below this many points the dispatch overhead dominates; run inline.
constexpr std::size_t kMinParallelRange = 1u << 15;

int detect_cap() {
  const char* env = std::getenv("HYBRID_ENSEMBLES_THREADS");
  long requested = 0;
  if (env && *env) {
    char* end = nullptr;
    requested = std::strtol(env, &end, 10);
    if (end == env || requested < 0) requested = 0;
  }
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (requested == 0) return static_cast<int>(hw);
  return static_cast<int>(std::min<long>(requested, hw));
}

// A tiny persistent pool: workers sleep on a generation counter and pick up
// one pre-partitioned chunk each when it advances.
class Pool {
 public:
  explicit Pool(int workers) : chunks_(workers + 1) {
    for (int i = 1; i <= workers; ++i) {
      threads_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    work_cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t parts = chunks_.size();
    const std::size_t step = (n + parts - 1) / parts;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      fn_ = &fn;
      for (std::size_t i = 0; i < parts; ++i) {
        chunks_[i] = {std::min(n, i * step), std::min(n, (i + 1) * step)};
      }
      pending_ = static_cast<int>(parts) - 1;
      ++generation_;
    }
    work_cv_.notify_all();
    fn(chunks_[0].first, chunks_[0].second);  // caller takes chunk 0
    std::unique_lock<std::mutex> lock(mutex_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
  }

 private:
  void worker_loop(int index) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
      std::pair<std::size_t, std::size_t> chunk{0, 0};
      {
        std::unique_lock<std::mutex> lock(mutex_);
        work_cv_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        fn = fn_;
        chunk = chunks_[static_cast<std::size_t>(index)];
      }
      if (fn && chunk.first < chunk.second) (*fn)(chunk.first, chunk.second);
      {
        std::unique_lock<std::mutex> lock(mutex_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex mutex_;
  std::condition_variable work_cv_, done_cv_;
  std::vector<std::thread> threads_;
  std::vector<std::pair<std::size_t, std::size_t>> chunks_;
  const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

}  // namespace

int thread_cap() {
  static const int cap = detect_cap();
  return cap;
}

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const int cap = thread_cap();
  if (cap <= 1 || n < kMinParallelRange) {
    fn(0, n);
    return;
  }
  static Pool pool(thread_cap() - 1);
  pool.run(n, fn);
}

}  // namespace hybens
