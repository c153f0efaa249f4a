#include "edcflow/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace edcflow {

namespace {

int env_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("EDCFLOW_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return std::min(v, hw);
  }
  return hw;
}

std::atomic<int> g_max_threads{env_threads()};
thread_local bool tl_in_worker = false;

struct Job {
  const std::function<void(int64_t, int64_t)>* fn = nullptr;
  int64_t n = 0;
  int64_t chunks = 0;
  std::atomic<int64_t> next{0};
  std::atomic<int64_t> pending{0};
};

class Pool {
 public:
  static Pool& instance() {
    static Pool p;
    return p;
  }

  void run(int64_t nchunks, int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->n = n;
    job->chunks = nchunks;
    job->pending.store(nchunks, std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> lk(m_);
      ensure_workers(static_cast<int>(nchunks) - 1);
      current_ = job;
      ++generation_;
      cv_.notify_all();
    }
    work(*job);
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return job->pending.load(std::memory_order_acquire) == 0; });
  }

 private:
  Pool() = default;
  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
      cv_.notify_all();
    }
    for (auto& t : workers_) t.join();
  }

  void ensure_workers(int want) {
    while (static_cast<int>(workers_.size()) < want) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    tl_in_worker = true;
    uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = current_;
      }
      if (job) work(*job);
    }
  }

  void work(Job& j) {
    for (;;) {
      int64_t c = j.next.fetch_add(1, std::memory_order_relaxed);
      if (c >= j.chunks) break;
      int64_t b = c * j.n / j.chunks;
      int64_t e = (c + 1) * j.n / j.chunks;
      if (b < e) (*j.fn)(b, e);
      if (j.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(m_);
        done_cv_.notify_all();
      }
    }
  }

  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> workers_;
  std::shared_ptr<Job> current_;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

int max_threads() { return g_max_threads.load(std::memory_order_relaxed); }

void set_max_threads(int n) {
  if (n < 1) n = 1;
  g_max_threads.store(n, std::memory_order_relaxed);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn, int64_t grain) {
  if (n <= 0) return;
  if (grain < 1) grain = 1;
  int64_t chunks = std::min<int64_t>(max_threads(), (n + grain - 1) / grain);
  if (chunks <= 1 || tl_in_worker) {
    fn(0, n);
    return;
  }
  Pool::instance().run(chunks, n, fn);
}

}  // namespace edcflow
