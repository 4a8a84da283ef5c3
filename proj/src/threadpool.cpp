#include "mdsvm/threadpool.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace mdsvm {

namespace {

int env_worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("MDSVM_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1 && v < hw) return v;
        if (v >= hw) return hw;
    }
    return hw;
}

thread_local bool t_inside_pool = false;

class Pool {
public:
    Pool() : size_(env_worker_count()) {
        for (int i = 1; i < size_; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::unique_lock lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    int size() const { return size_; }

    void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        const int parts = size_;
        // A few chunks per worker for load balance; ranges stay disjoint.
        const std::int64_t chunk = std::max<std::int64_t>(1, (n + parts * 4 - 1) / (parts * 4));
        {
            std::unique_lock lk(mu_);
            job_fn_ = &fn;
            job_n_ = n;
            job_chunk_ = chunk;
            next_chunk_.store(0, std::memory_order_relaxed);
            pending_ = parts - 1;
            ++generation_;
        }
        cv_.notify_all();
        drain(fn, n, chunk);
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        job_fn_ = nullptr;
    }

private:
    void drain(const std::function<void(std::int64_t, std::int64_t)>& fn, std::int64_t n,
               std::int64_t chunk) {
        for (;;) {
            std::int64_t begin = next_chunk_.fetch_add(chunk, std::memory_order_relaxed);
            if (begin >= n) break;
            fn(begin, std::min(n, begin + chunk));
        }
    }

    void worker_loop() {
        t_inside_pool = true;
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::int64_t, std::int64_t)>* fn = nullptr;
            std::int64_t n = 0, chunk = 0;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                fn = job_fn_;
                n = job_n_;
                chunk = job_chunk_;
            }
            if (fn) drain(*fn, n, chunk);
            {
                std::unique_lock lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    int size_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* job_fn_ = nullptr;
    std::int64_t job_n_ = 0;
    std::int64_t job_chunk_ = 0;
    std::atomic<std::int64_t> next_chunk_{0};
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

int worker_count() { return pool().size(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    // Nested calls and tiny ranges run inline.
    if (t_inside_pool || n < 256 || pool().size() == 1) {
        fn(0, n);
        return;
    }
    pool().run(n, fn);
}

}  // namespace mdsvm
