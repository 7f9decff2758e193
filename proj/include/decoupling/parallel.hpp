#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace decoupling {

namespace detail {
inline std::atomic<unsigned>& worker_slot() {
  static std::atomic<unsigned> n{0};
  return n;
}
}  // namespace detail

// 0 means "use hardware concurrency".
inline void set_worker_count(unsigned n) { detail::worker_slot().store(n); }

inline unsigned worker_count() {
  unsigned n = detail::worker_slot().load();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// Calls body(begin, end) on fixed chunks of [0, count). Chunk boundaries do
// not depend on the worker count, so anything written per index is identical
// for every schedule.
template <class Body>
void parallel_chunks(std::uint64_t count, Body&& body, std::uint64_t chunk = 4096) {
  if (count == 0) return;
  const std::uint64_t nchunks = (count + chunk - 1) / chunk;
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(worker_count(), nchunks));
  if (workers <= 1) {
    for (std::uint64_t c = 0; c < nchunks; ++c) body(c * chunk, std::min(count, (c + 1) * chunk));
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        body(c * chunk, std::min(count, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(nchunks);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// out[i] = f(i) for every i, in parallel.
template <class F>
std::vector<double> parallel_map(std::uint64_t count, F&& f) {
  std::vector<double> out(count);
  parallel_chunks(count, [&](std::uint64_t b, std::uint64_t e) {
    for (std::uint64_t i = b; i < e; ++i) out[i] = f(i);
  });
  return out;
}

inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t h = x.size() / 2;
  return pairwise_sum(x.first(h)) + pairwise_sum(x.subspan(h));
}

template <class F>
double pairwise_sum_of(std::span<const double> x, F&& f) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += f(v);
    return s;
  }
  const std::size_t h = x.size() / 2;
  return pairwise_sum_of(x.first(h), f) + pairwise_sum_of(x.subspan(h), f);
}

// Sample mean and standard error of the mean.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

inline Estimate mean_and_stderr(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = pairwise_sum(x) / n;
  if (x.size() < 2) return {mean, 0.0};
  const double ss = pairwise_sum_of(x, [mean](double v) { return (v - mean) * (v - mean); });
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace decoupling
