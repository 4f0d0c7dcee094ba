#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace neuronlens::orchestrator::detail {

template <class T>
struct Finished {
  std::optional<T> value;
  std::exception_ptr error;
};

// Runs work(i) for i in [0, count) on `workers` threads and hands results to
// sink(i, Finished&) strictly in index order, one call at a time. A sink that
// returns false stops the run: no further items start and nothing after that
// index is delivered.
template <class T, class Work, class Sink>
void run_ordered(std::size_t count, int workers, Work work, Sink sink) {
  std::vector<Finished<T>> slots(count);
  std::vector<char> done(count, 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::size_t delivered = 0;

  auto loop = [&] {
    while (!stop.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      Finished<T> f;
      try {
        f.value.emplace(work(i));
      } catch (...) {
        f.error = std::current_exception();
      }
      std::lock_guard lock(mu);
      slots[i] = std::move(f);
      done[i] = 1;
      while (!stop.load() && delivered < count && done[delivered]) {
        if (!sink(delivered, slots[delivered])) stop = true;
        slots[delivered] = {};
        ++delivered;
      }
    }
  };

  std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
  std::vector<std::jthread> threads;
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(loop);
}

}  // namespace neuronlens::orchestrator::detail
