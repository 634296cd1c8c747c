#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <vector>

#include "cvmio/error.hpp"

namespace cvmio {

/*
 Bounded single-producer / single-consumer queue.
 Capacity is rounded up to a power of two. push() fails when full instead of
 growing, so callers decide the backpressure policy.
*/
template <typename T>
class SpscQueue {
 public:
  explicit SpscQueue(std::size_t capacity) {
    if (capacity == 0) throw Error(Errc::BadCapacity, "queue capacity 0");
    std::size_t c = 1;
    while (c < capacity) c <<= 1;
    slots_.resize(c);
    mask_ = c - 1;
    limit_ = capacity;
  }

  SpscQueue(const SpscQueue&) = delete;
  SpscQueue& operator=(const SpscQueue&) = delete;

  bool push(T v) {
    std::size_t h = head_.load(std::memory_order_relaxed);
    if (h - tail_.load(std::memory_order_acquire) >= limit_) return false;  // full
    slots_[h & mask_] = std::move(v);
    head_.store(h + 1, std::memory_order_release);
    return true;
  }

  std::optional<T> pop() {
    std::size_t t = tail_.load(std::memory_order_relaxed);
    if (t == head_.load(std::memory_order_acquire)) return std::nullopt;  // empty
    T v = std::move(slots_[t & mask_]);
    tail_.store(t + 1, std::memory_order_release);
    return v;
  }

  /// Consumer-side peek at the oldest element.
  const T* front() const {
    std::size_t t = tail_.load(std::memory_order_relaxed);
    if (t == head_.load(std::memory_order_acquire)) return nullptr;
    return &slots_[t & mask_];
  }

  std::size_t size() const { return head_.load(std::memory_order_acquire) - tail_.load(std::memory_order_acquire); }
  bool empty() const { return size() == 0; }
  std::size_t capacity() const { return limit_; }

 private:
  std::vector<T> slots_;
  std::size_t mask_ = 0;
  std::size_t limit_ = 0;
  alignas(64) std::atomic<std::size_t> head_{0};
  alignas(64) std::atomic<std::size_t> tail_{0};
};

}  // namespace cvmio
