#pragma once

#include <condition_variable>
#include <cstddef>
#include <mutex>

namespace tmd {

/// Counting limiter for in-flight calls. A limit of 0 means unlimited.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit = 0) : limit_(limit) {}

  void acquire() {
    if (limit_ == 0) return;
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
  }

  void release() {
    if (limit_ == 0) return;
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t limit_;
  std::size_t in_flight_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

class InFlightGuard {
 public:
  explicit InFlightGuard(InFlightLimiter& l) : limiter_(l) { limiter_.acquire(); }
  ~InFlightGuard() { limiter_.release(); }
  InFlightGuard(const InFlightGuard&) = delete;
  InFlightGuard& operator=(const InFlightGuard&) = delete;

 private:
  InFlightLimiter& limiter_;
};

}  // namespace tmd
