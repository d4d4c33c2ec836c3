#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "airtwin/broker.hpp"

namespace airtwin {

/// Delivers notification bodies on a small worker pool. Failed attempts are rescheduled on a delay
/// queue rather than slept on, so one slow endpoint does not hold back other deliveries.
class NotificationDispatcher {
 public:
  struct Job {
    std::string subscription_id;
    std::string endpoint;
    std::string body;
    int attempt = 1;
    std::chrono::steady_clock::time_point due{};
    std::uint64_t order = 0;
  };

  NotificationDispatcher(RetryPolicy policy, int threads, NotificationSender sender,
                         std::function<bool(const std::string&)> is_live,
                         std::function<void(const std::string&)> on_delivered);
  ~NotificationDispatcher();

  void enqueue(std::string subscription_id, std::string endpoint, std::string body);
  bool wait_idle(std::chrono::milliseconds timeout) const;

  std::uint64_t queued() const;
  std::uint64_t delivered() const;
  std::uint64_t failed_attempts() const;
  std::uint64_t dropped() const;

 private:
  struct Later {
    bool operator()(const Job& a, const Job& b) const {
      return a.due != b.due ? a.due > b.due : a.order > b.order;
    }
  };

  void run();
  void finish_one();

  RetryPolicy policy_;
  NotificationSender sender_;
  std::function<bool(const std::string&)> is_live_;
  std::function<void(const std::string&)> on_delivered_;

  mutable std::mutex mutex_;
  std::condition_variable work_cv_;
  mutable std::condition_variable idle_cv_;
  std::priority_queue<Job, std::vector<Job>, Later> jobs_;
  std::size_t outstanding_ = 0;
  std::uint64_t next_order_ = 0;
  std::uint64_t queued_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t failed_attempts_ = 0;
  std::uint64_t dropped_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace airtwin
