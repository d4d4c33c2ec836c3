#include "dispatcher.hpp"

namespace airtwin {

NotificationDispatcher::NotificationDispatcher(RetryPolicy policy, int threads, NotificationSender sender,
                                               std::function<bool(const std::string&)> is_live,
                                               std::function<void(const std::string&)> on_delivered)
    : policy_(policy),
      sender_(std::move(sender)),
      is_live_(std::move(is_live)),
      on_delivered_(std::move(on_delivered)) {
  const int n = threads < 1 ? 1 : threads;
  workers_.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) workers_.emplace_back([this] { run(); });
}

NotificationDispatcher::~NotificationDispatcher() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void NotificationDispatcher::enqueue(std::string subscription_id, std::string endpoint, std::string body) {
  {
    std::lock_guard lock(mutex_);
    jobs_.push(Job{std::move(subscription_id), std::move(endpoint), std::move(body), 1,
                   std::chrono::steady_clock::now(), next_order_++});
    ++outstanding_;
    ++queued_;
  }
  work_cv_.notify_one();
}

void NotificationDispatcher::finish_one() {
  std::lock_guard lock(mutex_);
  --outstanding_;
  if (outstanding_ == 0) idle_cv_.notify_all();
}

void NotificationDispatcher::run() {
  std::unique_lock lock(mutex_);
  while (true) {
    if (stopping_) return;
    if (jobs_.empty()) {
      work_cv_.wait(lock);
      continue;
    }
    const auto due = jobs_.top().due;
    if (due > std::chrono::steady_clock::now()) {
      work_cv_.wait_until(lock, due);
      continue;
    }
    Job job = jobs_.top();
    jobs_.pop();
    lock.unlock();

    bool done = true;
    if (is_live_(job.subscription_id)) {
      const int status = sender_(job.endpoint, job.body);
      if (status >= 200 && status < 300) {
        on_delivered_(job.subscription_id);
        std::lock_guard guard(mutex_);
        ++delivered_;
      } else {
        std::lock_guard guard(mutex_);
        ++failed_attempts_;
        if (job.attempt < policy_.max_attempts) {
          job.due = std::chrono::steady_clock::now() + policy_.backoff_before(job.attempt + 1);
          ++job.attempt;
          job.order = next_order_++;
          jobs_.push(std::move(job));
          done = false;
        } else {
          ++dropped_;
        }
      }
    }
    if (done) {
      finish_one();
    } else {
      work_cv_.notify_one();
    }
    lock.lock();
  }
}

bool NotificationDispatcher::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return idle_cv_.wait_for(lock, timeout, [this] { return outstanding_ == 0; });
}

std::uint64_t NotificationDispatcher::queued() const {
  std::lock_guard lock(mutex_);
  return queued_;
}

std::uint64_t NotificationDispatcher::delivered() const {
  std::lock_guard lock(mutex_);
  return delivered_;
}

std::uint64_t NotificationDispatcher::failed_attempts() const {
  std::lock_guard lock(mutex_);
  return failed_attempts_;
}

std::uint64_t NotificationDispatcher::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

}  // namespace airtwin
