#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "airtwin/broker_api.hpp"
#include "airtwin/turnaround.hpp"

namespace airtwin {

struct EngineServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8093;
  /// Worker threads in live mode. Updates of one flight always run on the same worker.
  int strands = 4;
};

/// Runs a TurnaroundEngine as a broker client: consumes Flight notifications, writes derived
/// attributes and FlightNotification entities back, and serves
///   GET  /turnaround/status?at=            flights at the airport with delay status
///   GET  /turnaround/links                 inbound/outbound pairs with turn-round times
///   GET  /turnaround/flights/{id}/tasks    task plan of a departure
///   POST /turnaround/flights/{id}/milestones  {"milestone": "AOBT", "at": "..."}
///   POST /turnaround/tasks/{id}            {"status": "completed", "issuer": "..."}
/// Rejected milestones answer 409 (ordering, immutable) and rejected task updates 409 (dependency)
/// or 400 (transition); neither writes to the broker.
class EngineService {
 public:
  EngineService(TurnaroundEngine& engine, BrokerClient broker, const Clock& clock, EngineServiceOptions options = {});
  ~EngineService();

  int start();
  void stop();
  int port() const noexcept { return server_.port(); }
  std::string notify_url() const;
  Subscription subscription() const;

  /// Rebuilds task plans and flight state from the broker. Call before subscribing.
  void restore();

  /// Processes every notification that is ready, in order, on the calling thread.
  /// Returns the number of entity updates handled.
  std::size_t pump();
  /// Live mode: a dispatcher thread feeds the per-flight strands.
  void start_consumer();
  /// True when nothing is buffered or queued.
  bool idle() const;

  std::uint64_t processed() const noexcept { return processed_.load(); }
  std::uint64_t write_failures() const noexcept { return write_failures_.load(); }

 private:
  struct Strand {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<ContextEntity> queue;
    bool busy = false;
    std::jthread thread;
  };

  void handle(const ContextEntity& flight);
  void write(const EntityUpdates& updates);
  void ensure_known(const EntityId& flight);

  TurnaroundEngine& engine_;
  BrokerClient broker_;
  const Clock& clock_;
  EngineServiceOptions options_;
  HttpServer server_;
  NotificationInbox inbox_;
  std::mutex pump_mutex_;
  std::vector<std::unique_ptr<Strand>> strands_;
  std::jthread dispatcher_;
  std::atomic<std::uint64_t> processed_{0};
  std::atomic<std::uint64_t> write_failures_{0};
};

}  // namespace airtwin
