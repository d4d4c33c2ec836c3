#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "airtwin/http.hpp"
#include "airtwin/pipeline.hpp"
#include "airtwin/time.hpp"

namespace airtwin {

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// gzip container (RFC 1952) via zlib.
std::string gzip_compress(std::string_view data);
/// Throws FrameError on corrupt or truncated input.
std::string gzip_decompress(std::string_view data);

/// Position stream framing: 4-byte big-endian length, then that many bytes of gzip data.
std::string encode_frame(std::string_view payload);
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

/// Accepts TCP clients and writes the same frames to all of them. Clients only see frames broadcast
/// after they connect; a client that stops reading is disconnected.
class FrameServer {
 public:
  FrameServer();
  ~FrameServer();
  FrameServer(const FrameServer&) = delete;
  FrameServer& operator=(const FrameServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws std::runtime_error on failure.
  int start(const std::string& host, int port);
  void stop();
  int port() const noexcept { return port_; }

  /// Sends `frame` (already encoded) to every connected client. Returns the number reached.
  std::size_t broadcast(std::string_view frame);
  /// Closes every client connection but keeps listening.
  void disconnect_all();
  std::size_t client_count() const;

 private:
  void accept_loop(std::stop_token stop);

  int listen_fd_ = -1;
  int port_ = -1;
  mutable std::mutex mutex_;
  std::vector<int> clients_;
  std::jthread acceptor_;
};

struct TcpSourceOptions {
  std::string host = "127.0.0.1";
  int port = 8091;
  std::string source_name = "planefinder";
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds max_backoff{5000};
  /// When false, the first disconnect ends the stream.
  bool reconnect = true;
};

/// Reads framed gzip JSON documents; one FlowRecord per frame.
class TcpSource final : public Source {
 public:
  explicit TcpSource(TcpSourceOptions options);
  ~TcpSource() override;

  std::optional<FlowRecord> next(std::stop_token stop) override;
  /// {"kind":"tcp","connected","frames","corruptFrames","connects","disconnects"}
  Json status() const override;

  std::uint64_t frames() const noexcept { return frames_; }
  std::uint64_t corrupt_frames() const noexcept { return corrupt_; }
  std::uint64_t connects() const noexcept { return connects_; }

 private:
  bool connect_once();
  void close_socket();
  /// Fills buffer_ until it holds `n` bytes. False on disconnect or stop.
  bool fill(std::size_t n, std::stop_token stop);

  TcpSourceOptions options_;
  int fd_ = -1;
  std::string buffer_;
  std::chrono::milliseconds backoff_;
  bool ended_ = false;
  std::uint64_t sequence_ = 0;
  std::atomic<bool> connected_{false};
  std::atomic<std::uint64_t> frames_{0};
  std::atomic<std::uint64_t> corrupt_{0};
  std::atomic<std::uint64_t> connects_{0};
  std::atomic<std::uint64_t> disconnects_{0};
};

struct RestPollerOptions {
  std::string url;
  std::int64_t interval_seconds = 60;
  std::string source_name = "chroma";
  HttpClientOptions http;
};

/// Issues a GET every interval of the given clock; each 2xx JSON body becomes one FlowRecord.
/// Missed ticks are skipped rather than replayed.
class RestPoller final : public Source {
 public:
  RestPoller(RestPollerOptions options, const Clock& clock);

  std::optional<FlowRecord> next(std::stop_token stop) override;
  /// One request now; nullopt and a failure count on error. The record sequence is the tick number.
  std::optional<FlowRecord> poll_once();
  /// {"kind":"http-poll","polls","failures","lastStatus"}
  Json status() const override;

  std::uint64_t polls() const noexcept { return polls_; }
  std::uint64_t failures() const noexcept { return failures_; }

 private:
  RestPollerOptions options_;
  const Clock& clock_;
  std::optional<Timestamp> due_;
  std::atomic<std::uint64_t> polls_{0};
  std::atomic<std::uint64_t> failures_{0};
  std::atomic<int> last_status_{0};
};

}  // namespace airtwin
