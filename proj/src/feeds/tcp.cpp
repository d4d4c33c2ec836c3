#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>

#include "airtwin/feeds.hpp"

namespace airtwin {

namespace {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

/// Sleeps for `d` unless stop is requested first. Returns false when stopped.
bool sleep_for(std::chrono::milliseconds d, std::stop_token stop) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  return !cv.wait_for(lock, stop, d, [] { return false; }) && !stop.stop_requested();
}

}  // namespace

// ---- FrameServer ------------------------------------------------------------

FrameServer::FrameServer() = default;

FrameServer::~FrameServer() { stop(); }

int FrameServer::start(const std::string& host, int port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("bad listen address " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::jthread([this](std::stop_token stop) { accept_loop(stop); });
  return port_;
}

void FrameServer::accept_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    timeval tv{2, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(mutex_);
    clients_.push_back(fd);
  }
}

void FrameServer::stop() {
  if (acceptor_.joinable()) {
    acceptor_.request_stop();
    acceptor_.join();
  }
  disconnect_all();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

std::size_t FrameServer::broadcast(std::string_view frame) {
  std::lock_guard lock(mutex_);
  std::erase_if(clients_, [&](int fd) {
    if (send_all(fd, frame)) return false;
    ::close(fd);
    return true;
  });
  return clients_.size();
}

void FrameServer::disconnect_all() {
  std::lock_guard lock(mutex_);
  for (const int fd : clients_) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
  clients_.clear();
}

std::size_t FrameServer::client_count() const {
  std::lock_guard lock(mutex_);
  return clients_.size();
}

// ---- TcpSource --------------------------------------------------------------

TcpSource::TcpSource(TcpSourceOptions options) : options_(std::move(options)), backoff_(options_.initial_backoff) {}

TcpSource::~TcpSource() { close_socket(); }

void TcpSource::close_socket() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
    ++disconnects_;
  }
  connected_ = false;
  buffer_.clear();
}

bool TcpSource::connect_once() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (::getaddrinfo(options_.host.c_str(), std::to_string(options_.port).c_str(), &hints, &found) != 0) return false;
  const int fd = ::socket(found->ai_family, found->ai_socktype, found->ai_protocol);
  const bool ok = fd >= 0 && ::connect(fd, found->ai_addr, found->ai_addrlen) == 0;
  ::freeaddrinfo(found);
  if (!ok) {
    if (fd >= 0) ::close(fd);
    return false;
  }
  fd_ = fd;
  connected_ = true;
  ++connects_;
  return true;
}

bool TcpSource::fill(std::size_t n, std::stop_token stop) {
  char chunk[8192];
  while (buffer_.size() < n) {
    if (stop.stop_requested()) return false;
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready == 0) continue;
    if (ready < 0 && errno == EINTR) continue;
    const ssize_t got = ready > 0 ? ::recv(fd_, chunk, sizeof(chunk), 0) : -1;
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) {
      close_socket();
      return false;
    }
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
  return true;
}

std::optional<FlowRecord> TcpSource::next(std::stop_token stop) {
  while (!stop.stop_requested() && !ended_) {
    if (fd_ < 0) {
      if (connects_ > 0 && !options_.reconnect) {
        ended_ = true;
        break;
      }
      if (!connect_once()) {
        if (!sleep_for(backoff_, stop)) break;
        backoff_ = std::min(backoff_ * 2, options_.max_backoff);
        continue;
      }
      backoff_ = options_.initial_backoff;
    }
    if (!fill(4, stop)) continue;
    const auto* b = reinterpret_cast<const unsigned char*>(buffer_.data());
    const std::size_t len = (std::size_t{b[0]} << 24) | (std::size_t{b[1]} << 16) | (std::size_t{b[2]} << 8) | b[3];
    if (len > kMaxFrameBytes) {
      // The stream cannot be resynchronised after a bad length; start over on a fresh connection.
      ++corrupt_;
      close_socket();
      continue;
    }
    if (!fill(4 + len, stop)) continue;
    const std::string body = buffer_.substr(4, len);
    buffer_.erase(0, 4 + len);
    try {
      const Json payload = Json::parse(gzip_decompress(body));
      ++frames_;
      return FlowRecord{payload, {}, options_.source_name, {++sequence_}};
    } catch (const std::exception&) {
      ++corrupt_;
    }
  }
  return std::nullopt;
}

Json TcpSource::status() const {
  Json s = Json::object();
  s["kind"] = "tcp";
  s["address"] = options_.host + ":" + std::to_string(options_.port);
  s["connected"] = connected_.load();
  s["frames"] = frames_.load();
  s["corruptFrames"] = corrupt_.load();
  s["connects"] = connects_.load();
  s["disconnects"] = disconnects_.load();
  return s;
}

}  // namespace airtwin
