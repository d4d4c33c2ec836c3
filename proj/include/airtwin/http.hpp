#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace airtwin {

struct HttpUrl {
  std::string scheme;
  std::string host;
  int port = 80;
  std::string path = "/";

  /// "http://host:port", the part an HTTP client connects to.
  std::string origin() const;
};

/// Parses absolute http:// URLs. Returns nullopt for anything else.
std::optional<HttpUrl> parse_http_url(std::string_view text);

using HttpHeaders = std::multimap<std::string, std::string>;

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  HttpHeaders headers;
};

struct HttpClientOptions {
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{5000};
  HttpHeaders headers;
};

/// Blocking requests. nullopt means no response was received (refused, timed out, bad URL).
std::optional<HttpResponse> http_get(const std::string& url, const HttpClientOptions& options = {});
std::optional<HttpResponse> http_post(const std::string& url, const std::string& body, const std::string& content_type,
                                      const HttpClientOptions& options = {});
std::optional<HttpResponse> http_delete(const std::string& url, const HttpClientOptions& options = {});

/// Percent-encodes a query parameter value.
std::string url_encode(std::string_view text);

struct HttpRequest {
  std::string method;
  std::string path;
  std::string body;
  /// Regex captures from the route pattern; index 0 is the whole path.
  std::vector<std::string> captures;
  std::multimap<std::string, std::string> params;
  HttpHeaders headers;

  std::optional<std::string> param(const std::string& name) const;
  std::optional<std::string> header(const std::string& name) const;
};

using HttpHandler = std::function<HttpResponse(const HttpRequest&)>;

/// Small routing HTTP server running its accept loop on a background thread.
class HttpServer {
 public:
  HttpServer();
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// `pattern` is a regular expression over the path, as in "/entities/(.+)".
  void get(const std::string& pattern, HttpHandler handler);
  void post(const std::string& pattern, HttpHandler handler);
  void del(const std::string& pattern, HttpHandler handler);

  /// Binds and starts serving. Port 0 picks a free port. Returns the bound port, or -1.
  int start(const std::string& host, int port);
  void stop();
  int port() const noexcept { return port_; }
  bool running() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;
};

HttpResponse json_response(int status, const std::string& body);
/// {"type": ..., "title": ..., "detail": ...} problem document.
HttpResponse error_response(int status, const std::string& title, const std::string& detail);

}  // namespace airtwin
