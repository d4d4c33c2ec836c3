#include "airtwin/http.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace airtwin {

std::string HttpUrl::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

std::optional<HttpUrl> parse_http_url(std::string_view text) {
  constexpr std::string_view prefix = "http://";
  if (text.substr(0, prefix.size()) != prefix) return std::nullopt;
  text.remove_prefix(prefix.size());
  HttpUrl url;
  url.scheme = "http";
  const auto slash = text.find('/');
  std::string_view authority = text.substr(0, slash);
  url.path = slash == std::string_view::npos ? "/" : std::string(text.substr(slash));
  if (authority.empty()) return std::nullopt;
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    const std::string_view port = authority.substr(colon + 1);
    int value = 0;
    const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || end != port.data() + port.size() || value <= 0 || value > 65535) return std::nullopt;
    url.port = value;
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) return std::nullopt;
  url.host = std::string(authority);
  return url;
}

std::string url_encode(std::string_view text) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += ch;
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

namespace {

std::optional<HttpResponse> convert(const httplib::Result& result) {
  if (!result) return std::nullopt;
  HttpResponse response;
  response.status = result->status;
  response.body = result->body;
  response.content_type = result->get_header_value("Content-Type");
  for (const auto& [k, v] : result->headers) response.headers.emplace(k, v);
  return response;
}

template <typename Fn>
std::optional<HttpResponse> with_client(const std::string& target, const HttpClientOptions& options, Fn&& fn) {
  const auto url = parse_http_url(target);
  if (!url) return std::nullopt;
  httplib::Client client(url->host, url->port);
  client.set_connection_timeout(options.connect_timeout);
  client.set_read_timeout(options.read_timeout);
  client.set_write_timeout(options.read_timeout);
  httplib::Headers headers(options.headers.begin(), options.headers.end());
  return convert(fn(client, url->path, headers));
}

}  // namespace

std::optional<HttpResponse> http_get(const std::string& url, const HttpClientOptions& options) {
  return with_client(url, options, [](httplib::Client& c, const std::string& path, const httplib::Headers& h) {
    return c.Get(path, h);
  });
}

std::optional<HttpResponse> http_post(const std::string& url, const std::string& body, const std::string& content_type,
                                      const HttpClientOptions& options) {
  return with_client(url, options, [&](httplib::Client& c, const std::string& path, const httplib::Headers& h) {
    return c.Post(path, h, body, content_type);
  });
}

std::optional<HttpResponse> http_delete(const std::string& url, const HttpClientOptions& options) {
  return with_client(url, options, [](httplib::Client& c, const std::string& path, const httplib::Headers& h) {
    return c.Delete(path, h);
  });
}

std::optional<std::string> HttpRequest::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> HttpRequest::header(const std::string& name) const {
  for (const auto& [k, v] : headers) {
    if (k.size() == name.size() &&
        std::equal(k.begin(), k.end(), name.begin(), [](char a, char b) { return std::tolower(a) == std::tolower(b); })) {
      return v;
    }
  }
  return std::nullopt;
}

HttpResponse json_response(int status, const std::string& body) { return HttpResponse{status, body}; }

HttpResponse error_response(int status, const std::string& title, const std::string& detail) {
  nlohmann::ordered_json doc;
  doc["type"] = "https://uri.etsi.org/ngsi-ld/errors/" + title;
  doc["title"] = title;
  doc["detail"] = detail;
  return HttpResponse{status, doc.dump(), "application/json"};
}

struct HttpServer::Impl {
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer() : impl_(std::make_unique<Impl>()) {}

HttpServer::~HttpServer() { stop(); }

namespace {

httplib::Server::Handler adapt(HttpHandler handler) {
  return [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    HttpRequest request;
    request.method = req.method;
    request.path = req.path;
    request.body = req.body;
    for (const auto& m : req.matches) request.captures.push_back(m.str());
    for (const auto& [k, v] : req.params) request.params.emplace(k, v);
    for (const auto& [k, v] : req.headers) request.headers.emplace(k, v);
    HttpResponse response;
    try {
      response = handler(request);
    } catch (const std::exception& e) {
      response = error_response(500, "InternalError", e.what());
    }
    res.status = response.status;
    for (const auto& [k, v] : response.headers) res.set_header(k, v);
    if (!response.body.empty()) res.set_content(response.body, response.content_type);
  };
}

}  // namespace

void HttpServer::get(const std::string& pattern, HttpHandler handler) { impl_->server.Get(pattern, adapt(std::move(handler))); }

void HttpServer::post(const std::string& pattern, HttpHandler handler) {
  impl_->server.Post(pattern, adapt(std::move(handler)));
}

void HttpServer::del(const std::string& pattern, HttpHandler handler) {
  impl_->server.Delete(pattern, adapt(std::move(handler)));
}

int HttpServer::start(const std::string& host, int port) {
  // SO_REUSEADDR only: the library default of SO_REUSEPORT lets a second server share a busy port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) return -1;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

bool HttpServer::running() const noexcept { return impl_ && impl_->server.is_running(); }

}  // namespace airtwin
