#include <condition_variable>

#include "airtwin/simulator.hpp"

namespace airtwin {

Simulator::Simulator(ScenarioScript script, const Clock& clock, SimulatorOptions options)
    : script_(std::move(script)), clock_(clock), options_(std::move(options)) {
  http_.get("/chroma/flights", [this](const HttpRequest& req) {
    if (!options_.token.empty() && req.header("Authorization").value_or("") != options_.token) {
      return error_response(401, "Unauthorized", "missing or wrong credentials");
    }
    return json_response(200, serve_schedule(script_, clock_.now()).dump());
  });
  http_.get("/sim/positions", [this](const HttpRequest&) {
    return json_response(200, position_frame(script_, clock_.now()).dump());
  });
  http_.get("/sim/status", [this](const HttpRequest&) {
    Json s = Json::object();
    s["now"] = format_timestamp(clock_.now());
    s["airportIATA"] = script_.airport_iata;
    s["flights"] = script_.flights.size();
    s["ticks"] = ticks_.load();
    s["streamClients"] = frames_.client_count();
    return json_response(200, s.dump());
  });
}

Simulator::~Simulator() { stop(); }

void Simulator::start() {
  if (http_.start(options_.host, options_.rest_port) < 0) {
    throw std::runtime_error("simulator cannot listen on port " + std::to_string(options_.rest_port));
  }
  frames_.start(options_.host, options_.tcp_port);
  if (!options_.live_ticker) return;
  ticker_ = std::jthread([this](std::stop_token stop) {
    std::mutex m;
    std::condition_variable_any cv;
    Timestamp next = clock_.now();
    while (!stop.stop_requested()) {
      if (clock_.now() >= next) {
        tick();
        next += Seconds{script_.tick_seconds};
        if (next < clock_.now()) next = clock_.now();
        continue;
      }
      std::unique_lock lock(m);
      cv.wait_for(lock, stop, std::chrono::milliseconds(5), [] { return false; });
    }
  });
}

void Simulator::stop() {
  if (ticker_.joinable()) {
    ticker_.request_stop();
    ticker_.join();
  }
  frames_.stop();
  http_.stop();
}

Json Simulator::tick() {
  std::lock_guard lock(tick_mutex_);
  Json frame = position_frame(script_, clock_.now());
  frames_.broadcast(encode_frame(frame.dump()));
  ++ticks_;
  return frame;
}

}  // namespace airtwin
