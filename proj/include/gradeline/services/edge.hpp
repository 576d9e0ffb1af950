#pragma once

// Edge service: layer-1 grading beside the line, layer-2 requests to the
// cloud for ripened fruit only, switch commands back to the conveyor, and
// the HTTP surface used by the operator console.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gradeline/classifiers/model.hpp"
#include "gradeline/image_io.hpp"
#include "gradeline/pipeline.hpp"
#include "gradeline/services/cloud.hpp"
#include "gradeline/services/tcp.hpp"
#include "gradeline/services/wire.hpp"

namespace gradeline::services {

enum class Mode { Auto, Manual };

inline std::string to_string(Mode m) { return m == Mode::Auto ? "Auto" : "Manual"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "Auto" || s == "auto") return Mode::Auto;
  if (s == "Manual" || s == "manual") return Mode::Manual;
  throw InvalidArgument("unknown mode '" + std::string(s) + "'");
}

struct EdgeConfig {
  int cloud_timeout_ms = 5000;
  PipelineConfig pipeline;
  std::size_t max_payload_bytes = std::size_t{32} << 20;
  std::size_t history_limit = 1000;  // events and thumbnails kept for /events replay
  Mode mode = Mode::Auto;
};

struct AuditEntry {
  std::uint64_t seq = 0;
  std::string item_id;
  Route from = Route::Market;
  Route to = Route::Market;
  std::string operator_tag;
  std::string reason;
};

inline nlohmann::json to_json(const AuditEntry& a) {
  return {{"seq", a.seq},           {"item_id", a.item_id},       {"from", to_string(a.from)},
          {"to", to_string(a.to)},  {"operator", a.operator_tag}, {"reason", a.reason}};
}

class EdgeService {
 public:
  EdgeService(const Classifier& clf, std::optional<Endpoint> cloud, EdgeConfig cfg = {})
      : clf_(clf), cfg_(std::move(cfg)), mode_(cfg_.mode) {
    if (cloud) cloud_ = std::make_unique<CloudClient>(*cloud, cfg_.cloud_timeout_ms, cfg_.max_payload_bytes);
  }
  ~EdgeService() { stop(); }

  // Grades one frame exactly as the TCP and HTTP paths do and records the
  // event.
  GradeEvent grade_frame(const std::string& item_id, const RgbImage& img) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [r, fruit] = grade_first_layer(img, clf_, cfg_.pipeline);
    ++frames_;
    if (r.label == Label::Ripened) {
      const auto t = std::chrono::steady_clock::now();
      std::optional<std::vector<Detection>> dets;
      if (cloud_) dets = cloud_->detect(img, fruit);
      apply_layer2(r, dets, cfg_.pipeline.policy);
      r.timings.detect_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
      if (r.degraded) ++degraded_;
    }
    r.timings.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    GradeEvent ev;
    ev.item_id = item_id;
    ev.result = std::move(r);
    ev.thumbnail = "/frames/" + item_id + ".png";
    record(ev, encode_png(img));
    return ev;
  }

  // --- TCP frame endpoint ---------------------------------------------------

  void start(const Endpoint& ep) {
    tcp_.start(ep, cfg_.max_payload_bytes, [this](Connection& c) { session(c); });
  }
  std::uint16_t port() const noexcept { return tcp_.port(); }

  // One line in, response lines out (GradeEvent then SwitchCommand for a
  // frame; Error otherwise).
  std::vector<std::string> handle_line(std::string_view line) {
    WireMessage msg;
    try {
      msg = decode_message(line);
    } catch (const ProtocolError& e) {
      return {encode_message(make_error(e.id(), e.what()))};
    }
    if (msg.type != MessageType::Frame) {
      return {encode_message(make_error(msg.id, "unexpected message type " + to_string(msg.type)))};
    }
    Frame frame;
    try {
      frame = parse_frame(msg.payload);
    } catch (const Error&) {
      return {encode_message(make_error(msg.id, "bad payload"))};
    }
    const GradeEvent ev = grade_frame(frame.item_id, frame.image);
    SwitchCommand sw{ev.item_id, ev.result.route, "", "grade"};
    switches_.fetch_add(1);
    return {encode_message(WireMessage{MessageType::GradeEvent, msg.id, to_json(ev)}),
            encode_message(WireMessage{MessageType::SwitchCommand, "sw-" + ev.item_id, to_json(sw)})};
  }

  // --- HTTP console endpoint ------------------------------------------------

  void start_http(const std::string& host, int port) {
    http_ = std::make_unique<httplib::Server>();
    install_routes(*http_);
    http_port_ = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
    if (http_port_ < 0) throw IoError("bind " + host + ":" + std::to_string(port) + ": address unavailable");
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
  }
  int http_port() const noexcept { return http_port_; }

  void stop() {
    stopping_ = true;
    cv_.notify_all();
    if (http_) http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    tcp_.stop();
  }

  // --- Control --------------------------------------------------------------

  // Applies a console command and returns the acknowledged state. Throws
  // InvalidArgument for malformed commands and a LookupError for unknown
  // items.
  nlohmann::json control(const nlohmann::json& cmd) {
    if (!cmd.is_object() || !cmd.contains("command") || !cmd.at("command").is_string()) {
      throw InvalidArgument("control: missing command");
    }
    const std::string c = cmd.at("command").get<std::string>();
    nlohmann::json ack{{"ok", true}, {"command", c}};
    if (c == "pause" || c == "resume") {
      set_paused(c == "pause");
    } else if (c == "set-mode") {
      if (!cmd.contains("mode") || !cmd.at("mode").is_string()) throw InvalidArgument("control: set-mode needs mode");
      const Mode m = parse_mode(cmd.at("mode").get<std::string>());
      {
        std::lock_guard lock(mu_);
        mode_ = m;
      }
      // The automatic feed only runs in Auto mode.
      set_paused(m == Mode::Manual);
    } else if (c == "override") {
      ack["audit"] = to_json(override_route(cmd));
    } else if (c == "inject") {
      nlohmann::json p = cmd;
      tcp_.broadcast(encode_message(WireMessage{MessageType::Control, "ctl-" + std::to_string(++control_seq_), p}));
    } else {
      throw InvalidArgument("control: unknown command '" + c + "'");
    }
    ack["state"] = state();
    return ack;
  }

  nlohmann::json state() const {
    std::lock_guard lock(mu_);
    return {{"mode", to_string(mode_)},
            {"paused", paused_},
            {"frames", frames_.load()},
            {"cloud_requests", cloud_requests()},
            {"cloud_bytes", cloud_bytes()},
            {"degraded", degraded_.load()},
            {"switch_commands", switches_.load()}};
  }

  Mode mode() const {
    std::lock_guard lock(mu_);
    return mode_;
  }

  // Events with seq > since, oldest first.
  std::vector<nlohmann::json> events_since(std::uint64_t since) const {
    std::lock_guard lock(mu_);
    std::vector<nlohmann::json> out;
    for (const auto& e : events_) {
      if (e.at("seq").get<std::uint64_t>() > since) out.push_back(e);
    }
    return out;
  }

  std::vector<AuditEntry> audit_log() const {
    std::lock_guard lock(mu_);
    return audit_;
  }

  std::size_t frames() const noexcept { return frames_.load(); }
  std::size_t cloud_requests() const noexcept { return cloud_ ? cloud_->requests() : 0; }
  std::size_t cloud_bytes() const noexcept { return cloud_ ? cloud_->bytes_sent() : 0; }
  std::size_t degraded() const noexcept { return degraded_.load(); }
  std::size_t switch_commands() const noexcept { return switches_.load(); }

 private:
  void session(Connection& conn) {
    std::string line;
    while (tcp_.running()) {
      switch (conn.read_line(line, 200)) {
        case LineReader::Status::Timeout: continue;
        case LineReader::Status::Eof: return;
        case LineReader::Status::TooLong:
          conn.send_line(encode_message(make_error("", "payload too large")));
          continue;
        case LineReader::Status::Line:
          if (line.empty()) continue;
          for (const auto& out : handle_line(line)) conn.send_line(out);
          continue;
      }
    }
  }

  void set_paused(bool paused) {
    {
      std::lock_guard lock(mu_);
      paused_ = paused;
    }
    const nlohmann::json p{{"command", paused ? "pause" : "resume"}};
    tcp_.broadcast(encode_message(WireMessage{MessageType::Control, "ctl-" + std::to_string(++control_seq_), p}));
    push_event({{"kind", "state"}, {"mode", to_string(mode())}, {"paused", paused}});
  }

  AuditEntry override_route(const nlohmann::json& cmd) {
    if (!cmd.contains("item_id") || !cmd.at("item_id").is_string()) throw InvalidArgument("control: override needs item_id");
    if (!cmd.contains("route") || !cmd.at("route").is_string()) throw InvalidArgument("control: override needs route");
    AuditEntry a;
    a.item_id = cmd.at("item_id").get<std::string>();
    a.to = parse_route(cmd.at("route").get<std::string>());
    a.operator_tag = cmd.value("operator", std::string("operator"));
    if (a.operator_tag.empty()) throw InvalidArgument("control: override needs an operator tag");
    a.reason = cmd.value("reason", std::string("operator override"));
    {
      std::lock_guard lock(mu_);
      auto it = routes_.find(a.item_id);
      if (it == routes_.end()) throw LookupError("unknown item '" + a.item_id + "'");
      a.from = it->second;
      it->second = a.to;
      a.seq = audit_.size() + 1;
      audit_.push_back(a);
    }
    const SwitchCommand sw{a.item_id, a.to, a.operator_tag, a.reason};
    switches_.fetch_add(1);
    tcp_.broadcast(encode_message(WireMessage{MessageType::SwitchCommand, "ovr-" + std::to_string(a.seq), to_json(sw)}));
    nlohmann::json ev = to_json(sw);
    ev["kind"] = "override";
    ev["previous_route"] = to_string(a.from);
    push_event(std::move(ev));
    return a;
  }

  void record(GradeEvent& ev, Bytes png) {
    std::lock_guard lock(mu_);
    ev.seq = ++seq_;
    routes_[ev.item_id] = ev.result.route;
    thumbnails_[ev.item_id] = std::move(png);
    thumb_order_.push_back(ev.item_id);
    while (thumb_order_.size() > cfg_.history_limit) {
      thumbnails_.erase(thumb_order_.front());
      thumb_order_.pop_front();
    }
    nlohmann::json j = to_json(ev);
    j["kind"] = "grade";
    push_locked(std::move(j), false);
  }

  void push_event(nlohmann::json j) {
    std::lock_guard lock(mu_);
    push_locked(std::move(j), true);
  }

  void push_locked(nlohmann::json j, bool assign_seq) {
    if (assign_seq) j["seq"] = ++seq_;
    events_.push_back(std::move(j));
    while (events_.size() > cfg_.history_limit) events_.pop_front();
    cv_.notify_all();
  }

  static void json_reply(httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  void install_routes(httplib::Server& s) {
    s.set_payload_max_length(cfg_.max_payload_bytes);
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    s.Post("/grade", [this](const httplib::Request& req, httplib::Response& res) {
      if (mode() != Mode::Manual) {
        json_reply(res, 409, {{"error", "manual upload refused: edge is in Auto mode"}});
        return;
      }
      RgbImage img;
      std::string item_id = "manual-" + std::to_string(++manual_seq_);
      try {
        if (req.get_header_value("Content-Type").starts_with("application/json")) {
          const auto j = nlohmann::json::parse(req.body);
          img = image_from_base64(j.at("image"));
          item_id = j.value("item_id", item_id);
        } else {
          img = decode_image(Bytes(req.body.begin(), req.body.end()));
        }
      } catch (const std::exception& e) {
        json_reply(res, 400, {{"error", std::string("bad image: ") + e.what()}});
        return;
      }
      json_reply(res, 200, to_json(grade_frame(item_id, img)));
    });

    s.Post("/control", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        json_reply(res, 200, control(nlohmann::json::parse(req.body)));
      } catch (const LookupError& e) {
        json_reply(res, 404, {{"ok", false}, {"error", e.what()}});
      } catch (const std::exception& e) {
        json_reply(res, 400, {{"ok", false}, {"error", e.what()}});
      }
    });

    s.Get("/state", [this](const httplib::Request&, httplib::Response& res) { json_reply(res, 200, state()); });

    s.Get("/audit", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& e : audit_log()) a.push_back(to_json(e));
      json_reply(res, 200, a);
    });

    s.Get(R"(/frames/(.+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      auto it = thumbnails_.find(req.matches[1]);
      if (it == thumbnails_.end()) {
        res.status = 404;
        return;
      }
      res.set_content(std::string(it->second.begin(), it->second.end()), "image/png");
    });

    // Server-sent events. ?since=N (or Last-Event-ID) replays history first;
    // ?format=json returns the history as one JSON array instead.
    s.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t since = 0;
      try {
        if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
        else if (req.has_header("Last-Event-ID")) since = std::stoull(req.get_header_value("Last-Event-ID"));
      } catch (const std::exception&) {
        json_reply(res, 400, {{"error", "bad since"}});
        return;
      }
      if (req.get_param_value("format") == "json") {
        json_reply(res, 200, events_since(since));
        return;
      }
      auto cursor = std::make_shared<std::uint64_t>(since);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) {
        std::vector<nlohmann::json> batch;
        {
          std::unique_lock lock(mu_);
          cv_.wait_for(lock, std::chrono::milliseconds(250),
                       [&] { return stopping_.load() || (!events_.empty() && events_.back().at("seq") > *cursor); });
          if (stopping_) {
            sink.done();
            return true;
          }
          for (const auto& e : events_) {
            if (e.at("seq").get<std::uint64_t>() > *cursor) batch.push_back(e);
          }
        }
        std::string chunk;
        for (const auto& e : batch) {
          *cursor = e.at("seq").get<std::uint64_t>();
          chunk += "id: " + std::to_string(*cursor) + "\nevent: " + e.value("kind", std::string("grade")) +
                   "\ndata: " + e.dump() + "\n\n";
        }
        if (chunk.empty()) chunk = ": keep-alive\n\n";
        return sink.write(chunk.data(), chunk.size());
      });
    });
  }

  const Classifier& clf_;
  EdgeConfig cfg_;
  std::unique_ptr<CloudClient> cloud_;
  LineServer tcp_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
  int http_port_ = -1;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::atomic<bool> stopping_{false};
  Mode mode_;
  bool paused_ = false;
  std::uint64_t seq_ = 0;
  std::deque<nlohmann::json> events_;
  std::map<std::string, Route> routes_;
  std::map<std::string, Bytes> thumbnails_;
  std::deque<std::string> thumb_order_;
  std::vector<AuditEntry> audit_;

  std::atomic<std::size_t> frames_{0};
  std::atomic<std::size_t> degraded_{0};
  std::atomic<std::size_t> switches_{0};
  std::atomic<std::uint64_t> control_seq_{0};
  std::atomic<std::uint64_t> manual_seq_{0};
};

}  // namespace gradeline::services
