#pragma once

// Conveyor simulator: emits synthetic fruit at a fixed rate, streams frames to
// the edge service, applies the returned switch commands and keeps the
// (ground truth, route) log used to score a run.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/pipeline.hpp"
#include "gradeline/services/tcp.hpp"
#include "gradeline/services/wire.hpp"
#include "gradeline/synthetic.hpp"

namespace gradeline::services {

struct ClassMix {
  double unripened = 1.0;
  double ripened = 1.0;
  double overripened = 1.0;
};

struct SimulatorConfig {
  double rate = 2.0;        // items per second
  ClassMix mix;
  std::uint64_t seed = 0;
  std::size_t count = 0;    // items to emit; 0 runs until stop()
  std::size_t buffer_limit = 64;
  int jitter_bound_ms = 50; // allowed lateness of an emission
  int connect_timeout_ms = 1000;
  int drain_timeout_ms = 30000;  // wait for outstanding routes after the last item
  GeneratorConfig generator;
  RoutingPolicy policy;     // expected routes for scoring

  void validate() const {
    if (!(rate > 0.0)) throw InvalidArgument("simulator: rate must be > 0");
    if (mix.unripened < 0 || mix.ripened < 0 || mix.overripened < 0 ||
        mix.unripened + mix.ripened + mix.overripened <= 0) {
      throw InvalidArgument("simulator: class mix must have a positive weight");
    }
  }
};

struct LineItem {
  std::string item_id;
  RgbImage image;
  SyntheticTruth truth;
  std::chrono::steady_clock::time_point arrival;
  std::optional<Route> route;
};

struct RouteRecord {
  std::string item_id;
  Label truth_label = Label::Ripened;
  std::optional<Subclass> truth_subclass;
  std::optional<GradeResult> result;  // as reported by the edge
  std::optional<Route> route;         // last switch command applied
  Route expected = Route::Market;
  std::string operator_tag;
  double arrival_s = 0.0;  // since simulator start
};

inline Route expected_route(Label label, std::optional<Subclass> subclass, const RoutingPolicy& p) {
  switch (label) {
    case Label::Unripened: return p.unripened;
    case Label::Overripened: return p.overripened;
    case Label::Ripened:
      return subclass == Subclass::WellRipened ? p.well_ripened : p.mid_ripened;
  }
  return Route::Defective;
}

inline nlohmann::json to_json(const RouteRecord& r) {
  nlohmann::json j{{"item_id", r.item_id},
                   {"truth_label", to_string(r.truth_label)},
                   {"expected_route", to_string(r.expected)},
                   {"arrival_s", r.arrival_s}};
  j["truth_subclass"] = r.truth_subclass ? nlohmann::json(to_string(*r.truth_subclass)) : nlohmann::json(nullptr);
  j["route"] = r.route ? nlohmann::json(to_string(*r.route)) : nlohmann::json(nullptr);
  j["result"] = r.result ? to_json(*r.result) : nlohmann::json(nullptr);
  j["operator"] = r.operator_tag.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.operator_tag);
  return j;
}

// Injected item request: a class (and optional subclass/spot count).
struct InjectRequest {
  Label label = Label::Ripened;
  std::optional<Subclass> subclass;
  std::optional<int> spots;
};

class Simulator {
 public:
  Simulator(Endpoint edge, SimulatorConfig cfg) : edge_(std::move(edge)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
  }
  ~Simulator() {
    stop();
    disconnect();
  }

  // Observer called for every generated item before it is sent.
  void on_item(std::function<void(const LineItem&)> f) { on_item_ = std::move(f); }

  // Blocks until `count` items were emitted and routed (or the drain timeout
  // expires), or until stop().
  void run() {
    const auto start = std::chrono::steady_clock::now();
    start_ = start;
    auto next = start;
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg_.rate));
    while (!stopped_ && (cfg_.count == 0 || emitted_ < cfg_.count)) {
      {
        std::unique_lock lock(mu_);
        if (paused_) {
          cv_.wait(lock, [&] { return !paused_ || stopped_; });
          next = std::chrono::steady_clock::now();
          continue;
        }
        cv_.wait_until(lock, next, [&] { return paused_ || stopped_.load(); });
        if (paused_ || stopped_) continue;
      }
      const auto now = std::chrono::steady_clock::now();
      lateness_ms_ = std::max(lateness_ms_, std::chrono::duration<double, std::milli>(now - next).count());
      emit_one(now);
      next += period;
    }
    drain();
  }

  void stop() {
    stopped_ = true;
    cv_.notify_all();
  }
  void pause() {
    std::lock_guard lock(mu_);
    paused_ = true;
    cv_.notify_all();
  }
  void resume() {
    std::lock_guard lock(mu_);
    paused_ = false;
    cv_.notify_all();
  }
  bool paused() const {
    std::lock_guard lock(mu_);
    return paused_;
  }
  void inject(InjectRequest r) {
    std::lock_guard lock(mu_);
    injected_.push_back(r);
  }

  std::size_t emitted() const noexcept { return emitted_.load(); }
  std::size_t dropped() const noexcept { return dropped_.load(); }
  std::size_t sent() const noexcept { return sent_.load(); }
  double max_lateness_ms() const noexcept { return lateness_ms_; }

  std::vector<RouteRecord> routing_log() const {
    std::lock_guard lock(mu_);
    std::vector<RouteRecord> out;
    out.reserve(order_.size());
    for (const auto& id : order_) out.push_back(records_.at(id));
    return out;
  }

  // Fraction of emitted items whose applied route matches the ground truth.
  double line_accuracy() const {
    const auto log = routing_log();
    if (log.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& r : log) ok += r.route == r.expected ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(log.size());
  }

  nlohmann::json report() const {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& r : routing_log()) items.push_back(to_json(r));
    return {{"emitted", emitted()},
            {"sent", sent()},
            {"dropped", dropped()},
            {"line_accuracy", line_accuracy()},
            {"max_lateness_ms", max_lateness_ms()},
            {"items", items}};
  }

 private:
  LineItem make_item(std::chrono::steady_clock::time_point now) {
    std::optional<InjectRequest> inj;
    {
      std::lock_guard lock(mu_);
      if (!injected_.empty()) {
        inj = injected_.front();
        injected_.pop_front();
      }
    }
    Label label;
    std::optional<Subclass> subclass;
    std::optional<int> spots;
    if (inj) {
      label = inj->label;
      subclass = inj->subclass;
      spots = inj->spots;
      if (label == Label::Ripened && spots && !subclass) subclass = ripeness_subclass(static_cast<std::size_t>(*spots));
    } else {
      std::discrete_distribution<int> pick({cfg_.mix.unripened, cfg_.mix.ripened, cfg_.mix.overripened});
      label = label_from_index(static_cast<std::size_t>(pick(rng_)));
    }
    const SyntheticSpec spec = sample_spec(label, subclass, rng_(), cfg_.generator, spots);
    SyntheticFrame frame = generate_synthetic(spec);
    std::ostringstream id;
    id << "item-" << std::setw(6) << std::setfill('0') << (emitted_ + 1);
    return LineItem{id.str(), std::move(frame.image), std::move(frame.truth), now, std::nullopt};
  }

  void emit_one(std::chrono::steady_clock::time_point now) {
    LineItem item = make_item(now);
    if (on_item_) on_item_(item);
    {
      std::lock_guard lock(mu_);
      RouteRecord r;
      r.item_id = item.item_id;
      r.truth_label = item.truth.label;
      r.truth_subclass = item.truth.subclass;
      r.expected = expected_route(item.truth.label, item.truth.subclass, cfg_.policy);
      r.arrival_s = std::chrono::duration<double>(now - start_).count();
      records_[item.item_id] = r;
      order_.push_back(item.item_id);
    }
    ++emitted_;
    std::string line = encode_message(make_frame("f-" + item.item_id, item.item_id, item.image));
    std::lock_guard lock(send_mu_);
    if (buffer_.size() >= cfg_.buffer_limit) {
      ++dropped_;
    } else {
      buffer_.push_back(std::move(line));
    }
    flush();
  }

  // Sends buffered frames in order while the edge is reachable.
  void flush() {
    while (!buffer_.empty()) {
      if (!conn_ && !connect()) return;
      try {
        conn_->send_line(buffer_.front());
      } catch (const Error&) {
        disconnect_locked();
        return;
      }
      buffer_.pop_front();
      ++sent_;
    }
  }

  bool connect() {
    try {
      conn_ = std::make_shared<Connection>(connect_tcp(edge_, cfg_.connect_timeout_ms), std::size_t{64} << 20);
    } catch (const Error&) {
      return false;
    }
    reading_ = true;
    reader_ = std::thread([this, c = conn_] { read_loop(c); });
    return true;
  }

  void disconnect() {
    std::lock_guard lock(send_mu_);
    disconnect_locked();
  }

  void disconnect_locked() {
    reading_ = false;
    if (conn_) conn_->shutdown();
    if (reader_.joinable()) reader_.join();
    conn_.reset();
  }

  void read_loop(std::shared_ptr<Connection> conn) {
    std::string line;
    while (reading_) {
      const auto st = conn->read_line(line, 200);
      if (st == LineReader::Status::Timeout || st == LineReader::Status::TooLong) continue;
      if (st == LineReader::Status::Eof) break;
      try {
        handle(decode_message(line));
      } catch (const Error&) {
      }
    }
  }

  void handle(const WireMessage& msg) {
    if (msg.type == MessageType::GradeEvent) {
      const GradeEvent ev = grade_event_from_json(msg.payload);
      std::lock_guard lock(mu_);
      if (auto it = records_.find(ev.item_id); it != records_.end()) it->second.result = ev.result;
      cv_.notify_all();
    } else if (msg.type == MessageType::SwitchCommand) {
      const SwitchCommand sw = switch_command_from_json(msg.payload);
      std::lock_guard lock(mu_);
      if (auto it = records_.find(sw.item_id); it != records_.end()) {
        it->second.route = sw.route;
        if (!sw.operator_tag.empty()) it->second.operator_tag = sw.operator_tag;
      }
      cv_.notify_all();
    } else if (msg.type == MessageType::Control) {
      const std::string cmd = msg.payload.value("command", std::string());
      if (cmd == "pause") pause();
      if (cmd == "resume") resume();
      if (cmd == "inject") {
        try {
          InjectRequest r;
          r.label = parse_label(msg.payload.at("label").get<std::string>());
          if (msg.payload.contains("subclass") && msg.payload.at("subclass").is_string()) {
            r.subclass = parse_subclass(msg.payload.at("subclass").get<std::string>());
          }
          if (msg.payload.contains("spots") && msg.payload.at("spots").is_number_integer()) {
            r.spots = msg.payload.at("spots").get<int>();
          }
          inject(r);
        } catch (const std::exception&) {
        }
      }
    }
  }

  void drain() {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.drain_timeout_ms);
    for (;;) {
      {
        std::lock_guard lock(send_mu_);
        flush();
      }
      std::unique_lock lock(mu_);
      const auto pending = [&] {
        std::size_t n = 0;
        for (const auto& [id, r] : records_) n += (r.route && r.result) ? 0 : 1;
        return n;
      };
      if (pending() <= dropped_ || std::chrono::steady_clock::now() >= deadline) return;
      cv_.wait_for(lock, std::chrono::milliseconds(100));
    }
  }

  Endpoint edge_;
  SimulatorConfig cfg_;
  std::mt19937_64 rng_;
  std::function<void(const LineItem&)> on_item_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool paused_ = false;
  std::atomic<bool> stopped_{false};
  std::deque<InjectRequest> injected_;
  std::map<std::string, RouteRecord> records_;
  std::vector<std::string> order_;
  std::chrono::steady_clock::time_point start_;
  double lateness_ms_ = 0.0;

  std::mutex send_mu_;
  std::deque<std::string> buffer_;
  std::shared_ptr<Connection> conn_;
  std::thread reader_;
  std::atomic<bool> reading_{false};

  std::atomic<std::size_t> emitted_{0};
  std::atomic<std::size_t> dropped_{0};
  std::atomic<std::size_t> sent_{0};
};

}  // namespace gradeline::services
