#pragma once

// Layer-2 service: answers DetectRequest with the detector's boxes and the
// defect-count subclass. Also the client the edge uses to reach it.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gradeline/detection.hpp"
#include "gradeline/segmentation.hpp"
#include "gradeline/services/tcp.hpp"
#include "gradeline/services/wire.hpp"

namespace gradeline::services {

struct CloudConfig {
  std::size_t max_payload_bytes = std::size_t{32} << 20;  // per line
  SegmentationConfig segmentation;                         // used when a request has no mask
};

class CloudService {
 public:
  CloudService(const Detector& detector, CloudConfig cfg = {}) : detector_(detector), cfg_(std::move(cfg)) {}
  ~CloudService() { stop(); }

  void start(const Endpoint& ep) {
    server_.start(ep, cfg_.max_payload_bytes, [this](Connection& c) { session(c); });
  }
  void stop() { server_.stop(); }
  std::uint16_t port() const noexcept { return server_.port(); }

  std::size_t requests() const noexcept { return requests_.load(); }
  std::size_t errors() const noexcept { return errors_.load(); }

  // Pure request handling, one line in, one line out.
  std::string handle_line(std::string_view line) {
    WireMessage msg;
    try {
      msg = decode_message(line);
    } catch (const ProtocolError& e) {
      ++errors_;
      return encode_message(make_error(e.id(), e.what()));
    }
    if (msg.type != MessageType::DetectRequest) {
      ++errors_;
      return encode_message(make_error(msg.id, "unexpected message type " + to_string(msg.type)));
    }
    ++requests_;
    try {
      const DetectRequest req = parse_detect_request(msg.payload);
      const Mask fruit = req.fruit ? *req.fruit : segment(req.image, cfg_.segmentation);
      return encode_message(make_detect_response(msg.id, detector_.detect(req.image, fruit)));
    } catch (const FormatError&) {
      ++errors_;
      return encode_message(make_error(msg.id, "bad payload"));
    } catch (const Error& e) {
      ++errors_;
      return encode_message(make_error(msg.id, e.what()));
    }
  }

 private:
  void session(Connection& conn) {
    std::string line;
    while (server_.running()) {
      switch (conn.read_line(line, 200)) {
        case LineReader::Status::Timeout: continue;
        case LineReader::Status::Eof: return;
        case LineReader::Status::TooLong:
          ++errors_;
          conn.send_line(encode_message(make_error("", "payload too large")));
          continue;
        case LineReader::Status::Line:
          if (line.empty()) continue;
          conn.send_line(handle_line(line));
          continue;
      }
    }
  }

  const Detector& detector_;
  CloudConfig cfg_;
  LineServer server_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> errors_{0};
};

// Persistent connection to the cloud service. Calls are serialized; any
// failure drops the connection and the next call reconnects.
class CloudClient {
 public:
  CloudClient(Endpoint ep, int timeout_ms = 5000, std::size_t max_line = std::size_t{32} << 20)
      : ep_(std::move(ep)), timeout_ms_(timeout_ms), max_line_(max_line) {}

  const Endpoint& endpoint() const noexcept { return ep_; }

  // Empty when the cloud is unreachable, times out or answers with Error.
  std::optional<std::vector<Detection>> detect(const RgbImage& img, const Mask& fruit) {
    std::lock_guard lock(mu_);
    const std::string id = "d" + std::to_string(++next_id_);
    const std::string line = encode_message(make_detect_request(id, img, &fruit));
    ++requests_;
    try {
      if (!fd_.valid()) {
        fd_ = connect_tcp(ep_, timeout_ms_);
        reader_.emplace(fd_.get(), max_line_);
      }
      send_all(fd_.get(), line + "\n");
      bytes_sent_ += line.size() + 1;
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
      std::string reply;
      for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) break;
        const auto st = reader_->read_line(reply, static_cast<int>(left.count()));
        if (st != LineReader::Status::Line) break;
        const WireMessage msg = decode_message(reply);
        if (msg.id != id) continue;  // stale answer to an abandoned request
        if (msg.type == MessageType::DetectResponse) return parse_detect_response(msg.payload).detections;
        ++failures_;
        return std::nullopt;
      }
    } catch (const Error&) {
    }
    ++failures_;
    fd_.reset();
    reader_.reset();
    return std::nullopt;
  }

  std::size_t requests() const noexcept { return requests_.load(); }
  std::size_t bytes_sent() const noexcept { return bytes_sent_.load(); }
  std::size_t failures() const noexcept { return failures_.load(); }

 private:
  Endpoint ep_;
  int timeout_ms_;
  std::size_t max_line_;
  std::mutex mu_;
  Fd fd_;
  std::optional<LineReader> reader_;
  std::uint64_t next_id_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> bytes_sent_{0};
  std::atomic<std::size_t> failures_{0};
};

}  // namespace gradeline::services
