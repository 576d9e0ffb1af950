#include <gtest/gtest.h>

#include <httplib.h>

#include <future>
#include <thread>

#include "gradeline/services/cloud.hpp"
#include "gradeline/services/edge.hpp"
#include "gradeline/services/simulator.hpp"
#include "support/test_support.hpp"

using namespace gradeline;
using namespace gradeline::services;
using testing_support::shared_classifier;
using testing_support::synthetic;

namespace {

const Endpoint kAnyPort{"127.0.0.1", 0};

// Line client for poking a server directly.
class RawClient {
 public:
  explicit RawClient(std::uint16_t port) : conn_(connect_tcp({"127.0.0.1", port}, 2000), std::size_t{64} << 20) {}
  void send(std::string_view line) { conn_.send_line(line); }
  WireMessage receive(int timeout_ms = 10000) {
    std::string line;
    const auto st = conn_.read_line(line, timeout_ms);
    if (st != LineReader::Status::Line) throw IoError("no reply");
    return decode_message(line);
  }

 private:
  Connection conn_;
};

// A loopback port that nothing listens on.
std::uint16_t closed_port() {
  auto l = Listener::bind(kAnyPort);
  const auto p = l.port();
  l.close();
  return p;
}

RgbImage first_of(Label label, std::uint64_t seed) {
  // Pick a frame the shared classifier puts in the intended class.
  for (std::uint64_t s = seed;; ++s) {
    auto img = synthetic(label, s).image;
    if (grade_first_layer(img, shared_classifier()).result.label == label) return img;
  }
}

}  // namespace

TEST(Cloud, SpotlessFrameIsMidRipened) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  RawClient c(cloud.port());
  const auto f = synthetic(Label::Ripened, 1, Subclass::MidRipened, 0);
  c.send(encode_message(make_detect_request("a1", f.image, nullptr)));
  const auto reply = c.receive();
  EXPECT_EQ(reply.type, MessageType::DetectResponse);
  EXPECT_EQ(reply.id, "a1");
  EXPECT_EQ(reply.payload.at("subclass"), "MidRipened");
  EXPECT_TRUE(reply.payload.at("detections").empty());
}

TEST(Cloud, CorruptPayloadKeepsConnection) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  RawClient c(cloud.port());
  c.send(encode_message(WireMessage{MessageType::DetectRequest, "bad-1", {{"image", "###not base64###"}}}));
  auto reply = c.receive();
  EXPECT_EQ(reply.type, MessageType::Error);
  EXPECT_EQ(reply.id, "bad-1");
  EXPECT_EQ(reply.payload.at("message"), "bad payload");

  c.send("{garbage");
  EXPECT_EQ(c.receive().type, MessageType::Error);
  c.send(encode_message(WireMessage{MessageType::Frame, "wrong", {}}));
  reply = c.receive();
  EXPECT_EQ(reply.type, MessageType::Error);
  EXPECT_EQ(reply.id, "wrong");

  const auto f = synthetic(Label::Ripened, 2, Subclass::MidRipened, 2);
  c.send(encode_message(make_detect_request("ok-1", f.image, &f.truth.fruit)));
  reply = c.receive();
  EXPECT_EQ(reply.type, MessageType::DetectResponse);
  EXPECT_EQ(reply.payload.at("detections").size(), 2u);
  EXPECT_EQ(cloud.errors(), 3u);
}

TEST(Cloud, ConcurrentRequestsMatchInProcess) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  std::vector<std::future<bool>> results;
  for (int i = 0; i < 10; ++i) {
    results.push_back(std::async(std::launch::async, [&, i] {
      const auto f = synthetic(Label::Ripened, 100 + i, std::nullopt, i % 8);
      RawClient c(cloud.port());
      const std::string id = "req-" + std::to_string(i);
      c.send(encode_message(make_detect_request(id, f.image, &f.truth.fruit)));
      const auto reply = c.receive(30000);
      return reply.id == id && reply.type == MessageType::DetectResponse &&
             parse_detect_response(reply.payload).detections == det.detect(f.image, f.truth.fruit);
    }));
  }
  for (auto& r : results) EXPECT_TRUE(r.get());
  EXPECT_EQ(cloud.requests(), 10u);
}

TEST(Cloud, OversizedLineIsRefused) {
  const SpotDetector det;
  CloudConfig cfg;
  cfg.max_payload_bytes = 4096;
  CloudService cloud(det, cfg);
  cloud.start(kAnyPort);
  RawClient c(cloud.port());
  c.send(std::string(20000, 'x'));
  const auto reply = c.receive();
  EXPECT_EQ(reply.type, MessageType::Error);
  EXPECT_EQ(reply.payload.at("message"), "payload too large");
  RgbImage small(12, 12, Rgb{220, 200, 40});
  const Mask fruit = full_mask(12, 12);
  c.send(encode_message(make_detect_request("small", small, &fruit)));
  EXPECT_EQ(c.receive().type, MessageType::DetectResponse);
}

TEST(Cloud, ClientReusesConnectionAndReportsOutage) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  CloudClient client({"127.0.0.1", cloud.port()});
  const auto f = synthetic(Label::Ripened, 3, Subclass::MidRipened, 3);
  for (int i = 0; i < 3; ++i) {
    const auto dets = client.detect(f.image, f.truth.fruit);
    ASSERT_TRUE(dets.has_value());
    EXPECT_EQ(dets->size(), 3u);
  }
  EXPECT_EQ(client.requests(), 3u);
  EXPECT_EQ(client.failures(), 0u);

  CloudClient down({"127.0.0.1", closed_port()}, 300);
  EXPECT_FALSE(down.detect(f.image, f.truth.fruit).has_value());
  EXPECT_EQ(down.failures(), 1u);
}

TEST(Edge, UnripenedSendsNothingToCloud) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  EdgeService edge(shared_classifier(), Endpoint{"127.0.0.1", cloud.port()});
  const auto ev = edge.grade_frame("u1", first_of(Label::Unripened, 1));
  EXPECT_EQ(ev.result.label, Label::Unripened);
  EXPECT_FALSE(ev.result.layer2_invoked);
  EXPECT_EQ(edge.cloud_bytes(), 0u);
  EXPECT_EQ(edge.cloud_requests(), 0u);
  EXPECT_EQ(cloud.requests(), 0u);
}

TEST(Edge, RipenedMakesExactlyOneRequest) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  EdgeService edge(shared_classifier(), Endpoint{"127.0.0.1", cloud.port()});
  const auto ev = edge.grade_frame("r1", first_of(Label::Ripened, 1));
  EXPECT_EQ(ev.result.label, Label::Ripened);
  EXPECT_TRUE(ev.result.layer2_invoked);
  EXPECT_TRUE(ev.result.subclass.has_value());
  EXPECT_EQ(edge.cloud_requests(), 1u);
  EXPECT_EQ(cloud.requests(), 1u);
  EXPECT_GT(edge.cloud_bytes(), 0u);
}

TEST(Edge, CloudDownDegradesToDefective) {
  EdgeConfig cfg;
  cfg.cloud_timeout_ms = 300;
  EdgeService edge(shared_classifier(), Endpoint{"127.0.0.1", closed_port()}, cfg);
  const auto ev = edge.grade_frame("r2", first_of(Label::Ripened, 20));
  EXPECT_TRUE(ev.result.degraded);
  EXPECT_EQ(ev.result.route, Route::Defective);
  EXPECT_EQ(edge.degraded(), 1u);

  EdgeService no_cloud(shared_classifier(), std::nullopt);
  EXPECT_TRUE(no_cloud.grade_frame("r3", first_of(Label::Ripened, 20)).result.degraded);
}

TEST(Edge, FrameGetsEventThenSwitch) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  EdgeService edge(shared_classifier(), Endpoint{"127.0.0.1", cloud.port()});
  edge.start(kAnyPort);
  RawClient c(edge.port());
  const auto img = first_of(Label::Overripened, 1);
  c.send(encode_message(make_frame("f-item-1", "item-1", img)));
  const auto ev = c.receive();
  ASSERT_EQ(ev.type, MessageType::GradeEvent);
  EXPECT_EQ(ev.id, "f-item-1");
  EXPECT_EQ(ev.payload.at("item_id"), "item-1");
  EXPECT_EQ(ev.payload.at("route"), "Defective");
  const auto sw = c.receive();
  ASSERT_EQ(sw.type, MessageType::SwitchCommand);
  EXPECT_EQ(sw.id, "sw-item-1");
  EXPECT_EQ(switch_command_from_json(sw.payload).route, Route::Defective);

  c.send(encode_message(WireMessage{MessageType::DetectRequest, "x", {}}));
  EXPECT_EQ(c.receive().type, MessageType::Error);
}

class EdgeHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    cloud_.start(kAnyPort);
    edge_ = std::make_unique<EdgeService>(shared_classifier(), Endpoint{"127.0.0.1", cloud_.port()});
    edge_->start(kAnyPort);
    edge_->start_http("127.0.0.1", 0);
    http_ = std::make_unique<httplib::Client>("127.0.0.1", edge_->http_port());
    http_->set_read_timeout(30, 0);
  }

  httplib::Result control(const nlohmann::json& cmd) { return http_->Post("/control", cmd.dump(), "application/json"); }

  SpotDetector det_;
  CloudService cloud_{det_};
  std::unique_ptr<EdgeService> edge_;
  std::unique_ptr<httplib::Client> http_;
};

TEST_F(EdgeHttp, UploadNeedsManualMode) {
  const auto img = first_of(Label::Unripened, 3);
  const auto png = encode_png(img);
  const std::string body(png.begin(), png.end());
  auto res = http_->Post("/grade", body, "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);

  res = control({{"command", "set-mode"}, {"mode", "Manual"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("state").at("mode"), "Manual");
  EXPECT_EQ(edge_->mode(), Mode::Manual);

  res = http_->Post("/grade", body, "image/png");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto ev = nlohmann::json::parse(res->body);
  EXPECT_EQ(ev.at("label"), "Unripened");
  EXPECT_EQ(ev.at("route"), "Market");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");

  res = http_->Post("/grade", nlohmann::json{{"image", base64_encode(png)}, {"item_id", "up-1"}}.dump(),
                    "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body).at("item_id"), "up-1");

  res = http_->Post("/grade", "definitely not an image", "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  auto thumb = http_->Get("/frames/up-1.png");
  ASSERT_TRUE(thumb);
  EXPECT_EQ(thumb->status, 200);
  EXPECT_EQ(decode_image(Bytes(thumb->body.begin(), thumb->body.end())), img);
}

TEST_F(EdgeHttp, OverrideIsAudited) {
  edge_->grade_frame("item-9", first_of(Label::Overripened, 4));
  auto res = control({{"command", "override"}, {"item_id", "item-9"}, {"route", "Market"}, {"operator", "kim"}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto audit = http_->Get("/audit");
  ASSERT_TRUE(audit);
  const auto a = nlohmann::json::parse(audit->body);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].at("item_id"), "item-9");
  EXPECT_EQ(a[0].at("from"), "Defective");
  EXPECT_EQ(a[0].at("to"), "Market");
  EXPECT_EQ(a[0].at("operator"), "kim");

  res = control({{"command", "override"}, {"item_id", "nobody"}, {"route", "Market"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = control({{"command", "override"}, {"item_id", "item-9"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = control({{"command", "launch"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = http_->Post("/control", "{", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(EdgeHttp, EventsReplayAndStream) {
  edge_->grade_frame("e1", first_of(Label::Unripened, 5));
  edge_->grade_frame("e2", first_of(Label::Overripened, 5));
  auto res = http_->Get("/events?format=json");
  ASSERT_TRUE(res);
  auto events = nlohmann::json::parse(res->body);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].at("item_id"), "e1");
  EXPECT_EQ(events[1].at("route"), "Defective");
  const auto first_seq = events[0].at("seq").get<std::uint64_t>();

  res = http_->Get("/events?format=json&since=" + std::to_string(first_seq));
  ASSERT_TRUE(res);
  events = nlohmann::json::parse(res->body);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].at("item_id"), "e2");

  std::string stream;
  http_->Get("/events?since=0", [&](const char* data, std::size_t n) {
    stream.append(data, n);
    return stream.find("e2") == std::string::npos;
  });
  EXPECT_NE(stream.find("event: grade"), std::string::npos);
  EXPECT_NE(stream.find("\"item_id\":\"e1\""), std::string::npos);
  EXPECT_NE(stream.find("id: "), std::string::npos);

  res = http_->Get("/events?since=abc");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(EdgeHttp, PauseReachesConnectedSimulator) {
  SimulatorConfig cfg;
  cfg.rate = 20;
  cfg.seed = 3;
  Simulator sim({"127.0.0.1", edge_->port()}, cfg);
  std::thread runner([&] { sim.run(); });
  while (sim.sent() < 2) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  auto res = control({{"command", "pause"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  for (int i = 0; i < 100 && !sim.paused(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_TRUE(sim.paused());
  const auto frozen = sim.emitted();
  std::this_thread::sleep_for(std::chrono::milliseconds(400));
  EXPECT_EQ(sim.emitted(), frozen);
  control({{"command", "resume"}});
  for (int i = 0; i < 200 && sim.emitted() == frozen; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_GT(sim.emitted(), frozen);
  sim.stop();
  runner.join();
}

TEST(Simulator, HundredItemsRoutedCorrectly) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  EdgeService edge(shared_classifier(), Endpoint{"127.0.0.1", cloud.port()});
  edge.start(kAnyPort);
  SimulatorConfig cfg;
  cfg.rate = 200;
  cfg.count = 100;
  cfg.seed = 11;
  cfg.buffer_limit = 200;
  Simulator sim({"127.0.0.1", edge.port()}, cfg);
  sim.run();
  EXPECT_EQ(sim.emitted(), 100u);
  EXPECT_EQ(sim.dropped(), 0u);
  const auto log = sim.routing_log();
  ASSERT_EQ(log.size(), 100u);
  std::size_t ripened = 0;
  for (const auto& r : log) {
    ASSERT_TRUE(r.result.has_value()) << r.item_id;
    ASSERT_TRUE(r.route.has_value()) << r.item_id;
    EXPECT_EQ(*r.route, r.result->route);
    ripened += r.result->label == Label::Ripened;
  }
  EXPECT_GE(sim.line_accuracy(), 0.95);
  EXPECT_EQ(edge.cloud_requests(), ripened);
  EXPECT_EQ(sim.report().at("items").size(), 100u);
}

TEST(Simulator, InterArrivalFollowsRate) {
  SimulatorConfig cfg;
  cfg.rate = 0.5;
  cfg.count = 3;
  cfg.jitter_bound_ms = 200;
  cfg.drain_timeout_ms = 0;
  cfg.connect_timeout_ms = 100;
  Simulator sim({"127.0.0.1", closed_port()}, cfg);
  std::vector<std::chrono::steady_clock::time_point> arrivals;
  sim.on_item([&](const LineItem& item) { arrivals.push_back(item.arrival); });
  sim.run();
  ASSERT_EQ(arrivals.size(), 3u);
  for (std::size_t i = 1; i < arrivals.size(); ++i) {
    const double gap = std::chrono::duration<double, std::milli>(arrivals[i] - arrivals[i - 1]).count();
    EXPECT_NEAR(gap, 2000.0, cfg.jitter_bound_ms);
  }
  EXPECT_LE(sim.max_lateness_ms(), cfg.jitter_bound_ms);
}

TEST(Simulator, BuffersWhileEdgeIsDownThenDelivers) {
  const auto port = closed_port();
  SimulatorConfig cfg;
  cfg.rate = 100;
  cfg.count = 12;
  cfg.buffer_limit = 5;
  cfg.connect_timeout_ms = 100;
  cfg.drain_timeout_ms = 60000;
  cfg.seed = 5;
  Simulator sim({"127.0.0.1", port}, cfg);
  std::thread runner([&] { sim.run(); });
  while (sim.emitted() < 12 || sim.dropped() < 7) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(sim.sent(), 0u);
  EXPECT_EQ(sim.dropped(), 7u);

  EdgeService edge(shared_classifier(), std::nullopt);
  edge.start({"127.0.0.1", port});
  runner.join();
  EXPECT_EQ(sim.sent(), 5u);
  std::size_t routed = 0;
  for (const auto& r : sim.routing_log()) routed += r.route.has_value();
  EXPECT_EQ(routed, 5u);
}

TEST(Simulator, SwitchCommandsCorrelateWithEvents) {
  EdgeService edge(shared_classifier(), std::nullopt);
  edge.start(kAnyPort);
  SimulatorConfig cfg;
  cfg.rate = 100;
  cfg.count = 6;
  cfg.seed = 8;
  cfg.mix = {1, 0, 1};
  Simulator sim({"127.0.0.1", edge.port()}, cfg);
  sim.inject({Label::Overripened, std::nullopt, std::nullopt});
  sim.run();
  const auto log = sim.routing_log();
  ASSERT_EQ(log.size(), 6u);
  EXPECT_EQ(log[0].truth_label, Label::Overripened);
  for (const auto& r : log) {
    ASSERT_TRUE(r.result && r.route);
    EXPECT_EQ(*r.route, r.result->route);
  }
  EXPECT_EQ(edge.switch_commands(), 6u);
}

TEST(Simulator, RejectsBadConfig) {
  SimulatorConfig cfg;
  cfg.rate = 0;
  EXPECT_THROW(Simulator({"127.0.0.1", 1}, cfg), InvalidArgument);
  cfg.rate = 1;
  cfg.mix = {0, 0, 0};
  EXPECT_THROW(Simulator({"127.0.0.1", 1}, cfg), InvalidArgument);
}

TEST(Transparency, LoopbackMatchesInProcess) {
  const SpotDetector det;
  CloudService cloud(det);
  cloud.start(kAnyPort);
  EdgeService edge(shared_classifier(), Endpoint{"127.0.0.1", cloud.port()});
  edge.start(kAnyPort);
  SimulatorConfig cfg;
  cfg.rate = 200;
  cfg.count = 30;
  cfg.seed = 21;
  cfg.buffer_limit = 100;
  Simulator sim({"127.0.0.1", edge.port()}, cfg);
  std::map<std::string, RgbImage> frames;
  sim.on_item([&](const LineItem& item) { frames[item.item_id] = item.image; });
  sim.run();
  std::size_t ripened = 0;
  for (const auto& r : sim.routing_log()) {
    ASSERT_TRUE(r.result.has_value());
    const auto local = grade(frames.at(r.item_id), shared_classifier(), det);
    EXPECT_TRUE(same_outcome(local, *r.result)) << r.item_id;
    ripened += local.label == Label::Ripened;
  }
  EXPECT_EQ(cloud.requests(), ripened);
}
