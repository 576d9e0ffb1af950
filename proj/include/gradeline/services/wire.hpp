#pragma once

// Wire protocol: one compact JSON document per line,
//   {"v":1,"type":<MessageType>,"id":<string>,"payload":{...}}
// Images travel as base64-encoded PNG.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradeline/detection.hpp"
#include "gradeline/error.hpp"
#include "gradeline/image_io.hpp"
#include "gradeline/imaging.hpp"
#include "gradeline/mask.hpp"
#include "gradeline/pipeline.hpp"
#include "gradeline/services/base64.hpp"

namespace gradeline::services {

inline constexpr int kWireVersion = 1;

enum class MessageType { DetectRequest, DetectResponse, GradeEvent, SwitchCommand, Error, Frame, Control };

inline std::string to_string(MessageType t) {
  switch (t) {
    case MessageType::DetectRequest: return "DetectRequest";
    case MessageType::DetectResponse: return "DetectResponse";
    case MessageType::GradeEvent: return "GradeEvent";
    case MessageType::SwitchCommand: return "SwitchCommand";
    case MessageType::Error: return "Error";
    case MessageType::Frame: return "Frame";
    case MessageType::Control: return "Control";
  }
  return "?";
}

inline std::optional<MessageType> parse_message_type(std::string_view s) {
  for (auto t : {MessageType::DetectRequest, MessageType::DetectResponse, MessageType::GradeEvent,
                 MessageType::SwitchCommand, MessageType::Error, MessageType::Frame, MessageType::Control}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

struct WireMessage {
  MessageType type = MessageType::Error;
  std::string id;
  nlohmann::json payload = nlohmann::json::object();
};

// Malformed line; `id` is echoed when the envelope still carried one.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string id) : Error(what), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

inline std::string encode_message(const WireMessage& m) {
  const nlohmann::json j{{"v", kWireVersion}, {"type", to_string(m.type)}, {"id", m.id}, {"payload", m.payload}};
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline WireMessage decode_message(std::string_view line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("bad message: not a JSON object", "");
  std::string id;
  if (auto it = j.find("id"); it != j.end() && it->is_string()) id = it->get<std::string>();
  auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer() || v->get<int>() != kWireVersion) {
    throw ProtocolError("bad message: unsupported version", id);
  }
  if (!j.contains("id") || !j.at("id").is_string()) throw ProtocolError("bad message: missing id", id);
  auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw ProtocolError("bad message: missing type", id);
  const auto t = parse_message_type(type->get<std::string>());
  if (!t) throw ProtocolError("unknown message type '" + type->get<std::string>() + "'", id);
  auto payload = j.find("payload");
  if (payload == j.end() || !payload->is_object()) throw ProtocolError("bad message: payload must be an object", id);
  return WireMessage{*t, std::move(id), std::move(*payload)};
}

inline WireMessage make_error(const std::string& id, const std::string& message) {
  return WireMessage{MessageType::Error, id, {{"message", message}}};
}

// ---------------------------------------------------------------------------
// Payload helpers. Decoders throw FormatError ("bad payload") on bad input.

inline std::string image_to_base64(const RgbImage& img) { return base64_encode(encode_png(img)); }
inline std::string mask_to_base64(const Mask& m) { return base64_encode(encode_png(m)); }

inline RgbImage image_from_base64(const nlohmann::json& field) {
  if (!field.is_string()) throw FormatError("bad payload: image must be a base64 string");
  try {
    return decode_image(base64_decode(field.get<std::string>()));
  } catch (const Error& e) {
    throw FormatError(std::string("bad payload: ") + e.what());
  }
}

inline Mask mask_from_base64(const nlohmann::json& field) {
  if (!field.is_string()) throw FormatError("bad payload: mask must be a base64 string");
  try {
    return decode_mask_png(base64_decode(field.get<std::string>()));
  } catch (const Error& e) {
    throw FormatError(std::string("bad payload: ") + e.what());
  }
}

struct DetectRequest {
  RgbImage image;
  std::optional<Mask> fruit;  // segmentation from layer 1, when available
};

inline WireMessage make_detect_request(const std::string& id, const RgbImage& img, const Mask* fruit) {
  nlohmann::json p{{"image", image_to_base64(img)}};
  if (fruit) p["mask"] = mask_to_base64(*fruit);
  return WireMessage{MessageType::DetectRequest, id, std::move(p)};
}

inline DetectRequest parse_detect_request(const nlohmann::json& p) {
  if (!p.contains("image")) throw FormatError("bad payload: missing image");
  DetectRequest r;
  r.image = image_from_base64(p.at("image"));
  if (p.contains("mask") && !p.at("mask").is_null()) {
    r.fruit = mask_from_base64(p.at("mask"));
    if (!r.fruit->same_shape(r.image)) throw FormatError("bad payload: mask and image sizes differ");
  }
  return r;
}

struct DetectResponse {
  std::vector<Detection> detections;
  Subclass subclass = Subclass::MidRipened;
};

inline WireMessage make_detect_response(const std::string& id, const std::vector<Detection>& dets) {
  return WireMessage{MessageType::DetectResponse, id,
                     {{"detections", to_json(dets)}, {"subclass", to_string(ripeness_subclass(dets))}}};
}

inline DetectResponse parse_detect_response(const nlohmann::json& p) {
  try {
    DetectResponse r;
    r.detections = detections_from_json(p.at("detections"));
    r.subclass = parse_subclass(p.at("subclass").get<std::string>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad payload: ") + e.what());
  }
}

struct Frame {
  std::string item_id;
  RgbImage image;
};

inline WireMessage make_frame(const std::string& id, const std::string& item_id, const RgbImage& img) {
  return WireMessage{MessageType::Frame, id, {{"item_id", item_id}, {"image", image_to_base64(img)}}};
}

inline Frame parse_frame(const nlohmann::json& p) {
  if (!p.contains("item_id") || !p.at("item_id").is_string()) throw FormatError("bad payload: missing item_id");
  if (!p.contains("image")) throw FormatError("bad payload: missing image");
  return Frame{p.at("item_id").get<std::string>(), image_from_base64(p.at("image"))};
}

// Grade events flatten the GradeResult and add the item id, a sequence
// number and a thumbnail reference.
struct GradeEvent {
  std::string item_id;
  std::uint64_t seq = 0;
  GradeResult result;
  std::string thumbnail;
};

inline nlohmann::json to_json(const GradeEvent& e) {
  nlohmann::json j = to_json(e.result);
  j["item_id"] = e.item_id;
  j["seq"] = e.seq;
  j["thumbnail"] = e.thumbnail;
  return j;
}

inline GradeEvent grade_event_from_json(const nlohmann::json& j) {
  try {
    GradeEvent e;
    e.item_id = j.at("item_id").get<std::string>();
    e.seq = j.value("seq", std::uint64_t{0});
    e.thumbnail = j.value("thumbnail", std::string());
    e.result = grade_result_from_json(j);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("bad payload: ") + ex.what());
  }
}

struct SwitchCommand {
  std::string item_id;
  Route route = Route::Defective;
  std::string operator_tag;  // set for operator overrides
  std::string reason;

  friend bool operator==(const SwitchCommand&, const SwitchCommand&) = default;
};

inline nlohmann::json to_json(const SwitchCommand& s) {
  nlohmann::json j{{"item_id", s.item_id}, {"route", to_string(s.route)}, {"reason", s.reason}};
  j["operator"] = s.operator_tag.empty() ? nlohmann::json(nullptr) : nlohmann::json(s.operator_tag);
  return j;
}

inline SwitchCommand switch_command_from_json(const nlohmann::json& j) {
  try {
    SwitchCommand s;
    s.item_id = j.at("item_id").get<std::string>();
    s.route = parse_route(j.at("route").get<std::string>());
    if (j.contains("operator") && j.at("operator").is_string()) s.operator_tag = j.at("operator").get<std::string>();
    s.reason = j.value("reason", std::string());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad payload: ") + e.what());
  }
}

}  // namespace gradeline::services
