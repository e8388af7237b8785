#include "bbpatch/protocol.h"

#include "bbpatch/encoding.h"
#include "bbpatch/errors.h"

namespace bbpatch::protocol {

using nlohmann::json;

json handshake_json(const Handshake& h) {
  return json{{"proto", h.proto},
              {"shape", {h.shape.height, h.shape.width, h.shape.channels}},
              {"num_classes", h.num_classes}};
}

Handshake parse_handshake(const json& j) {
  try {
    Handshake h;
    h.proto = j.at("proto").get<int>();
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3)
      throw ConfigurationError("handshake shape must have 3 entries");
    h.shape = ImageShape{shape[0], shape[1], shape[2]};
    h.num_classes = j.at("num_classes").get<int>();
    return h;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed handshake: ") + e.what());
  }
}

void check_handshake(const Handshake& got, const ImageShape& shape,
                     int num_classes) {
  if (got.proto != kVersion)
    throw ConfigurationError("oracle speaks protocol " + std::to_string(got.proto) +
                             ", expected " + std::to_string(kVersion));
  if (got.shape != shape)
    throw ConfigurationError("oracle reports input shape " +
                             got.shape.to_string() + ", configured " +
                             shape.to_string());
  if (got.num_classes != num_classes)
    throw ConfigurationError("oracle reports num_classes=" +
                             std::to_string(got.num_classes) + ", configured " +
                             std::to_string(num_classes));
}

json request_json(std::uint64_t id, const Image& image) {
  return json{{"id", id}, {"pixels", encode_f32(image.pixels())}};
}

json response_json(std::uint64_t id, const Probabilities& probs) {
  return json{{"id", id}, {"probs", probs}};
}

json error_json(std::optional<std::uint64_t> id, std::string_view error) {
  json j{{"error", error}};
  j["id"] = id ? json(*id) : json(nullptr);
  return j;
}

Response parse_response(const json& j) {
  Response r;
  try {
    if (j.contains("id") && !j.at("id").is_null())
      r.id = j.at("id").get<std::uint64_t>();
    else if (!j.contains("error"))
      throw TransportError("response without id");
    if (j.contains("error")) {
      r.error = j.at("error").is_string() ? j.at("error").get<std::string>()
                                          : j.at("error").dump();
    } else if (j.contains("probs")) {
      r.probs = j.at("probs").get<Probabilities>();
    } else {
      throw TransportError("response has neither probs nor error", r.id);
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed response: ") + e.what());
  }
  return r;
}

}  // namespace bbpatch::protocol
