#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "bbpatch/image.h"
#include "bbpatch/oracle.h"

namespace bbpatch::protocol {

// Wire format shared by the subprocess line protocol and the HTTP endpoints.
//   handshake  {"proto":1,"shape":[H,W,C],"num_classes":K}
//   request    {"id":n,"pixels":"<base64 LE float32, HWC>"}
//   response   {"id":n,"probs":[p1..pK]}  or  {"id":n,"error":"..."}
inline constexpr int kVersion = 1;

struct Handshake {
  int proto = kVersion;
  ImageShape shape;
  int num_classes = 0;
};

nlohmann::json handshake_json(const Handshake& h);
// Throws ConfigurationError when fields are missing or malformed.
Handshake parse_handshake(const nlohmann::json& j);
// Throws ConfigurationError naming the mismatching field.
void check_handshake(const Handshake& got, const ImageShape& shape,
                     int num_classes);

nlohmann::json request_json(std::uint64_t id, const Image& image);

struct Response {
  std::uint64_t id = 0;
  std::optional<Probabilities> probs;
  std::optional<std::string> error;
};

nlohmann::json response_json(std::uint64_t id, const Probabilities& probs);
nlohmann::json error_json(std::optional<std::uint64_t> id, std::string_view error);
// Throws TransportError when neither probs nor error is present.
Response parse_response(const nlohmann::json& j);

}  // namespace bbpatch::protocol
