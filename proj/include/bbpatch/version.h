#pragma once

namespace bbpatch {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace bbpatch
