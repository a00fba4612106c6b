#pragma once

namespace rsq {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rsq
