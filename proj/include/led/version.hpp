#pragma once

namespace led {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace led
