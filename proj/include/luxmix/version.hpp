#pragma once

namespace luxmix {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace luxmix
