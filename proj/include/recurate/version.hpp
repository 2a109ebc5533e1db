#pragma once

namespace recurate {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace recurate
