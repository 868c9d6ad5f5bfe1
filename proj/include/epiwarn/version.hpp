#pragma once

namespace epiwarn {

inline constexpr const char* kVersion = "0.1.0";

} // namespace epiwarn
