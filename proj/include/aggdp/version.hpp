#pragma once

namespace aggdp {

inline constexpr const char* kVersion = "0.1.0";

} // namespace aggdp
