#pragma once

namespace pinet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pinet
