#pragma once

namespace dyrecmul {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace dyrecmul
