#pragma once

namespace mildl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mildl
