#pragma once

namespace hmt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hmt
