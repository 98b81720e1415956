#pragma once

namespace ssdd {

inline constexpr const char* kVersionString = "0.1.0";
inline constexpr int kContainerVersion = 1;

}  // namespace ssdd
