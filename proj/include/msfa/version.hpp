#pragma once

namespace msfa {

inline constexpr const char* kVersion = "1.0.0";

} // namespace msfa
