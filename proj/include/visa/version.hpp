#pragma once

namespace visa {

inline constexpr const char* kVersion = "visa 0.1.0";

}  // namespace visa
