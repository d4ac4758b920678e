#pragma once

namespace mimicvol {

inline constexpr const char* version = "0.1.0";

} // namespace mimicvol
