#pragma once

#include <vector>

namespace sgn {

// Reserved vocabulary ids. Every vocabulary places these first.
inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReserved = 4;

using TokenSequence = std::vector<int>;

}  // namespace sgn
