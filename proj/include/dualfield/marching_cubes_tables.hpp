// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace dualfield::mc {

// Corner k of a cell sits at offset corner_offset[k]; bit k of the case index
// is set when the field at that corner is <= 0.
inline constexpr std::array<std::array<int, 3>, 8> corner_offset = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};

inline constexpr std::array<std::array<int, 2>, 12> edge_corners = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

extern const std::array<std::uint16_t, 256> edge_table;
extern const std::array<std::array<std::int8_t, 16>, 256> tri_table;

}  // namespace dualfield::mc
