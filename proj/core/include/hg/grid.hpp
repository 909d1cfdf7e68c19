#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "hg/linalg.hpp"

namespace hg {

/// The nine message-passing directions of a 3x3 neighborhood. The enumerator
/// order is the canonical iteration order and the tie-break order used by
/// max-direction refinement.
enum class Direction : std::size_t {
    self = 0,
    left,
    right,
    up,
    down,
    up_left,
    up_right,
    down_left,
    down_right,
};

inline constexpr std::size_t kNumDirections = 9;

inline constexpr std::array<Direction, kNumDirections> kAllDirections = {
    Direction::self,    Direction::left,     Direction::right,     Direction::up,        Direction::down,
    Direction::up_left, Direction::up_right, Direction::down_left, Direction::down_right,
};

struct Displacement {
    int row;
    int col;
    friend constexpr bool operator==(Displacement, Displacement) = default;
};

constexpr std::size_t index_of(Direction d) noexcept { return static_cast<std::size_t>(d); }

constexpr Displacement displacement(Direction d) noexcept {
    constexpr std::array<Displacement, kNumDirections> table = {{
        {0, 0}, {0, -1}, {0, 1}, {-1, 0}, {1, 0}, {-1, -1}, {-1, 1}, {1, -1}, {1, 1},
    }};
    return table[index_of(d)];
}

constexpr Direction opposite(Direction d) noexcept {
    constexpr std::array<Direction, kNumDirections> table = {
        Direction::self,       Direction::right,     Direction::left,     Direction::down,    Direction::up,
        Direction::down_right, Direction::down_left, Direction::up_right, Direction::up_left,
    };
    return table[index_of(d)];
}

std::string_view name(Direction d) noexcept;

/// Row-major H x W pixel grid.
class GridShape {
public:
    GridShape(std::size_t height, std::size_t width);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * width_ + col; }
    std::size_t row_of(std::size_t p) const noexcept { return p / width_; }
    std::size_t col_of(std::size_t p) const noexcept { return p % width_; }

    friend bool operator==(const GridShape&, const GridShape&) = default;

private:
    std::size_t height_;
    std::size_t width_;
};

/// One per-direction matrix for each of the nine directions, indexed by
/// index_of(Direction).
template <typename T>
using DirectionalAdjacency = std::array<Sparse<T>, kNumDirections>;

inline constexpr double kDefaultDegreeEps = 1e-7;

/// A^d: entry (i, j) = 1 iff pixel j is pixel i shifted by displacement(d).
template <typename T>
Sparse<T> pixel_adjacency(const GridShape& shape, Direction d);

template <typename T>
DirectionalAdjacency<T> pixel_adjacency_all(const GridShape& shape);

/// max(row sum, eps) per row. Throws DomainError if eps <= 0 or a entry is negative.
template <typename T>
Diagonal<T> degree(const Sparse<T>& a, T eps = static_cast<T>(kDefaultDegreeEps));

}  // namespace hg
