#pragma once

// HGT1 tensor files:
//   "HGT1" | u32 rank | rank x u32 dims | prod(dims) x f32 payload
// All integers and floats little-endian; payload row-major.

#include <cstdint>
#include <vector>

#include "hg/linalg.hpp"

namespace hg {

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t element_count() const;
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Throws IoError on a bad magic, rank outside [1, 4], or a payload whose
/// length is not prod(dims) * 4.
Tensor read_tensor(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_tensor(const Tensor& t);

/// 2-D tensor view of a matrix, and back. to_dense throws ShapeError unless
/// the tensor has rank 2.
template <typename T>
Tensor to_tensor(const Dense<T>& m);
template <typename T>
Dense<T> to_dense(const Tensor& t);

}  // namespace hg
