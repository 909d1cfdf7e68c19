#include "hg/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "hg/error.hpp"

namespace hg {

namespace {

constexpr char kMagic[4] = {'H', 'G', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

Tensor read_tensor(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("hgt: bad magic");
    const std::uint32_t rank = get_u32(bytes.data() + 4);
    if (rank < 1 || rank > 4) throw IoError("hgt: rank must lie in [1, 4], got " + std::to_string(rank));
    const std::size_t header = 8 + 4 * std::size_t{rank};
    if (bytes.size() < header) throw IoError("hgt: truncated header");
    Tensor t;
    for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes.data() + 8 + 4 * i));
    const std::size_t expected = t.element_count() * 4;
    const std::size_t actual = bytes.size() - header;
    if (actual != expected)
        throw IoError("hgt: payload is " + std::to_string(actual) + " bytes, expected " + std::to_string(expected));
    t.values.resize(t.element_count());
    for (std::size_t i = 0; i < t.values.size(); ++i)
        t.values[i] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
    return t;
}

std::vector<std::uint8_t> write_tensor(const Tensor& t) {
    if (t.dims.empty() || t.dims.size() > 4) throw ShapeError("write_tensor: rank must lie in [1, 4]");
    if (t.values.size() != t.element_count()) throw ShapeError("write_tensor: value count does not match dims");
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.reserve(8 + 4 * t.dims.size() + 4 * t.values.size());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

template <typename T>
Tensor to_tensor(const Dense<T>& m) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.values.assign(m.data().begin(), m.data().end());
    return t;
}

template <typename T>
Dense<T> to_dense(const Tensor& t) {
    if (t.dims.size() != 2) throw ShapeError("to_dense: tensor must have rank 2");
    return Dense<T>(t.dims[0], t.dims[1], std::vector<T>(t.values.begin(), t.values.end()));
}

template Tensor to_tensor(const Dense<float>&);
template Tensor to_tensor(const Dense<double>&);
template Dense<float> to_dense(const Tensor&);
template Dense<double> to_dense(const Tensor&);

}  // namespace hg
