#include "hg/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "hg/error.hpp"

namespace hg {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
            throw IoError(std::string("pnm: expected ") + what + " in header");
        std::size_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (v > (std::size_t{1} << 32)) throw IoError(std::string("pnm: ") + what + " too large");
            ++pos_;
        }
        return v;
    }

    // Exactly one whitespace byte separates maxval from the payload.
    void single_whitespace() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
            throw IoError("pnm: missing whitespace after maxval");
        ++pos_;
    }

    std::size_t pos() const noexcept { return pos_; }
    void advance(std::size_t n) noexcept { pos_ += n; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Image read_pnm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw IoError("pnm: bad magic, expected P5 or P6");
    Image img;
    img.channels = bytes[1] == '5' ? 1 : 3;
    HeaderReader h(bytes);
    h.advance(2);
    img.width = h.number("width");
    img.height = h.number("height");
    const std::size_t maxval = h.number("maxval");
    if (maxval != 255) throw IoError("pnm: maxval must be 255, got " + std::to_string(maxval));
    if (img.width == 0 || img.height == 0) throw IoError("pnm: zero image dimension");
    h.single_whitespace();
    const std::size_t expected = img.width * img.height * img.channels;
    const std::size_t actual = bytes.size() - h.pos();
    if (actual < expected)
        throw IoError("pnm: truncated payload, expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(actual));
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.pos()),
                      bytes.begin() + static_cast<std::ptrdiff_t>(h.pos() + expected));
    return img;
}

std::vector<std::uint8_t> write_pnm(const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw DomainError("write_pnm: channels must be 1 or 3");
    if (img.pixels.size() != img.width * img.height * img.channels)
        throw ShapeError("write_pnm: pixel buffer does not match dimensions");
    const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) +
                               " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

template <typename T>
Dense<T> image_features(const Image& img) {
    Dense<T> x(img.width * img.height, img.channels);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) x.data()[i] = static_cast<T>(img.pixels[i]) / T(255);
    return x;
}

template Dense<float> image_features(const Image&);
template Dense<double> image_features(const Image&);

}  // namespace hg
