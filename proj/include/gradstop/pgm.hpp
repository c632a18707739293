#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradstop/image.hpp"

namespace gradstop {

class PgmError : public std::runtime_error {
public:
    PgmError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (byte " + std::to_string(byte_offset) + ")"),
          byte_offset(byte_offset) {}
    std::size_t byte_offset;
};

namespace detail {

class PgmReader {
public:
    explicit PgmReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

    std::size_t pos() const { return pos_; }
    bool eof() const { return pos_ >= bytes_.size(); }

    unsigned char byte() {
        if (eof()) throw PgmError("pgm: unexpected end of file", pos_);
        return bytes_[pos_++];
    }

    // whitespace and '#' comments separate header tokens
    void skip_separators() {
        while (!eof()) {
            const unsigned char c = bytes_[pos_];
            if (c == '#') {
                while (!eof() && bytes_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    unsigned read_uint(const char* what) {
        skip_separators();
        if (eof()) throw PgmError(std::string("pgm: missing ") + what, pos_);
        if (bytes_[pos_] < '0' || bytes_[pos_] > '9')
            throw PgmError(std::string("pgm: malformed ") + what, pos_);
        unsigned long v = 0;
        while (!eof() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 0xFFFFFFFFul) throw PgmError(std::string("pgm: overflow in ") + what, pos_);
            ++pos_;
        }
        return static_cast<unsigned>(v);
    }

private:
    std::vector<unsigned char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// P2/P5, maxval 255 or 65535, intensities mapped linearly to [0,1].
// 16-bit P5 payloads are big-endian per the PGM standard.
inline Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_pgm: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    detail::PgmReader r(std::move(bytes));

    const unsigned char m0 = r.byte();
    const unsigned char m1 = r.byte();
    if (m0 != 'P' || (m1 != '2' && m1 != '5'))
        throw PgmError("pgm: bad magic, expected P2 or P5", 0);
    const bool binary = (m1 == '5');

    const unsigned w = r.read_uint("width");
    const unsigned h = r.read_uint("height");
    const unsigned maxval = r.read_uint("maxval");
    if (w < 1 || h < 1) throw PgmError("pgm: bad dimensions", r.pos());
    if (maxval != 255 && maxval != 65535)
        throw PgmError("pgm: unsupported maxval " + std::to_string(maxval), r.pos());

    Image img(static_cast<int>(w), static_cast<int>(h));
    const double scale = 1.0 / maxval;
    const std::size_t n = img.size();

    if (binary) {
        r.byte();  // the single whitespace after maxval
        for (std::size_t i = 0; i < n; ++i) {
            unsigned v = r.byte();
            if (maxval == 65535) v = (v << 8) | r.byte();
            img[i] = v * scale;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = r.read_uint("pixel");
            if (v > maxval) throw PgmError("pgm: pixel exceeds maxval", r.pos());
            img[i] = v * scale;
        }
    }
    return img;
}

// Clamps to [0,1], quantizes round-half-up, writes binary P5.
inline void save_pgm(const Image& img, const std::string& path, int depth = 16) {
    if (depth != 8 && depth != 16) throw std::invalid_argument("save_pgm: depth must be 8 or 16");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_pgm: cannot open " + path);
    const unsigned maxval = (depth == 8) ? 255u : 65535u;
    out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
    std::vector<unsigned char> payload;
    payload.reserve(img.size() * (depth / 8));
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        const unsigned q = static_cast<unsigned>(std::floor(v * maxval + 0.5));
        if (depth == 16) payload.push_back(static_cast<unsigned char>(q >> 8));
        payload.push_back(static_cast<unsigned char>(q & 0xFF));
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("save_pgm: write failed for " + path);
}

}  // namespace gradstop
