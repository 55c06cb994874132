#include "advface/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "advface/error.hpp"
#include "advface/kernels.hpp"

namespace advface {

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c) {
    if (w < 1 || h < 1 || (c != 1 && c != 3)) {
        throw ParameterError("invalid image dimensions " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                             std::to_string(c));
    }
    data.assign(pixel_count() * static_cast<std::size_t>(c), fill);
}

Image::Image(int w, int h, int c, std::vector<std::uint8_t> pixels)
    : width(w), height(h), channels(c), data(std::move(pixels)) {
    validate();
}

void Image::set_pixel(int x, int y, std::uint8_t value) noexcept {
    const std::size_t base = index(x, y);
    for (int c = 0; c < channels; ++c) data[base + c] = value;
}

bool Image::valid() const noexcept {
    return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
           data.size() == pixel_count() * static_cast<std::size_t>(channels);
}

void Image::validate() const {
    if (!valid()) {
        throw ParameterError("image invariant violated: " + std::to_string(width) + "x" + std::to_string(height) +
                             "x" + std::to_string(channels) + " with " + std::to_string(data.size()) +
                             " data bytes");
    }
}

double Polygon::area() const noexcept {
    if (vertices.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Point& p = vertices[i];
        const Point& q = vertices[(i + 1) % vertices.size()];
        twice += static_cast<double>(p.x) * q.y - static_cast<double>(q.x) * p.y;
    }
    return std::abs(twice) * 0.5;
}

// ---------------------------------------------------------------------------
// Netpbm codec

namespace {

[[noreturn]] void pnm_fail(const std::string& msg, std::size_t at) {
    throw FormatError("pnm: " + msg + " at byte offset " + std::to_string(at));
}

class HeaderCursor {
public:
    HeaderCursor(const std::vector<std::uint8_t>& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::size_t offset() const noexcept { return pos_; }

    long read_uint(const char* what) {
        if (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
            pnm_fail(std::string("expected whitespace before ") + what, pos_);
        }
        skip_whitespace_and_comments();
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) pnm_fail(std::string("implausibly large ") + what, start);
            ++pos_;
        }
        if (pos_ == start) pnm_fail(std::string("expected ") + what, start);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the payload.
    void expect_single_whitespace() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) pnm_fail("expected whitespace after maxval", pos_);
        ++pos_;
    }

private:
    void skip_whitespace_and_comments() {
        while (pos_ < bytes_.size()) {
            const auto ch = bytes_[pos_];
            if (ch == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(ch)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
};

}  // namespace

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        pnm_fail("bad magic (expected P5 or P6)", 0);
    }
    const int channels = bytes[1] == '5' ? 1 : 3;
    HeaderCursor cur(bytes, 2);
    const long w = cur.read_uint("width");
    const long h = cur.read_uint("height");
    const std::size_t maxval_offset = cur.offset();
    const long maxval = cur.read_uint("maxval");
    if (maxval != 255) pnm_fail("maxval must be 255, got " + std::to_string(maxval), maxval_offset);
    if (w < 1 || h < 1) pnm_fail("zero image dimension", maxval_offset);
    cur.expect_single_whitespace();

    const std::size_t start = cur.offset();
    const std::size_t payload = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
    if (bytes.size() - start < payload) {
        pnm_fail("truncated payload: need " + std::to_string(payload) + " bytes, have " +
                     std::to_string(bytes.size() - start),
                 bytes.size());
    }
    std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(start + payload));
    return Image(static_cast<int>(w), static_cast<int>(h), channels, std::move(pixels));
}

Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_pnm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
    img.validate();
    const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) +
                               " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

void write_image(const Image& img, const std::filesystem::path& path) {
    const auto bytes = encode_pnm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Rasterization

std::vector<Point> raster_line(Point a, Point b) {
    // Trace from the lexicographically smaller endpoint so that (a, b) and
    // (b, a) resolve midpoint ties identically.
    const bool swapped = b < a;
    if (swapped) std::swap(a, b);

    const int dx = std::abs(b.x - a.x);
    const int dy = -std::abs(b.y - a.y);
    const int sx = a.x < b.x ? 1 : -1;
    const int sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;

    std::vector<Point> path;
    path.reserve(static_cast<std::size_t>(std::max(dx, -dy)) + 1);
    Point p = a;
    while (true) {
        path.push_back(p);
        if (p == b) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            p.x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            p.y += sy;
        }
    }
    if (swapped) std::reverse(path.begin(), path.end());
    return path;
}

std::vector<Point> polygon_interior(int width, int height, const Polygon& poly) {
    if (poly.degenerate()) throw GeometryError("degenerate polygon (fewer than 3 vertices or zero area)");
    for (const auto& v : poly.vertices) {
        if (v.x < 0 || v.y < 0 || v.x > width || v.y > height) {
            throw GeometryError("polygon vertex (" + std::to_string(v.x) + "," + std::to_string(v.y) +
                                ") outside image bounds");
        }
    }

    std::vector<Point> inside;
    std::vector<double> crossings;
    const std::size_t n = poly.vertices.size();
    for (int y = 0; y < height; ++y) {
        const double yc = y + 0.5;
        crossings.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const Point& p = poly.vertices[i];
            const Point& q = poly.vertices[(i + 1) % n];
            if ((p.y > yc) != (q.y > yc)) {
                crossings.push_back(p.x + (yc - p.y) * static_cast<double>(q.x - p.x) / (q.y - p.y));
            }
        }
        std::sort(crossings.begin(), crossings.end());
        // A center at xc is inside iff an odd number of crossings lie strictly right of it,
        // i.e. xc is in [c[2k], c[2k+1]).
        for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
            const int x0 = std::max(0, static_cast<int>(std::ceil(crossings[k] - 0.5)));
            const int x1 = std::min(width - 1, static_cast<int>(std::ceil(crossings[k + 1] - 0.5)) - 1);
            for (int x = x0; x <= x1; ++x) inside.push_back({x, y});
        }
    }
    return inside;
}

Image fill_polygon(const Image& img, const Polygon& poly, std::uint8_t value) {
    img.validate();
    Image out = img;
    for (const Point& p : polygon_interior(img.width, img.height, poly)) out.set_pixel(p.x, p.y, value);
    return out;
}

Image median_filter(const Image& img, int k) {
    img.validate();
    if (k < 1 || k % 2 == 0) throw ParameterError("median window must be odd and >= 1, got " + std::to_string(k));
    if (k == 1) return img;
    return kernels::median_filter(img, k);
}

}  // namespace advface
