#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace advface {

/// 8-bit raster, row-major with interleaved channels (1 = gray, 3 = RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0);
    Image(int w, int h, int c, std::vector<std::uint8_t> pixels);

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    std::size_t index(int x, int y, int c = 0) const noexcept {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    std::uint8_t at(int x, int y, int c = 0) const noexcept { return data[index(x, y, c)]; }
    std::uint8_t& at(int x, int y, int c = 0) noexcept { return data[index(x, y, c)]; }

    /// Sets every channel of pixel (x, y).
    void set_pixel(int x, int y, std::uint8_t value) noexcept;

    bool valid() const noexcept;
    /// Throws ParameterError when the raster invariants do not hold.
    void validate() const;

    bool operator==(const Image&) const = default;
};

struct Point {
    int x = 0;
    int y = 0;
    bool operator==(const Point&) const = default;
    auto operator<=>(const Point&) const = default;
};

struct Polygon {
    std::vector<Point> vertices;

    /// Shoelace area (absolute value).
    double area() const noexcept;
    bool degenerate() const noexcept { return vertices.size() < 3 || area() <= 0.0; }
};

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255.
Image read_image(const std::filesystem::path& path);
/// Decodes an in-memory P5/P6 byte stream.
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

/// Writes a canonical header ("P5\n<W> <H>\n255\n") followed by the payload.
void write_image(const Image& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pnm(const Image& img);

/// 8-connected Bresenham path from a to b, both endpoints included.
/// The point set does not depend on the argument order.
std::vector<Point> raster_line(Point a, Point b);

/// Sets every pixel whose center lies inside `poly` (even-odd rule) to `value`.
Image fill_polygon(const Image& img, const Polygon& poly, std::uint8_t value);

/// Pixels whose centers are inside `poly`, in row-major order.
std::vector<Point> polygon_interior(int width, int height, const Polygon& poly);

/// k x k median with edge-replicated borders, applied per channel.
Image median_filter(const Image& img, int k);

}  // namespace advface
