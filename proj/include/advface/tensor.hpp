#pragma once

#include <cstddef>
#include <vector>

namespace advface {

/// Dense CHW float tensor. Vectors are stored as channels = n, height = width = 1.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    Tensor() = default;
    Tensor(int c, int h, int w) : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, 0.0f) {}

    std::size_t size() const noexcept { return values.size(); }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
    float& at(int c, int y, int x) noexcept { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const noexcept { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

}  // namespace advface
