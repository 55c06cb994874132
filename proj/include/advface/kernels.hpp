#pragma once

// Data-parallel inner loops. Every kernel in advface::kernels has a serial
// twin in advface::reference with the same signature; the reference versions
// are naive on purpose and only used by tests and benchmarks.

#include <cstdint>
#include <span>
#include <vector>

#include "advface/image.hpp"

namespace advface {

struct ConvShape {
    int in_channels = 1;
    int in_height = 1;
    int in_width = 1;
    int out_filters = 1;
    int kernel = 1;
    int stride = 1;
    int pad = 0;

    int out_height() const noexcept { return (in_height + 2 * pad - kernel) / stride + 1; }
    int out_width() const noexcept { return (in_width + 2 * pad - kernel) / stride + 1; }
};

namespace kernels {

/// Zero-padded cross-correlation. `weights` is [out][in][k][k], `bias` is [out].
/// A filter with `disabled[f] != 0` produces an all-zero output plane.
/// `disabled` may be empty. Accumulates in double.
void conv2d(const ConvShape& shape, std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<const std::uint8_t> disabled, std::span<float> output);

/// k x k median with edge replication; parallel over rows.
Image median_filter(const Image& img, int k);

/// Row-major n x n matrix of cosine similarities between embeddings.
std::vector<double> cosine_matrix(std::span<const std::vector<float>> embeddings);

}  // namespace kernels

namespace reference {

void conv2d(const ConvShape& shape, std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<const std::uint8_t> disabled, std::span<float> output);

Image median_filter(const Image& img, int k);

std::vector<double> cosine_matrix(std::span<const std::vector<float>> embeddings);

}  // namespace reference

/// a.b / (|a||b|), or 0 when either norm is 0. Throws ShapeError on length mismatch.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace advface
