#include "advface/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "advface/error.hpp"

namespace advface {

namespace {

void check_conv_sizes(const ConvShape& s, std::span<const float> input, std::span<const float> weights,
                      std::span<const float> bias, std::span<const std::uint8_t> disabled,
                      std::span<float> output) {
    const std::size_t in_size = static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width;
    const std::size_t w_size = static_cast<std::size_t>(s.out_filters) * s.in_channels * s.kernel * s.kernel;
    const std::size_t out_size = static_cast<std::size_t>(s.out_filters) * s.out_height() * s.out_width();
    if (s.stride < 1 || s.pad < 0 || s.kernel < 1 || s.out_height() < 1 || s.out_width() < 1) {
        throw ShapeError("invalid convolution geometry");
    }
    if (input.size() != in_size || weights.size() != w_size || bias.size() != static_cast<std::size_t>(s.out_filters) ||
        output.size() != out_size || (!disabled.empty() && disabled.size() != static_cast<std::size_t>(s.out_filters))) {
        throw ShapeError("conv2d buffer sizes do not match geometry (input " + std::to_string(input.size()) +
                         ", expected " + std::to_string(in_size) + ")");
    }
}

}  // namespace

namespace kernels {

void conv2d(const ConvShape& s, std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<const std::uint8_t> disabled, std::span<float> output) {
    check_conv_sizes(s, input, weights, bias, disabled, output);
    const int oh = s.out_height();
    const int ow = s.out_width();
    const int k = s.kernel;
    const std::size_t in_plane = static_cast<std::size_t>(s.in_height) * s.in_width;
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;

#pragma omp parallel
    {
        std::vector<double> acc(out_plane);
#pragma omp for schedule(static)
        for (int f = 0; f < s.out_filters; ++f) {
            float* out = output.data() + f * out_plane;
            if (!disabled.empty() && disabled[f]) {
                std::fill(out, out + out_plane, 0.0f);
                continue;
            }
            std::fill(acc.begin(), acc.end(), static_cast<double>(bias[f]));
            for (int c = 0; c < s.in_channels; ++c) {
                const float* in = input.data() + c * in_plane;
                const float* wk = weights.data() + (static_cast<std::size_t>(f) * s.in_channels + c) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const double w = wk[ky * k + kx];
                        if (w == 0.0) continue;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * s.stride - s.pad + ky;
                            if (iy < 0 || iy >= s.in_height) continue;
                            const float* row = in + static_cast<std::size_t>(iy) * s.in_width;
                            double* dst = acc.data() + static_cast<std::size_t>(oy) * ow;
                            // Valid output columns for this tap: 0 <= ox*stride - pad + kx < in_width.
                            const int shift = kx - s.pad;
                            int ox0 = shift >= 0 ? 0 : (-shift + s.stride - 1) / s.stride;
                            int ox1 = (s.in_width - 1 - shift) >= 0 ? (s.in_width - 1 - shift) / s.stride : -1;
                            ox1 = std::min(ox1, ow - 1);
                            for (int ox = ox0; ox <= ox1; ++ox) dst[ox] += w * row[ox * s.stride + shift];
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < out_plane; ++i) out[i] = static_cast<float>(acc[i]);
        }
    }
}

Image median_filter(const Image& img, int k) {
    Image out = img;
    const int r = k / 2;
    const std::size_t window = static_cast<std::size_t>(k) * k;
    const std::size_t mid = window / 2;

#pragma omp parallel
    {
        // 256-bin histogram per row sweep; the median is the first bin whose
        // cumulative count exceeds mid.
        std::array<int, 256> hist{};
#pragma omp for schedule(static)
        for (int y = 0; y < img.height; ++y) {
            for (int c = 0; c < img.channels; ++c) {
                hist.fill(0);
                auto sample = [&](int xx, int yy) {
                    xx = std::clamp(xx, 0, img.width - 1);
                    yy = std::clamp(yy, 0, img.height - 1);
                    return img.data[(static_cast<std::size_t>(yy) * img.width + xx) * img.channels + c];
                };
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) ++hist[sample(dx, y + dy)];
                for (int x = 0; x < img.width; ++x) {
                    if (x > 0) {
                        for (int dy = -r; dy <= r; ++dy) {
                            --hist[sample(x - 1 - r, y + dy)];
                            ++hist[sample(x + r, y + dy)];
                        }
                    }
                    std::size_t cum = 0;
                    int v = 0;
                    for (; v < 256; ++v) {
                        cum += static_cast<std::size_t>(hist[v]);
                        if (cum > mid) break;
                    }
                    out.data[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
                        static_cast<std::uint8_t>(v);
                }
            }
        }
    }
    return out;
}

std::vector<double> cosine_matrix(std::span<const std::vector<float>> embeddings) {
    const std::size_t n = embeddings.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (embeddings[i].size() != embeddings[i + 1].size()) throw ShapeError("embedding lengths differ");
    }
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (float v : embeddings[i]) s += static_cast<double>(v) * v;
        norms[i] = std::sqrt(s);
    }
    std::vector<double> out(n * n, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto& a = embeddings[i];
        for (std::size_t j = i; j < n; ++j) {
            const auto& b = embeddings[j];
            double dot = 0.0;
            for (std::size_t d = 0; d < a.size(); ++d) dot += static_cast<double>(a[d]) * b[d];
            const double denom = norms[i] * norms[j];
            const double s = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    return out;
}

}  // namespace kernels

namespace reference {

void conv2d(const ConvShape& s, std::span<const float> input, std::span<const float> weights,
            std::span<const float> bias, std::span<const std::uint8_t> disabled, std::span<float> output) {
    check_conv_sizes(s, input, weights, bias, disabled, output);
    const int oh = s.out_height();
    const int ow = s.out_width();
    for (int f = 0; f < s.out_filters; ++f) {
        const bool off = !disabled.empty() && disabled[f];
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double sum = off ? 0.0 : bias[f];
                for (int c = 0; c < s.in_channels && !off; ++c) {
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            const int iy = oy * s.stride - s.pad + ky;
                            const int ix = ox * s.stride - s.pad + kx;
                            if (iy < 0 || ix < 0 || iy >= s.in_height || ix >= s.in_width) continue;
                            sum += static_cast<double>(
                                       weights[((static_cast<std::size_t>(f) * s.in_channels + c) * s.kernel + ky) *
                                                   s.kernel +
                                               kx]) *
                                   input[(static_cast<std::size_t>(c) * s.in_height + iy) * s.in_width + ix];
                        }
                    }
                }
                output[(static_cast<std::size_t>(f) * oh + oy) * ow + ox] = static_cast<float>(sum);
            }
        }
    }
}

Image median_filter(const Image& img, int k) {
    Image out = img;
    const int r = k / 2;
    std::vector<std::uint8_t> window;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                window.clear();
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        const int xx = std::clamp(x + dx, 0, img.width - 1);
                        const int yy = std::clamp(y + dy, 0, img.height - 1);
                        window.push_back(img.at(xx, yy, c));
                    }
                }
                std::sort(window.begin(), window.end());
                out.at(x, y, c) = window[window.size() / 2];
            }
        }
    }
    return out;
}

std::vector<double> cosine_matrix(std::span<const std::vector<float>> embeddings) {
    const std::size_t n = embeddings.size();
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = cosine_similarity(embeddings[i], embeddings[j]);
    return out;
}

}  // namespace reference

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_similarity length mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace advface
