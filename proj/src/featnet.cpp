#include "advface/featnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "advface/error.hpp"
#include "binio.hpp"

namespace advface {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string layer_context(std::size_t i) { return "layer " + std::to_string(i); }

}  // namespace

LayerKind kind_of(const LayerDef& layer) noexcept { return static_cast<LayerKind>(layer.index()); }

// ---------------------------------------------------------------------------
// NetworkModel

NetworkModel::NetworkModel(std::vector<LayerDef> layers, std::vector<int> tap_points, InputSpec input)
    : layers_(std::move(layers)), taps_(std::move(tap_points)), input_(input) {
    if (input_.width < 1 || input_.height < 1 || input_.channels < 1) throw ShapeError("invalid input spec");
    std::array<int, 3> shape{input_.channels, input_.height, input_.width};
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string where = layer_context(i);
        shape = std::visit(
            overloaded{
                [&](const ConvLayer& c) -> std::array<int, 3> {
                    if (c.in_channels != shape[0]) throw ShapeError(where + ": conv expects " + std::to_string(c.in_channels) + " input channels, got " + std::to_string(shape[0]));
                    if (c.stride < 1 || c.pad < 0 || c.kernel < 1 || c.out_filters < 1) throw ShapeError(where + ": invalid conv geometry");
                    if (c.weights.size() != static_cast<std::size_t>(c.out_filters) * c.in_channels * c.kernel * c.kernel ||
                        c.bias.size() != static_cast<std::size_t>(c.out_filters)) {
                        throw ShapeError(where + ": conv weight tensor size does not match its dims");
                    }
                    const ConvShape cs{c.in_channels, shape[1], shape[2], c.out_filters, c.kernel, c.stride, c.pad};
                    if (cs.out_height() < 1 || cs.out_width() < 1) throw ShapeError(where + ": conv output is empty");
                    return {c.out_filters, cs.out_height(), cs.out_width()};
                },
                [&](const ReluLayer&) { return shape; },
                [&](const MaxPoolLayer& p) -> std::array<int, 3> {
                    if (p.window < 1 || p.stride < 1) throw ShapeError(where + ": invalid pool geometry");
                    const int h = (shape[1] - p.window) / p.stride + 1;
                    const int w = (shape[2] - p.window) / p.stride + 1;
                    if (h < 1 || w < 1) throw ShapeError(where + ": pool output is empty");
                    return {shape[0], h, w};
                },
                [&](const FlattenLayer&) -> std::array<int, 3> { return {shape[0] * shape[1] * shape[2], 1, 1}; },
                [&](const DenseLayer& d) -> std::array<int, 3> {
                    if (d.in_dim != shape[0] * shape[1] * shape[2]) throw ShapeError(where + ": dense expects " + std::to_string(d.in_dim) + " inputs");
                    if (d.weights.size() != static_cast<std::size_t>(d.out_dim) * d.in_dim ||
                        d.bias.size() != static_cast<std::size_t>(d.out_dim)) {
                        throw ShapeError(where + ": dense weight matrix size does not match its dims");
                    }
                    return {d.out_dim, 1, 1};
                },
                [&](const L2NormLayer&) { return shape; },
            },
            layers_[i]);
        shapes_.push_back(shape);
    }
    for (std::size_t t = 0; t < taps_.size(); ++t) {
        if (taps_[t] < 0 || taps_[t] >= static_cast<int>(layers_.size()) || (t > 0 && taps_[t] <= taps_[t - 1])) {
            throw ShapeError("tap points must be strictly increasing layer indices");
        }
    }
}

std::vector<std::size_t> NetworkModel::tap_lengths() const {
    std::vector<std::size_t> out;
    for (int t : taps_) {
        const auto& s = shapes_[static_cast<std::size_t>(t)];
        out.push_back(static_cast<std::size_t>(s[0]) * s[1] * s[2]);
    }
    return out;
}

std::vector<int> NetworkModel::conv_layers() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (std::holds_alternative<ConvLayer>(layers_[i])) out.push_back(static_cast<int>(i));
    return out;
}

int NetworkModel::filter_count(int layer_index) const {
    if (layer_index < 0 || layer_index >= static_cast<int>(layers_.size()) ||
        !std::holds_alternative<ConvLayer>(layers_[static_cast<std::size_t>(layer_index)])) {
        throw ShapeError("layer " + std::to_string(layer_index) + " is not a conv layer");
    }
    return std::get<ConvLayer>(layers_[static_cast<std::size_t>(layer_index)]).out_filters;
}

void NetworkModel::check_mask(const FilterMask& mask) const {
    for (const auto& [layer, filter] : mask.disabled) {
        const int n = filter_count(layer);
        if (filter < 0 || filter >= n) {
            throw ShapeError("mask references filter " + std::to_string(filter) + " of layer " + std::to_string(layer) +
                             " which has " + std::to_string(n) + " filters");
        }
    }
}

NetworkModel NetworkModel::with_zeroed_filters(const FilterMask& mask) const {
    check_mask(mask);
    auto layers = layers_;
    for (const auto& [layer, filter] : mask.disabled) {
        auto& conv = std::get<ConvLayer>(layers[static_cast<std::size_t>(layer)]);
        const std::size_t per = static_cast<std::size_t>(conv.in_channels) * conv.kernel * conv.kernel;
        std::fill_n(conv.weights.begin() + static_cast<std::ptrdiff_t>(per * filter), per, 0.0f);
        conv.bias[static_cast<std::size_t>(filter)] = 0.0f;
    }
    return NetworkModel(std::move(layers), taps_, input_);
}

std::vector<std::size_t> LayerActivations::lengths() const {
    std::vector<std::size_t> out;
    for (const auto& t : taps) out.push_back(t.size());
    return out;
}

// ---------------------------------------------------------------------------
// Construction

NetworkModel default_network(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto conv = [&](int in, int out) {
        ConvLayer c{out, in, 3, 1, 1, {}, std::vector<float>(static_cast<std::size_t>(out), 0.0f)};
        std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (in * 9)));
        c.weights.resize(static_cast<std::size_t>(out) * in * 9);
        for (auto& w : c.weights) w = static_cast<float>(g(rng));
        return c;
    };
    std::vector<LayerDef> layers;
    layers.emplace_back(conv(1, 8));     // 0
    layers.emplace_back(ReluLayer{});    // 1  tap
    layers.emplace_back(MaxPoolLayer{}); // 2
    layers.emplace_back(conv(8, 16));    // 3
    layers.emplace_back(ReluLayer{});    // 4  tap
    layers.emplace_back(MaxPoolLayer{}); // 5
    layers.emplace_back(conv(16, 32));   // 6
    layers.emplace_back(ReluLayer{});    // 7  tap
    layers.emplace_back(MaxPoolLayer{}); // 8
    layers.emplace_back(conv(32, 32));   // 9
    layers.emplace_back(ReluLayer{});    // 10 tap
    layers.emplace_back(FlattenLayer{}); // 11
    DenseLayer dense{64, 8 * 8 * 32, {}, std::vector<float>(64, 0.0f)};
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / dense.in_dim));
    dense.weights.resize(static_cast<std::size_t>(dense.out_dim) * dense.in_dim);
    for (auto& w : dense.weights) w = static_cast<float>(g(rng));
    layers.emplace_back(std::move(dense));  // 12 tap
    layers.emplace_back(L2NormLayer{});     // 13
    return NetworkModel(std::move(layers), {1, 4, 7, 10, 12}, InputSpec{64, 64, 1});
}

// ---------------------------------------------------------------------------
// Forward pass

Tensor image_to_tensor(const Image& img) {
    img.validate();
    Tensor t(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at(c, y, x) = static_cast<float>(img.at(x, y, c) / 255.0);
    return t;
}

namespace {

using ConvFn = void (*)(const ConvShape&, std::span<const float>, std::span<const float>, std::span<const float>,
                        std::span<const std::uint8_t>, std::span<float>);

Tensor apply_layer(const LayerDef& layer, int layer_index, Tensor in, const FilterMask* mask, ConvFn conv_fn) {
    return std::visit(
        overloaded{
            [&](const ConvLayer& c) {
                const ConvShape cs{c.in_channels, in.height, in.width, c.out_filters, c.kernel, c.stride, c.pad};
                Tensor out(c.out_filters, cs.out_height(), cs.out_width());
                std::vector<std::uint8_t> disabled;
                if (mask != nullptr && !mask->empty()) {
                    disabled.assign(static_cast<std::size_t>(c.out_filters), 0);
                    for (const auto& [l, f] : mask->disabled)
                        if (l == layer_index) disabled[static_cast<std::size_t>(f)] = 1;
                }
                conv_fn(cs, in.values, c.weights, c.bias, disabled, out.values);
                return out;
            },
            [&](const ReluLayer&) {
                for (auto& v : in.values) v = v > 0.0f ? v : 0.0f;
                return std::move(in);
            },
            [&](const MaxPoolLayer& p) {
                const int oh = (in.height - p.window) / p.stride + 1;
                const int ow = (in.width - p.window) / p.stride + 1;
                Tensor out(in.channels, oh, ow);
                for (int c = 0; c < in.channels; ++c)
                    for (int y = 0; y < oh; ++y)
                        for (int x = 0; x < ow; ++x) {
                            float m = -std::numeric_limits<float>::infinity();
                            for (int dy = 0; dy < p.window; ++dy)
                                for (int dx = 0; dx < p.window; ++dx)
                                    m = std::max(m, in.at(c, y * p.stride + dy, x * p.stride + dx));
                            out.at(c, y, x) = m;
                        }
                return out;
            },
            [&](const FlattenLayer&) {
                in.channels = static_cast<int>(in.values.size());
                in.height = 1;
                in.width = 1;
                return std::move(in);
            },
            [&](const DenseLayer& d) {
                Tensor out(d.out_dim, 1, 1);
                for (int o = 0; o < d.out_dim; ++o) {
                    const float* row = d.weights.data() + static_cast<std::size_t>(o) * d.in_dim;
                    double acc = d.bias[static_cast<std::size_t>(o)];
                    for (int i = 0; i < d.in_dim; ++i) acc += static_cast<double>(row[i]) * in.values[static_cast<std::size_t>(i)];
                    out.values[static_cast<std::size_t>(o)] = static_cast<float>(acc);
                }
                return out;
            },
            [&](const L2NormLayer&) {
                double ss = 0.0;
                for (float v : in.values) ss += static_cast<double>(v) * v;
                if (ss > 0.0) {
                    const double inv = 1.0 / std::sqrt(ss);
                    for (auto& v : in.values) v = static_cast<float>(v * inv);
                }
                return std::move(in);
            },
        },
        layer);
}

void check_input(const NetworkModel& model, const Image& img) {
    const auto& in = model.input_spec();
    if (img.width != in.width || img.height != in.height || img.channels != in.channels) {
        throw ShapeError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) + "x" +
                         std::to_string(img.channels) + " does not match network input " + std::to_string(in.width) +
                         "x" + std::to_string(in.height) + "x" + std::to_string(in.channels));
    }
}

template <class Visitor>
std::vector<float> run(const NetworkModel& model, const Image& img, const FilterMask* mask, ConvFn conv_fn,
                       Visitor&& on_output) {
    check_input(model, img);
    if (mask != nullptr) model.check_mask(*mask);
    Tensor t = image_to_tensor(img);
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        t = apply_layer(layers[i], static_cast<int>(i), std::move(t), mask, conv_fn);
        on_output(i, t);
    }
    return std::move(t.values);
}

ForwardResult forward_with(const NetworkModel& model, const Image& img, const FilterMask* mask, ConvFn conv_fn) {
    ForwardResult r;
    const auto& taps = model.tap_points();
    std::size_t next = 0;
    r.embedding = run(model, img, mask, conv_fn, [&](std::size_t i, const Tensor& t) {
        if (next < taps.size() && static_cast<std::size_t>(taps[next]) == i) {
            r.acts.taps.push_back(t.values);
            ++next;
        }
    });
    return r;
}

}  // namespace

ForwardResult forward(const NetworkModel& model, const Image& img, const FilterMask* mask) {
    return forward_with(model, img, mask, &kernels::conv2d);
}

ForwardResult forward_reference(const NetworkModel& model, const Image& img, const FilterMask* mask) {
    return forward_with(model, img, mask, &reference::conv2d);
}

std::vector<float> embed(const NetworkModel& model, const Image& img, const FilterMask* mask) {
    return run(model, img, mask, &kernels::conv2d, [](std::size_t, const Tensor&) {});
}

std::vector<Tensor> forward_trace(const NetworkModel& model, const Image& img, const FilterMask* mask) {
    std::vector<Tensor> outputs;
    run(model, img, mask, &kernels::conv2d, [&](std::size_t, const Tensor& t) { outputs.push_back(t); });
    return outputs;
}

std::vector<std::vector<float>> embed_batch(const NetworkModel& model, std::span<const Image> images,
                                            const FilterMask* mask) {
    if (mask != nullptr) model.check_mask(*mask);
    for (const auto& img : images) check_input(model, img);
    std::vector<std::vector<float>> out(images.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(images.size()); ++i) {
        out[static_cast<std::size_t>(i)] = embed(model, images[static_cast<std::size_t>(i)], mask);
    }
    return out;
}

// ---------------------------------------------------------------------------
// FNET1 weight container

namespace {

constexpr std::string_view kWeightMagic = "FNET1";
constexpr std::string_view kTapTrailer = "TAPS";

}  // namespace

std::vector<std::uint8_t> encode_weights(const NetworkModel& model) {
    binio::Writer w;
    w.bytes(kWeightMagic);
    w.u32(static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& layer : model.layers()) {
        w.u8(static_cast<std::uint8_t>(kind_of(layer)));
        std::visit(overloaded{
                       [&](const ConvLayer& c) {
                           for (int v : {c.out_filters, c.in_channels, c.kernel, c.stride, c.pad}) w.u32(static_cast<std::uint32_t>(v));
                           for (float v : c.weights) w.f32(v);
                           for (float v : c.bias) w.f32(v);
                       },
                       [&](const MaxPoolLayer& p) {
                           w.u32(static_cast<std::uint32_t>(p.window));
                           w.u32(static_cast<std::uint32_t>(p.stride));
                       },
                       [&](const DenseLayer& d) {
                           w.u32(static_cast<std::uint32_t>(d.out_dim));
                           w.u32(static_cast<std::uint32_t>(d.in_dim));
                           for (float v : d.weights) w.f32(v);
                           for (float v : d.bias) w.f32(v);
                       },
                       [](const auto&) {},
                   },
                   layer);
    }
    // Trailer: input geometry and tap points.
    w.bytes(kTapTrailer);
    const auto& in = model.input_spec();
    w.u32(static_cast<std::uint32_t>(in.width));
    w.u32(static_cast<std::uint32_t>(in.height));
    w.u32(static_cast<std::uint32_t>(in.channels));
    w.u32(static_cast<std::uint32_t>(model.tap_points().size()));
    for (int t : model.tap_points()) w.u32(static_cast<std::uint32_t>(t));
    return std::move(w.data());
}

NetworkModel decode_weights(std::span<const std::uint8_t> bytes) {
    binio::Reader r(bytes, "weight file");
    r.expect_magic(kWeightMagic);
    const std::uint32_t n_layers = r.u32("layer count");
    if (n_layers > 4096) r.fail("implausible layer count " + std::to_string(n_layers));
    constexpr std::uint32_t kMaxDim = 1u << 20;
    std::vector<LayerDef> layers;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::string where = "layer " + std::to_string(i);
        auto dim = [&](const char* name) {
            const std::uint32_t v = r.u32(where + " " + name);
            if (v > kMaxDim) r.fail(where + ": implausible " + name + " " + std::to_string(v));
            return static_cast<int>(v);
        };
        const std::uint8_t kind = r.u8(where + " kind");
        switch (static_cast<LayerKind>(kind)) {
            case LayerKind::Conv: {
                ConvLayer c;
                c.out_filters = dim("out_filters");
                c.in_channels = dim("in_channels");
                c.kernel = dim("kernel");
                c.stride = dim("stride");
                c.pad = dim("pad");
                const std::size_t nw = static_cast<std::size_t>(c.out_filters) * c.in_channels * c.kernel * c.kernel;
                if (nw > bytes.size()) r.fail(where + ": weight count exceeds file size");
                c.weights.resize(nw);
                for (auto& v : c.weights) v = r.f32(where + " weights");
                c.bias.resize(static_cast<std::size_t>(c.out_filters));
                for (auto& v : c.bias) v = r.f32(where + " biases");
                layers.emplace_back(std::move(c));
                break;
            }
            case LayerKind::Relu: layers.emplace_back(ReluLayer{}); break;
            case LayerKind::MaxPool: {
                MaxPoolLayer p;
                p.window = dim("window");
                p.stride = dim("stride");
                layers.emplace_back(p);
                break;
            }
            case LayerKind::Flatten: layers.emplace_back(FlattenLayer{}); break;
            case LayerKind::Dense: {
                DenseLayer d;
                d.out_dim = dim("out_dim");
                d.in_dim = dim("in_dim");
                const std::size_t nw = static_cast<std::size_t>(d.out_dim) * d.in_dim;
                if (nw > bytes.size()) r.fail(where + ": weight count exceeds file size");
                d.weights.resize(nw);
                for (auto& v : d.weights) v = r.f32(where + " weights");
                d.bias.resize(static_cast<std::size_t>(d.out_dim));
                for (auto& v : d.bias) v = r.f32(where + " biases");
                layers.emplace_back(std::move(d));
                break;
            }
            case LayerKind::L2Norm: layers.emplace_back(L2NormLayer{}); break;
            default: r.fail(where + ": unknown layer kind " + std::to_string(kind));
        }
    }

    InputSpec input{64, 64, 1};
    std::vector<int> taps;
    if (r.at_end()) {
        // Files without the trailer: 64x64 input, taps after every ReLU and dense layer.
        if (!layers.empty() && std::holds_alternative<ConvLayer>(layers.front()))
            input.channels = std::get<ConvLayer>(layers.front()).in_channels;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto k = kind_of(layers[i]);
            if (k == LayerKind::Relu || k == LayerKind::Dense) taps.push_back(static_cast<int>(i));
        }
    } else {
        r.expect_magic(kTapTrailer);
        input.width = static_cast<int>(r.u32("input width"));
        input.height = static_cast<int>(r.u32("input height"));
        input.channels = static_cast<int>(r.u32("input channels"));
        const std::uint32_t n_taps = r.u32("tap count");
        if (n_taps > n_layers) r.fail("tap count exceeds layer count");
        for (std::uint32_t t = 0; t < n_taps; ++t) taps.push_back(static_cast<int>(r.u32("tap index")));
        if (!r.at_end()) r.fail("trailing bytes after tap trailer");
    }
    try {
        return NetworkModel(std::move(layers), std::move(taps), input);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("weight file: ") + e.what());
    }
}

void save_weights(const NetworkModel& model, const std::filesystem::path& path) {
    binio::write_file(path.string(), encode_weights(model));
}

NetworkModel load_weights(const std::filesystem::path& path) {
    const auto bytes = binio::read_file(path.string());
    try {
        return decode_weights(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace advface
