#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "advface/image.hpp"
#include "advface/kernels.hpp"
#include "advface/tensor.hpp"

namespace advface {

enum class LayerKind : std::uint8_t { Conv = 0, Relu = 1, MaxPool = 2, Flatten = 3, Dense = 4, L2Norm = 5 };

struct ConvLayer {
    int out_filters = 1;
    int in_channels = 1;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    std::vector<float> weights;  // [out][in][k][k]
    std::vector<float> bias;     // [out]
    bool operator==(const ConvLayer&) const = default;
};

struct ReluLayer {
    bool operator==(const ReluLayer&) const = default;
};

struct MaxPoolLayer {
    int window = 2;
    int stride = 2;
    bool operator==(const MaxPoolLayer&) const = default;
};

struct FlattenLayer {
    bool operator==(const FlattenLayer&) const = default;
};

struct DenseLayer {
    int out_dim = 1;
    int in_dim = 1;
    std::vector<float> weights;  // [out][in]
    std::vector<float> bias;     // [out]
    bool operator==(const DenseLayer&) const = default;
};

/// Scales its input to unit L2 norm; the zero vector passes through unchanged.
struct L2NormLayer {
    bool operator==(const L2NormLayer&) const = default;
};

using LayerDef = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, FlattenLayer, DenseLayer, L2NormLayer>;

LayerKind kind_of(const LayerDef& layer) noexcept;

struct InputSpec {
    int width = 64;
    int height = 64;
    int channels = 1;
    bool operator==(const InputSpec&) const = default;
};

/// Disabled (layer_index, filter_index) pairs; layer_index addresses a conv layer in NetworkModel::layers().
struct FilterMask {
    std::set<std::pair<int, int>> disabled;

    bool empty() const noexcept { return disabled.empty(); }
    bool operator==(const FilterMask&) const = default;
};

/// Immutable feed-forward network with activation taps.
class NetworkModel {
public:
    NetworkModel(std::vector<LayerDef> layers, std::vector<int> tap_points, InputSpec input);

    const std::vector<LayerDef>& layers() const noexcept { return layers_; }
    const std::vector<int>& tap_points() const noexcept { return taps_; }
    const InputSpec& input_spec() const noexcept { return input_; }

    /// Output shape (c, h, w) of every layer, computed from the architecture.
    const std::vector<std::array<int, 3>>& output_shapes() const noexcept { return shapes_; }
    /// Flattened lengths of the tapped activations.
    std::vector<std::size_t> tap_lengths() const;
    std::size_t n_taps() const noexcept { return taps_.size(); }

    /// Indices of conv layers, in order.
    std::vector<int> conv_layers() const;
    int filter_count(int layer_index) const;

    /// Throws ShapeError if a pair does not reference an existing conv filter.
    void check_mask(const FilterMask& mask) const;

    /// Copy with the masked filters' weights and biases literally set to zero.
    NetworkModel with_zeroed_filters(const FilterMask& mask) const;

    bool operator==(const NetworkModel&) const = default;

private:
    std::vector<LayerDef> layers_;
    std::vector<int> taps_;
    InputSpec input_;
    std::vector<std::array<int, 3>> shapes_;
};

/// Per-tap flattened activations.
struct LayerActivations {
    std::vector<std::vector<float>> taps;
    std::vector<std::size_t> lengths() const;
};

struct ForwardResult {
    std::vector<float> embedding;
    LayerActivations acts;
};

/// Architecture for 64x64x1 inputs with He-scaled Gaussian weights and zero
/// biases. Taps after each ReLU and after the dense layer.
NetworkModel default_network(std::uint64_t seed);

/// Pixels scaled to [0, 1] as a CHW tensor.
Tensor image_to_tensor(const Image& img);

/// Full forward pass recording the tapped activations.
ForwardResult forward(const NetworkModel& model, const Image& img, const FilterMask* mask = nullptr);

/// Forward pass returning only the embedding.
std::vector<float> embed(const NetworkModel& model, const Image& img, const FilterMask* mask = nullptr);

/// Output of every layer, in order (index i = output of layers()[i]).
std::vector<Tensor> forward_trace(const NetworkModel& model, const Image& img, const FilterMask* mask = nullptr);

/// Embeddings for a batch of images; parallel over images, output order matches input.
std::vector<std::vector<float>> embed_batch(const NetworkModel& model, std::span<const Image> images,
                                            const FilterMask* mask = nullptr);

/// Same forward semantics as forward(), computed with the serial reference kernels.
ForwardResult forward_reference(const NetworkModel& model, const Image& img, const FilterMask* mask = nullptr);

void save_weights(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_weights(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_weights(const NetworkModel& model);
NetworkModel decode_weights(std::span<const std::uint8_t> bytes);

}  // namespace advface
