#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "advface/image.hpp"
#include "advface/synthface.hpp"

namespace advface {

enum class DistortionKind { Grids, XMSB, ERO, FHBO, Beard };

std::string_view to_string(DistortionKind kind) noexcept;
DistortionKind parse_distortion_kind(std::string_view name);
bool is_face_level(DistortionKind kind) noexcept;

/// Parameters of one attack. Only the fields relevant to `kind` are used.
struct DistortionSpec {
    DistortionKind kind = DistortionKind::Grids;
    int rho_grids = 10;                        // number of grid lines
    std::array<double, 3> phi{0.03, 0.05, 0.10};  // per-bit flip fractions, MSB first
    double psi = 6.0;                          // eye band width divisor
    std::uint64_t seed = 0;

    static DistortionSpec grids(int rho, std::uint64_t seed) { return {DistortionKind::Grids, rho, {0.03, 0.05, 0.10}, 6.0, seed}; }
    static DistortionSpec xmsb(std::array<double, 3> phi, std::uint64_t seed) { return {DistortionKind::XMSB, 10, phi, 6.0, seed}; }
    static DistortionSpec ero(double psi) { return {DistortionKind::ERO, 10, {0.03, 0.05, 0.10}, psi, 0}; }
    static DistortionSpec fhbo() { return {DistortionKind::FHBO}; }
    static DistortionSpec beard() { return {DistortionKind::Beard}; }

    /// Throws ParameterError when a relevant field is out of range.
    void validate() const;

    bool operator==(const DistortionSpec&) const = default;
};

/// The five attacks with toolkit default parameters.
std::vector<DistortionSpec> default_distortions(std::uint64_t seed);

struct DistortionRecord {
    DistortionSpec spec;
    std::size_t affected_pixel_count = 0;
    std::uint64_t rng_trace_seed = 0;
};

using DistortionResult = std::pair<Image, DistortionRecord>;

/// Endpoints of the grid lines drawn by apply_grids: even-numbered lines start
/// on the top edge and end on the bottom row, odd-numbered ones run from the
/// left edge to the right column.
std::vector<std::pair<Point, Point>> grid_lines(int width, int height, int rho_grids, std::uint64_t seed);

DistortionResult apply_grids(const Image& img, int rho_grids, std::uint64_t seed);

/// Pixel sets X_1..X_3 (row-major indices) flipped by apply_xmsb.
std::array<std::vector<std::size_t>, 3> xmsb_selection(int width, int height, const std::array<double, 3>& phi,
                                                       std::uint64_t seed);

DistortionResult apply_xmsb(const Image& img, const std::array<double, 3>& phi, std::uint64_t seed);

/// Inclusive row range [first, last] blanked by apply_ero.
std::pair<int, int> ero_band(const LandmarkSet& landmarks, double psi, int height);

DistortionResult apply_ero(const Image& img, const LandmarkSet& landmarks, double psi);
DistortionResult apply_fhbo(const Image& img, const LandmarkSet& landmarks);
DistortionResult apply_beard(const Image& img, const LandmarkSet& landmarks);

/// Dispatches on spec.kind. Face-level kinds require landmarks.
DistortionResult apply(const DistortionSpec& spec, const Image& img, const std::optional<LandmarkSet>& landmarks);

/// Applies `spec` to one dataset sample; the randomized kinds reseed per sample
/// with derive_seed(spec.seed, sample_position).
DistortionResult apply_to_sample(const DistortionSpec& spec, const Sample& sample, std::size_t sample_position);

}  // namespace advface
