#include "advface/distortions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advface/error.hpp"
#include "advface/seed.hpp"

namespace advface {

namespace {

constexpr std::array<std::uint8_t, 3> kBitMasks{0x80, 0x40, 0x20};

}  // namespace

std::string_view to_string(DistortionKind kind) noexcept {
    switch (kind) {
        case DistortionKind::Grids: return "grids";
        case DistortionKind::XMSB: return "xmsb";
        case DistortionKind::ERO: return "ero";
        case DistortionKind::FHBO: return "fhbo";
        case DistortionKind::Beard: return "beard";
    }
    return "unknown";
}

DistortionKind parse_distortion_kind(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto k : {DistortionKind::Grids, DistortionKind::XMSB, DistortionKind::ERO, DistortionKind::FHBO,
                   DistortionKind::Beard}) {
        if (lower == to_string(k)) return k;
    }
    throw ParameterError("unknown distortion kind '" + std::string(name) + "'");
}

bool is_face_level(DistortionKind kind) noexcept {
    return kind == DistortionKind::ERO || kind == DistortionKind::FHBO || kind == DistortionKind::Beard;
}

void DistortionSpec::validate() const {
    switch (kind) {
        case DistortionKind::Grids:
            if (rho_grids < 0) throw ParameterError("rho_grids must be >= 0");
            break;
        case DistortionKind::XMSB:
            for (double f : phi) {
                if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("xmsb fractions must lie in [0, 1]");
            }
            break;
        case DistortionKind::ERO:
            if (!(psi > 0.0)) throw ParameterError("psi must be > 0");
            break;
        default: break;
    }
}

std::vector<DistortionSpec> default_distortions(std::uint64_t seed) {
    return {DistortionSpec::grids(10, derive_seed(seed, 1)), DistortionSpec::xmsb({0.03, 0.05, 0.10}, derive_seed(seed, 2)),
            DistortionSpec::ero(6.0), DistortionSpec::fhbo(), DistortionSpec::beard()};
}

// ---------------------------------------------------------------------------

std::vector<std::pair<Point, Point>> grid_lines(int width, int height, int rho_grids, std::uint64_t seed) {
    if (rho_grids < 0) throw ParameterError("rho_grids must be >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> col(0, width - 1);
    std::uniform_int_distribution<int> row(0, height - 1);
    std::vector<std::pair<Point, Point>> lines;
    lines.reserve(static_cast<std::size_t>(rho_grids));
    for (int i = 0; i < rho_grids; ++i) {
        if (i % 2 == 0) {
            const int x = col(rng);
            const int x_end = col(rng);
            lines.push_back({{x, 0}, {x_end, height - 1}});
        } else {
            const int y = row(rng);
            const int y_end = row(rng);
            lines.push_back({{0, y}, {width - 1, y_end}});
        }
    }
    return lines;
}

DistortionResult apply_grids(const Image& img, int rho_grids, std::uint64_t seed) {
    img.validate();
    Image out = img;
    std::vector<std::uint8_t> touched(img.pixel_count(), 0);
    for (const auto& [a, b] : grid_lines(img.width, img.height, rho_grids, seed)) {
        for (const Point& p : raster_line(a, b)) {
            out.set_pixel(p.x, p.y, 0);
            touched[static_cast<std::size_t>(p.y) * img.width + p.x] = 1;
        }
    }
    DistortionRecord rec{DistortionSpec::grids(rho_grids, seed),
                         static_cast<std::size_t>(std::count(touched.begin(), touched.end(), 1)), seed};
    return {std::move(out), rec};
}

std::array<std::vector<std::size_t>, 3> xmsb_selection(int width, int height, const std::array<double, 3>& phi,
                                                       std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    std::array<std::vector<std::size_t>, 3> sets;
    std::vector<std::size_t> pool(n);
    for (int i = 0; i < 3; ++i) {
        if (!(phi[i] >= 0.0 && phi[i] <= 1.0)) throw ParameterError("xmsb fractions must lie in [0, 1]");
        const auto count = static_cast<std::size_t>(std::floor(phi[i] * static_cast<double>(n)));
        // Independent stream per bit; a partial Fisher-Yates shuffle makes the
        // selection for a smaller fraction a prefix of the one for a larger fraction.
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i + 1)));
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t k = 0; k < count; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, n - 1);
            std::swap(pool[k], pool[pick(rng)]);
        }
        sets[i].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    }
    return sets;
}

DistortionResult apply_xmsb(const Image& img, const std::array<double, 3>& phi, std::uint64_t seed) {
    img.validate();
    Image out = img;
    std::vector<std::uint8_t> touched(img.pixel_count(), 0);
    const auto sets = xmsb_selection(img.width, img.height, phi, seed);
    for (int i = 0; i < 3; ++i) {
        for (std::size_t idx : sets[i]) {
            for (int c = 0; c < img.channels; ++c) out.data[idx * img.channels + c] ^= kBitMasks[i];
            touched[idx] = 1;
        }
    }
    DistortionRecord rec{DistortionSpec::xmsb(phi, seed),
                         static_cast<std::size_t>(std::count(touched.begin(), touched.end(), 1)), seed};
    return {std::move(out), rec};
}

std::pair<int, int> ero_band(const LandmarkSet& lm, double psi, int height) {
    if (!(psi > 0.0)) throw ParameterError("psi must be > 0");
    const int d_eye = lm.right_eye.x - lm.left_eye.x;
    if (d_eye <= 0) throw GeometryError("eye landmarks invalid: right eye x must exceed left eye x");
    // Nearest integer, halves rounded up.
    const int y_e = static_cast<int>(std::floor((lm.left_eye.y + lm.right_eye.y) / 2.0 + 0.5));
    const double half = d_eye / psi;
    const int first = std::max(0, static_cast<int>(std::ceil(y_e - half)));
    const int last = std::min(height - 1, static_cast<int>(std::floor(y_e + half)));
    return {first, last};
}

DistortionResult apply_ero(const Image& img, const LandmarkSet& landmarks, double psi) {
    img.validate();
    const auto [first, last] = ero_band(landmarks, psi, img.height);
    Image out = img;
    for (int y = first; y <= last; ++y)
        for (int x = 0; x < img.width; ++x) out.set_pixel(x, y, 0);
    const std::size_t rows = last >= first ? static_cast<std::size_t>(last - first + 1) : 0;
    return {std::move(out), DistortionRecord{DistortionSpec::ero(psi), rows * static_cast<std::size_t>(img.width), 0}};
}

namespace {

DistortionResult occlude_polygon(const Image& img, const Polygon& poly, DistortionSpec spec) {
    img.validate();
    const auto interior = polygon_interior(img.width, img.height, poly);
    Image out = img;
    for (const Point& p : interior) out.set_pixel(p.x, p.y, 0);
    return {std::move(out), DistortionRecord{spec, interior.size(), 0}};
}

}  // namespace

DistortionResult apply_fhbo(const Image& img, const LandmarkSet& landmarks) {
    return occlude_polygon(img, landmarks.forehead_polygon, DistortionSpec::fhbo());
}

DistortionResult apply_beard(const Image& img, const LandmarkSet& landmarks) {
    return occlude_polygon(img, landmarks.beard_polygon, DistortionSpec::beard());
}

DistortionResult apply(const DistortionSpec& spec, const Image& img, const std::optional<LandmarkSet>& landmarks) {
    spec.validate();
    if (is_face_level(spec.kind) && !landmarks) {
        throw UsageError(std::string("distortion '") + std::string(to_string(spec.kind)) + "' requires landmarks");
    }
    DistortionResult result;
    switch (spec.kind) {
        case DistortionKind::Grids: result = apply_grids(img, spec.rho_grids, spec.seed); break;
        case DistortionKind::XMSB: result = apply_xmsb(img, spec.phi, spec.seed); break;
        case DistortionKind::ERO: result = apply_ero(img, *landmarks, spec.psi); break;
        case DistortionKind::FHBO: result = apply_fhbo(img, *landmarks); break;
        case DistortionKind::Beard: result = apply_beard(img, *landmarks); break;
    }
    result.second.spec = spec;
    result.second.rng_trace_seed = spec.seed;
    return result;
}

DistortionResult apply_to_sample(const DistortionSpec& spec, const Sample& sample, std::size_t sample_position) {
    DistortionSpec local = spec;
    if (!is_face_level(spec.kind)) local.seed = derive_seed(spec.seed, sample_position);
    return apply(local, sample.image, sample.landmarks);
}

}  // namespace advface
