#include "advface/synthface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "advface/error.hpp"
#include "advface/serialize.hpp"
#include "advface/seed.hpp"

namespace advface {

namespace {

constexpr std::uint64_t kSubjectStream = 0x5B7EC7ull;
constexpr int kSupersample = 2;
constexpr double kJitterTranslation = 2.0;
constexpr double kJitterBrightness = 10.0;
constexpr double kSensorNoiseSigma = 4.0;
constexpr int kBackground = 96;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Smooth identity-specific shading: a handful of broad Gaussian blobs.
struct Texture {
    struct Blob {
        double x, y, sigma, amplitude;
    };
    std::vector<Blob> blobs;

    Texture(std::uint64_t seed, const SubjectParams& s) {
        std::mt19937_64 rng(seed);
        for (int i = 0; i < 10; ++i) {
            blobs.push_back({s.face_cx + uniform(rng, -0.8, 0.8) * s.face_ax,
                             s.face_cy + uniform(rng, -0.8, 0.8) * s.face_ay,
                             uniform(rng, 0.25, 0.5) * s.face_ax, uniform(rng, -100.0, 100.0)});
        }
    }

    double operator()(double x, double y) const {
        double v = 0.0;
        for (const auto& b : blobs) {
            const double dx = x - b.x;
            const double dy = y - b.y;
            v += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        return v;
    }
};

// Intensity of the un-jittered face at continuous coordinates (x, y).
double shade(const SubjectParams& s, const Texture& tex, double x, double y) {
    const double ex = (x - s.face_cx) / s.face_ax;
    const double ey = (y - s.face_cy) / s.face_ay;
    const double r2 = ex * ex + ey * ey;
    if (r2 > 1.0) return kBackground;
    if (y < s.hairline) return s.hair_intensity;

    double v = s.base_intensity + tex(x, y);
    auto in_eye = [&](double cx, double cy) {
        const double dx = (x - cx) / (1.4 * s.eye_radius);
        const double dy = (y - cy) / s.eye_radius;
        return dx * dx + dy * dy <= 1.0;
    };
    const double brow_left = s.left_eye_x - 1.8 * s.eye_radius;
    const double brow_right = s.right_eye_x + 1.8 * s.eye_radius;
    const double mid = 0.5 * (s.left_eye_x + s.right_eye_x);
    const bool brow = y >= s.brow_top && y <= s.brow_bottom && x >= brow_left && x <= brow_right &&
                      std::abs(x - mid) > 0.6 * s.eye_radius;
    if (in_eye(s.left_eye_x, s.left_eye_y) || in_eye(s.right_eye_x, s.right_eye_y)) {
        v = s.feature_intensity;
    } else if (brow) {
        v = 0.5 * (v + s.feature_intensity);
    } else if (y >= s.mouth_top && y <= s.mouth_bottom && std::abs(x - mid) <= s.mouth_halfwidth) {
        v = s.feature_intensity + 20;
    } else {
        // Nose: a shaded wedge from the eye line down to nose_y.
        const double eye_y = 0.5 * (s.left_eye_y + s.right_eye_y);
        if (y > eye_y && y <= s.nose_y) {
            const double t = (y - eye_y) / (s.nose_y - eye_y);
            if (std::abs(x - mid) <= s.nose_halfwidth * t) v -= 35.0;
        }
    }
    return v;
}

int clamp_to_byte(double v) { return static_cast<int>(std::clamp(std::lround(v), 0L, 255L)); }

Point to_point(double x, double y, int size) {
    return {std::clamp(static_cast<int>(std::lround(x)), 0, size), std::clamp(static_cast<int>(std::lround(y)), 0, size)};
}

LandmarkSet make_landmarks(const SubjectParams& s, double tx, double ty, int size) {
    LandmarkSet lm;
    lm.left_eye = to_point(s.left_eye_x + tx, s.left_eye_y + ty, size - 1);
    lm.right_eye = to_point(s.right_eye_x + tx, s.right_eye_y + ty, size - 1);
    const double mid = 0.5 * (s.left_eye_x + s.right_eye_x);
    lm.nose = to_point(mid + tx, s.nose_y + ty, size - 1);
    lm.mouth_center = to_point(mid + tx, 0.5 * (s.mouth_top + s.mouth_bottom) + ty, size - 1);

    // Forehead and brows: from the hairline down to just above the eyes.
    const double left = s.left_eye_x - 2.2 * s.eye_radius;
    const double right = s.right_eye_x + 2.2 * s.eye_radius;
    const double bottom = std::min(s.left_eye_y, s.right_eye_y) - 1.1 * s.eye_radius;
    const double top = s.hairline;
    const double inset = 0.15 * (right - left);
    lm.forehead_polygon.vertices = {
        to_point(left + tx, bottom + ty, size),         to_point(left + inset + tx, top + ty, size),
        to_point(right - inset + tx, top + ty, size),   to_point(right + tx, bottom + ty, size),
    };

    // Lower face: jaw outline from cheek level below the nose around the chin,
    // closed across the upper lip so the mouth surround is included.
    const double start_y = s.nose_y - 0.25 * (s.nose_y - s.left_eye_y);
    const double sin0 = std::clamp((start_y - s.face_cy) / s.face_ay, -0.99, 0.99);
    const double theta0 = std::asin(sin0);
    const double theta1 = std::numbers::pi - theta0;
    constexpr int kArc = 12;
    for (int i = 0; i <= kArc; ++i) {
        const double t = theta0 + (theta1 - theta0) * i / kArc;
        const double x = s.face_cx + 0.95 * s.face_ax * std::cos(t);
        const double y = s.face_cy + 0.97 * s.face_ay * std::sin(t);
        lm.beard_polygon.vertices.push_back(to_point(x + tx, y + ty, size));
    }
    lm.beard_polygon.vertices.push_back(to_point(mid - s.nose_halfwidth + tx, s.nose_y + 1 + ty, size));
    lm.beard_polygon.vertices.push_back(to_point(mid + s.nose_halfwidth + tx, s.nose_y + 1 + ty, size));
    return lm;
}

}  // namespace

bool SubjectParams::valid() const noexcept {
    auto inside = [&](double x, double y) {
        const double ex = (x - face_cx) / face_ax;
        const double ey = (y - face_cy) / face_ay;
        return ex * ex + ey * ey < 1.0;
    };
    return right_eye_x > left_eye_x && inside(left_eye_x, left_eye_y) && inside(right_eye_x, right_eye_y) &&
           base_intensity >= 60 && base_intensity <= 200;
}

bool LandmarkSet::valid(int width, int height) const noexcept {
    auto in = [&](Point p) { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; };
    auto poly_in = [&](const Polygon& poly) {
        if (poly.degenerate()) return false;
        return std::all_of(poly.vertices.begin(), poly.vertices.end(),
                           [&](Point p) { return p.x >= 0 && p.y >= 0 && p.x <= width && p.y <= height; });
    };
    return right_eye.x > left_eye.x && in(left_eye) && in(right_eye) && in(nose) && in(mouth_center) &&
           poly_in(forehead_polygon) && poly_in(beard_polygon);
}

std::vector<Image> Dataset::images() const {
    std::vector<Image> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.image);
    return out;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.subject_id);
    return out;
}

SubjectParams subject_params(std::uint64_t seed, int subject_id, int image_size) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(subject_id), kSubjectStream));
    const double S = image_size;
    SubjectParams p;
    p.subject_id = subject_id;
    p.face_cx = 0.5 * S + uniform(rng, -0.03, 0.03) * S;
    p.face_cy = 0.53 * S + uniform(rng, -0.03, 0.03) * S;
    p.face_ax = uniform(rng, 0.30, 0.38) * S;
    p.face_ay = uniform(rng, 0.38, 0.45) * S;

    const double eye_gap = uniform(rng, 0.24, 0.36) * S;
    const double eye_y = p.face_cy - uniform(rng, 0.12, 0.28) * p.face_ay;
    p.left_eye_x = p.face_cx - 0.5 * eye_gap;
    p.right_eye_x = p.face_cx + 0.5 * eye_gap;
    p.left_eye_y = eye_y;
    p.right_eye_y = eye_y + uniform(rng, -0.01, 0.01) * S;
    p.eye_radius = uniform(rng, 0.030, 0.050) * S;

    p.brow_bottom = eye_y - p.eye_radius - uniform(rng, 0.02, 0.05) * S;
    p.brow_top = p.brow_bottom - uniform(rng, 0.02, 0.045) * S;
    p.hairline = std::max(p.face_cy - p.face_ay + 1.0, p.brow_top - uniform(rng, 0.08, 0.16) * S);

    p.nose_y = eye_y + uniform(rng, 0.14, 0.20) * S;
    p.nose_halfwidth = uniform(rng, 0.04, 0.08) * S;
    const double mouth_y = p.nose_y + uniform(rng, 0.08, 0.13) * S;
    const double mouth_half_height = uniform(rng, 0.012, 0.025) * S;
    p.mouth_top = mouth_y - mouth_half_height;
    p.mouth_bottom = mouth_y + mouth_half_height;
    p.mouth_halfwidth = uniform(rng, 0.07, 0.13) * S;

    p.base_intensity = std::uniform_int_distribution<int>(60, 200)(rng);
    p.hair_intensity = std::uniform_int_distribution<int>(10, 90)(rng);
    p.feature_intensity = std::uniform_int_distribution<int>(10, 50)(rng);
    p.texture_seed = rng();
    return p;
}

Sample render_sample(const SubjectParams& subject, int image_size, std::uint64_t seed, int sample_index) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(subject.subject_id),
                                    static_cast<std::uint64_t>(sample_index)));
    const int tx = std::uniform_int_distribution<int>(-static_cast<int>(kJitterTranslation),
                                                      static_cast<int>(kJitterTranslation))(rng);
    const int ty = std::uniform_int_distribution<int>(-static_cast<int>(kJitterTranslation),
                                                      static_cast<int>(kJitterTranslation))(rng);
    const double brightness = uniform(rng, -kJitterBrightness, kJitterBrightness);
    std::normal_distribution<double> noise(0.0, kSensorNoiseSigma);

    const Texture tex(subject.texture_seed, subject);
    Image img(image_size, image_size, 1);
    constexpr double step = 1.0 / kSupersample;
    for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < kSupersample; ++sy)
                for (int sx = 0; sx < kSupersample; ++sx)
                    acc += shade(subject, tex, x - tx + (sx + 0.5) * step, y - ty + (sy + 0.5) * step);
            const double v = acc / (kSupersample * kSupersample) + brightness + noise(rng);
            img.at(x, y) = static_cast<std::uint8_t>(clamp_to_byte(v));
        }
    }
    return Sample{std::move(img), make_landmarks(subject, tx, ty, image_size), subject.subject_id, sample_index};
}

Dataset generate_dataset(int n_subjects, int samples_per_subject, int image_size, std::uint64_t seed) {
    if (n_subjects < 2) throw ParameterError("generate_dataset: need at least 2 subjects");
    if (samples_per_subject < 2) throw ParameterError("generate_dataset: need at least 2 samples per subject");
    if (image_size < 48) throw ParameterError("generate_dataset: image_size must be >= 48");

    Dataset ds;
    ds.seed = seed;
    ds.image_size = image_size;
    ds.samples.resize(static_cast<std::size_t>(n_subjects) * samples_per_subject);
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < n_subjects; ++s) {
        const SubjectParams params = subject_params(seed, s, image_size);
        for (int k = 0; k < samples_per_subject; ++k) {
            ds.samples[static_cast<std::size_t>(s) * samples_per_subject + k] =
                render_sample(params, image_size, seed, k);
        }
    }
    return ds;
}

ProtocolSplit split_protocol(std::size_t n, double distorted_fraction, std::uint64_t seed) {
    if (!(distorted_fraction >= 0.0 && distorted_fraction <= 1.0)) {
        throw ParameterError("split_protocol: fraction must lie in [0, 1]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_distort = static_cast<std::size_t>(std::llround(distorted_fraction * static_cast<double>(n)));

    ProtocolSplit split;
    split.to_distort_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_distort));
    split.clean_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_distort), order.end());
    std::sort(split.to_distort_ids.begin(), split.to_distort_ids.end());
    std::sort(split.clean_ids.begin(), split.clean_ids.end());
    return split;
}

std::string sample_filename(const Sample& s) {
    char name[64];
    std::snprintf(name, sizeof name, "s%04d_%03d.pgm", s.subject_id, s.sample_index);
    return name;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    nlohmann::json entries = nlohmann::json::array();
    for (const auto& s : ds.samples) {
        const std::string name = sample_filename(s);
        write_image(s.image, dir / name);
        entries.push_back({{"path", name},
                           {"subject_id", s.subject_id},
                           {"sample_index", s.sample_index},
                           {"landmarks", s.landmarks}});
    }
    const nlohmann::json manifest = {{"seed", ds.seed}, {"image_size", ds.image_size}, {"images", entries}};
    write_json(manifest, dir / "manifest.json");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const nlohmann::json manifest = read_json(dir / "manifest.json");
    Dataset ds;
    try {
        ds.seed = manifest.value("seed", std::uint64_t{0});
        ds.image_size = manifest.value("image_size", 0);
        for (const auto& e : manifest.at("images")) {
            Sample s;
            s.image = read_image(dir / e.at("path").get<std::string>());
            s.subject_id = e.at("subject_id").get<int>();
            s.sample_index = e.at("sample_index").get<int>();
            s.landmarks = e.at("landmarks").get<LandmarkSet>();
            ds.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (ds.image_size == 0 && !ds.samples.empty()) ds.image_size = ds.samples.front().image.width;
    return ds;
}

}  // namespace advface
