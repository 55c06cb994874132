#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advface/image.hpp"

namespace advface {

/// Per-identity geometry and appearance. All lengths in pixels of the
/// un-jittered render.
struct SubjectParams {
    int subject_id = 0;
    double face_cx = 0, face_cy = 0;
    double face_ax = 0, face_ay = 0;  // semi-axes
    double left_eye_x = 0, left_eye_y = 0;
    double right_eye_x = 0, right_eye_y = 0;
    double eye_radius = 0;
    double brow_top = 0, brow_bottom = 0;
    double nose_y = 0, nose_halfwidth = 0;
    double mouth_top = 0, mouth_bottom = 0, mouth_halfwidth = 0;
    double hairline = 0;
    int base_intensity = 128;  // in [60, 200]
    int hair_intensity = 40;
    int feature_intensity = 30;
    std::uint64_t texture_seed = 0;

    bool valid() const noexcept;
};

struct LandmarkSet {
    Point left_eye;
    Point right_eye;
    Point nose;
    Point mouth_center;
    Polygon forehead_polygon;
    Polygon beard_polygon;

    /// Eye ordering, polygon validity and bounds against a width x height image.
    bool valid(int width, int height) const noexcept;
};

struct Sample {
    Image image;
    LandmarkSet landmarks;
    int subject_id = 0;
    int sample_index = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::uint64_t seed = 0;
    int image_size = 0;

    std::size_t size() const noexcept { return samples.size(); }
    std::vector<Image> images() const;
    std::vector<int> labels() const;
};

/// Identity parameters for one subject; a pure function of (seed, subject_id, image_size).
SubjectParams subject_params(std::uint64_t seed, int subject_id, int image_size);

/// Renders one jittered sample of a subject. Per-sample randomness comes from
/// derive_seed(seed, subject_id, sample_index).
Sample render_sample(const SubjectParams& subject, int image_size, std::uint64_t seed, int sample_index);

/// Deterministic corpus of n_subjects x samples_per_subject grayscale faces.
Dataset generate_dataset(int n_subjects, int samples_per_subject, int image_size, std::uint64_t seed);

struct ProtocolSplit {
    std::vector<std::size_t> clean_ids;
    std::vector<std::size_t> to_distort_ids;
};

/// Random partition with |to_distort| = round(fraction * n). Both id lists are sorted.
ProtocolSplit split_protocol(std::size_t n, double distorted_fraction, std::uint64_t seed);
inline ProtocolSplit split_protocol(const Dataset& ds, double distorted_fraction, std::uint64_t seed) {
    return split_protocol(ds.size(), distorted_fraction, seed);
}

/// Writes one PGM per sample plus manifest.json into `dir` (created if missing).
/// File name used for a sample inside a dataset directory, e.g. s0003_007.pgm.
std::string sample_filename(const Sample& s);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Loads a directory written by write_dataset (or any directory with a manifest.json).
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace advface
