#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advface/featnet.hpp"

namespace advface {

/// Layer-wise mean activations over a clean corpus.
struct MeanReps {
    std::vector<std::vector<double>> mu;  // one vector per tapped layer
    std::size_t n_train = 0;

    bool operator==(const MeanReps&) const = default;
};

MeanReps compute_mean_reps(const NetworkModel& model, std::span<const Image> clean_images);

/// Sum of |a_z - b_z| / (|a_z| + |b_z|); coordinates where both are zero contribute 0.
template <class A, class B>
double canberra_distance(std::span<const A> a, std::span<const B> b) {
    double sum = 0.0;
    const std::size_t n = a.size() < b.size() ? a.size() : b.size();
    for (std::size_t z = 0; z < n; ++z) {
        const double x = static_cast<double>(a[z]);
        const double y = static_cast<double>(b[z]);
        const double denom = std::abs(x) + std::abs(y);
        if (denom > 0.0) sum += std::abs(x - y) / denom;
    }
    return sum;
}

/// One Canberra distance per tapped layer between the image's activations and the means.
std::vector<double> canberra_features(const NetworkModel& model, const MeanReps& mean_reps, const Image& img);
std::vector<double> canberra_features(const LayerActivations& acts, const MeanReps& mean_reps);

/// Features for many images, parallel over images.
std::vector<std::vector<double>> canberra_features_batch(const NetworkModel& model, const MeanReps& mean_reps,
                                                         std::span<const Image> images);

/// Linear decision function w.x + b.
struct LinearSvm {
    std::vector<double> w;
    double b = 0.0;

    double decision(std::span<const double> x) const;
};

/// 0.5 |w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b)), labels in {-1, +1}.
double hinge_objective(const LinearSvm& svm, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       double c);

/// Full-batch subgradient descent on hinge_objective. Each epoch is one step
/// whose length is halved until the objective does not increase, so the
/// per-epoch objective sequence is non-increasing. Deterministic.
LinearSvm fit_linear_svm(const std::vector<std::vector<double>>& x, const std::vector<int>& y, double c, int epochs,
                         std::vector<double>* objective_trace = nullptr);

struct DetectorModel {
    std::vector<double> w;
    double b = 0.0;
    double C = 1.0;
    std::vector<double> feat_mean;
    std::vector<double> feat_std;
    MeanReps mean_reps;
    std::string mean_reps_path;  // where mean_reps lives on disk, when persisted

    std::size_t n_layers() const noexcept { return w.size(); }
    std::vector<double> normalize(std::span<const double> features) const;
    double score(std::span<const double> features) const;
};

struct DetectorTrainingOptions {
    std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
    int folds = 5;
    int epochs = 400;
};

/// Trains on precomputed features (label -1 = clean, +1 = distorted). C is chosen
/// by k-fold cross-validated accuracy, ties toward the smaller C.
DetectorModel train_detector_on_features(const std::vector<std::vector<double>>& clean,
                                         const std::vector<std::vector<double>>& distorted, MeanReps mean_reps,
                                         std::uint64_t seed, const DetectorTrainingOptions& options = {});

DetectorModel train_detector(const NetworkModel& model, const MeanReps& mean_reps, std::span<const Image> clean,
                             std::span<const Image> distorted, const std::vector<double>& c_grid, std::uint64_t seed);

enum class Verdict { Clean, Distorted };

struct Detection {
    double score = 0.0;
    Verdict verdict = Verdict::Clean;
};

/// Distorted iff score > 0.
Detection classify(const DetectorModel& det, std::span<const double> features);
Detection detect(const DetectorModel& det, const NetworkModel& model, const Image& img);

void save_mean_reps(const MeanReps& reps, const std::filesystem::path& path);
MeanReps load_mean_reps(const std::filesystem::path& path);

/// JSON document; mean_reps are written next to it (MREP1) and referenced by path.
void save_detector(const DetectorModel& det, const std::filesystem::path& json_path,
                   const std::filesystem::path& mean_reps_path);
DetectorModel load_detector(const std::filesystem::path& json_path);

}  // namespace advface
