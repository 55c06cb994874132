#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "advface/detector.hpp"
#include "advface/distortions.hpp"
#include "advface/featnet.hpp"
#include "advface/synthface.hpp"

namespace advface {

/// Per-filter distortion sensitivity for every conv layer of a model.
struct SensitivityTable {
    std::vector<int> layer_indices;           // model layer index of each row
    std::vector<std::vector<double>> eps;     // eps[row][filter]
    std::vector<double> layer_agg;            // sum of each row
    std::size_t n_dis = 0;

    bool operator==(const SensitivityTable&) const = default;
};

struct MitigationPlan {
    int eta = 0;
    double kappa = 0.0;
    FilterMask mask;
    bool use_median_filter = true;
    int median_size = 5;

    bool operator==(const MitigationPlan&) const = default;
};

using ImagePair = std::pair<Image, Image>;  // (distorted, clean)

/// eps_ij = sum over pairs of || response_ij(distorted) - response_ij(clean) ||_2,
/// where response_ij is the post-ReLU output plane of filter j in conv layer i.
SensitivityTable compute_sensitivity(const NetworkModel& model, std::span<const ImagePair> pairs);

/// Picks the `eta` conv layers with the largest aggregate and disables the
/// ceil(kappa * filters) most sensitive filters in each.
MitigationPlan build_plan(const SensitivityTable& table, int eta, double kappa);

/// Embedding after the optional median filter and with the plan's filters disabled.
std::vector<float> mitigate(const NetworkModel& model, const MitigationPlan& plan, const Image& img);

/// Two-stage pipeline: images flagged by the detector go through mitigate(),
/// the rest through a plain forward pass. Parallel over images.
struct DefendedEmbeddings {
    std::vector<std::vector<float>> embeddings;
    std::vector<Verdict> verdicts;
};
DefendedEmbeddings defended_embeddings(const NetworkModel& model, const DetectorModel& det,
                                       const MitigationPlan& plan, std::span<const Image> images);

struct GridSearchOptions {
    std::vector<int> eta_grid{1, 2, 3};
    std::vector<double> kappa_grid{0.1, 0.25, 0.5};
    double far_target = 0.01;
    double distorted_fraction = 0.5;
    std::uint64_t seed = 0;
    bool use_median_filter = true;
};

struct GridSearchEntry {
    int eta = 0;
    double kappa = 0.0;
    double mean_gar = 0.0;
    std::vector<double> gar_per_distortion;
};

struct GridSearchResult {
    MitigationPlan plan;
    std::vector<GridSearchEntry> entries;  // in evaluation order
};

/// Evaluates every (eta, kappa) pair with the detect-then-mitigate pipeline on
/// distorted copies of `train_ds` and keeps the plan with the highest mean
/// GAR at `far_target`. Ties go to smaller kappa, then smaller eta.
GridSearchResult grid_search_plan(const NetworkModel& model, const SensitivityTable& table, const Dataset& train_ds,
                                  std::span<const DistortionSpec> distortions, const DetectorModel& det,
                                  const GridSearchOptions& options);

void save_sensitivity(const SensitivityTable& table, const std::filesystem::path& path);
SensitivityTable load_sensitivity(const std::filesystem::path& path);
void save_plan(const MitigationPlan& plan, const std::filesystem::path& path);
MitigationPlan load_plan(const std::filesystem::path& path);

}  // namespace advface
