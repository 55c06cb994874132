#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advface/detector.hpp"
#include "advface/distortions.hpp"
#include "advface/featnet.hpp"
#include "advface/mitigator.hpp"
#include "advface/synthface.hpp"

namespace advface {

/// All-vs-all similarity matrix. Entry (i, i) is a self-match and belongs to
/// neither the genuine nor the impostor set.
struct ScoreMatrix {
    std::size_t n = 0;
    std::vector<double> scores;            // row-major n x n
    std::vector<std::uint8_t> genuine_mask;  // same subject, i != j
    std::vector<int> ids;

    double score(std::size_t i, std::size_t j) const noexcept { return scores[i * n + j]; }
    bool genuine(std::size_t i, std::size_t j) const noexcept { return genuine_mask[i * n + j] != 0; }
    bool impostor(std::size_t i, std::size_t j) const noexcept { return ids[i] != ids[j]; }

    std::size_t n_genuine() const noexcept;
    std::size_t n_impostor() const noexcept;
    std::vector<double> genuine_scores() const;
    std::vector<double> impostor_scores() const;
};

/// Builds the matrix from precomputed embeddings.
ScoreMatrix score_matrix(std::span<const std::vector<float>> embeddings, std::span<const int> ids);

/// Embeds every image (plain forward, or detect-then-mitigate when both
/// `det` and `plan` are given) and builds the matrix.
ScoreMatrix score_matrix(const NetworkModel& model, std::span<const Image> images, std::span<const int> ids,
                         const MitigationPlan* plan = nullptr, const DetectorModel* det = nullptr);

struct RocPoint {
    double threshold = 0.0;
    double far = 0.0;
    double gar = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // thresholds descending, FAR non-decreasing
    std::size_t n_genuine = 0;
    std::size_t n_impostor = 0;
};

RocCurve roc(const ScoreMatrix& sm);
RocCurve roc(std::span<const double> genuine, std::span<const double> impostor);

/// GAR at the lowest threshold whose FAR does not exceed far_target; 0 if none qualifies.
double gar_at_far(const RocCurve& curve, double far_target);

enum class Condition { Original, Distorted, Corrected };
std::string_view to_string(Condition c) noexcept;

struct ReportRow {
    Condition condition = Condition::Original;
    std::string distortion;
    double gar_at_far = 0.0;
    double far_target = 0.01;
    std::size_t n_genuine = 0;
    std::size_t n_impostor = 0;
    std::uint64_t seed = 0;
};

struct ProtocolOptions {
    double distorted_fraction = 0.5;
    double far_target = 0.01;
    std::uint64_t seed = 0;
};

/// Copy of `ds` with the images selected by split_protocol replaced by their distorted versions.
Dataset distort_subset(const Dataset& ds, const DistortionSpec& spec, double fraction, std::uint64_t seed);

/// Original, distorted and (when det and plan are supplied) corrected rows.
/// `curves`, when given, receives the ROC behind each row.
std::vector<ReportRow> run_protocol(const Dataset& ds, const NetworkModel& model, const DistortionSpec& spec,
                                    const DetectorModel* det, const MitigationPlan* plan,
                                    const ProtocolOptions& options, std::vector<RocCurve>* curves = nullptr);

/// CSV with header condition,distortion,gar_at_far,far_target,n_genuine,n_impostor,seed.
void write_report_csv(std::ostream& out, std::span<const ReportRow> rows, bool header = true);

}  // namespace advface
