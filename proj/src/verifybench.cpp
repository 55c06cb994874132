#include "advface/verifybench.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <ostream>
#include <set>
#include <string>

#include "advface/error.hpp"
#include "advface/kernels.hpp"
#include "advface/seed.hpp"

namespace advface {

std::size_t ScoreMatrix::n_genuine() const noexcept {
    return static_cast<std::size_t>(std::count(genuine_mask.begin(), genuine_mask.end(), std::uint8_t{1}));
}

std::size_t ScoreMatrix::n_impostor() const noexcept {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) count += impostor(i, j) ? 1 : 0;
    return count;
}

std::vector<double> ScoreMatrix::genuine_scores() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (genuine(i, j)) out.push_back(score(i, j));
    return out;
}

std::vector<double> ScoreMatrix::impostor_scores() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (impostor(i, j)) out.push_back(score(i, j));
    return out;
}

ScoreMatrix score_matrix(std::span<const std::vector<float>> embeddings, std::span<const int> ids) {
    if (embeddings.size() != ids.size()) throw ShapeError("score_matrix: embeddings and ids differ in length");
    if (embeddings.size() < 2) throw ProtocolError("score_matrix: need at least two images");
    if (std::set<int>(ids.begin(), ids.end()).size() < 2) throw ProtocolError("score_matrix: need at least two subjects");

    ScoreMatrix sm;
    sm.n = embeddings.size();
    sm.ids.assign(ids.begin(), ids.end());
    sm.scores = kernels::cosine_matrix(embeddings);
    sm.genuine_mask.assign(sm.n * sm.n, 0);
    for (std::size_t i = 0; i < sm.n; ++i)
        for (std::size_t j = 0; j < sm.n; ++j)
            if (i != j && ids[i] == ids[j]) sm.genuine_mask[i * sm.n + j] = 1;
    return sm;
}

ScoreMatrix score_matrix(const NetworkModel& model, std::span<const Image> images, std::span<const int> ids,
                         const MitigationPlan* plan, const DetectorModel* det) {
    if (images.size() != ids.size()) throw ShapeError("score_matrix: images and ids differ in length");
    if (std::set<int>(ids.begin(), ids.end()).size() < 2) throw ProtocolError("score_matrix: need at least two subjects");
    if (plan != nullptr && det != nullptr) {
        return score_matrix(defended_embeddings(model, *det, *plan, images).embeddings, ids);
    }
    return score_matrix(embed_batch(model, images), ids);
}

RocCurve roc(std::span<const double> genuine, std::span<const double> impostor) {
    if (genuine.empty() || impostor.empty()) throw ProtocolError("roc: need at least one genuine and one impostor score");
    std::vector<double> g(genuine.begin(), genuine.end());
    std::vector<double> im(impostor.begin(), impostor.end());
    std::sort(g.begin(), g.end(), std::greater<>());
    std::sort(im.begin(), im.end(), std::greater<>());

    // Every distinct score is a candidate threshold; accept iff score >= threshold.
    std::vector<double> thresholds;
    thresholds.reserve(g.size() + im.size());
    std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(thresholds), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve curve;
    curve.n_genuine = g.size();
    curve.n_impostor = im.size();
    curve.points.reserve(thresholds.size());
    std::size_t gi = 0;
    std::size_t ii = 0;
    for (double t : thresholds) {
        while (gi < g.size() && g[gi] >= t) ++gi;
        while (ii < im.size() && im[ii] >= t) ++ii;
        curve.points.push_back({t, static_cast<double>(ii) / static_cast<double>(im.size()),
                                static_cast<double>(gi) / static_cast<double>(g.size())});
    }
    return curve;
}

RocCurve roc(const ScoreMatrix& sm) { return roc(sm.genuine_scores(), sm.impostor_scores()); }

double gar_at_far(const RocCurve& curve, double far_target) {
    double best = 0.0;
    for (const auto& p : curve.points) {
        if (p.far > far_target) break;  // FAR is non-decreasing along the curve
        best = p.gar;
    }
    return best;
}

std::string_view to_string(Condition c) noexcept {
    switch (c) {
        case Condition::Original: return "original";
        case Condition::Distorted: return "distorted";
        case Condition::Corrected: return "corrected";
    }
    return "unknown";
}

Dataset distort_subset(const Dataset& ds, const DistortionSpec& spec, double fraction, std::uint64_t seed) {
    const auto split = split_protocol(ds, fraction, seed);
    Dataset out = ds;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(split.to_distort_ids.size()); ++k) {
        const std::size_t i = split.to_distort_ids[static_cast<std::size_t>(k)];
        out.samples[i].image = apply_to_sample(spec, ds.samples[i], i).first;
    }
    return out;
}

std::vector<ReportRow> run_protocol(const Dataset& ds, const NetworkModel& model, const DistortionSpec& spec,
                                    const DetectorModel* det, const MitigationPlan* plan,
                                    const ProtocolOptions& options, std::vector<RocCurve>* curves) {
    if (!(options.far_target > 0.0 && options.far_target < 1.0)) throw ParameterError("far_target must lie in (0, 1)");
    const auto ids = ds.labels();
    const std::string name(to_string(spec.kind));

    auto row = [&](Condition c, const ScoreMatrix& sm) {
        RocCurve curve = roc(sm);
        if (curves != nullptr) curves->push_back(curve);
        return ReportRow{c, name, gar_at_far(curve, options.far_target), options.far_target, curve.n_genuine,
                         curve.n_impostor, options.seed};
    };

    if (curves != nullptr) curves->clear();
    std::vector<ReportRow> rows;
    const auto clean = ds.images();
    rows.push_back(row(Condition::Original, score_matrix(model, clean, ids)));

    const auto distorted = distort_subset(ds, spec, options.distorted_fraction, options.seed).images();
    rows.push_back(row(Condition::Distorted, score_matrix(model, distorted, ids)));

    if (det != nullptr && plan != nullptr) {
        rows.push_back(row(Condition::Corrected, score_matrix(model, distorted, ids, plan, det)));
    }
    return rows;
}

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows, bool header) {
    if (header) out << "condition,distortion,gar_at_far,far_target,n_genuine,n_impostor,seed\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%zu,%zu,%llu\n", std::string(to_string(r.condition)).c_str(),
                      r.distortion.c_str(), r.gar_at_far, r.far_target, r.n_genuine, r.n_impostor,
                      static_cast<unsigned long long>(r.seed));
        out << buf;
    }
}

}  // namespace advface
