#include "advface/mitigator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "advface/error.hpp"
#include "advface/serialize.hpp"
#include "advface/verifybench.hpp"

namespace advface {

namespace {

// Index of the layer whose output is the post-activation response of conv layer `conv`.
std::size_t response_layer(const NetworkModel& model, int conv) {
    const auto next = static_cast<std::size_t>(conv) + 1;
    if (next < model.layers().size() && std::holds_alternative<ReluLayer>(model.layers()[next])) return next;
    return static_cast<std::size_t>(conv);
}

using EpsRows = std::vector<std::vector<double>>;

void add_into(EpsRows& dst, const EpsRows& src) {
    for (std::size_t i = 0; i < dst.size(); ++i)
        for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
}

}  // namespace

SensitivityTable compute_sensitivity(const NetworkModel& model, std::span<const ImagePair> pairs) {
    if (pairs.empty()) throw ParameterError("compute_sensitivity: need at least one image pair");
    const auto convs = model.conv_layers();

    std::vector<EpsRows> per_pair(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(pairs.size()); ++k) {
        const auto& [distorted, clean] = pairs[static_cast<std::size_t>(k)];
        const auto td = forward_trace(model, distorted);
        const auto tc = forward_trace(model, clean);
        EpsRows rows(convs.size());
        for (std::size_t i = 0; i < convs.size(); ++i) {
            const std::size_t layer = response_layer(model, convs[i]);
            const Tensor& a = td[layer];
            const Tensor& b = tc[layer];
            const std::size_t plane = a.plane();
            rows[i].assign(static_cast<std::size_t>(a.channels), 0.0);
            for (int f = 0; f < a.channels; ++f) {
                double ss = 0.0;
                for (std::size_t p = 0; p < plane; ++p) {
                    const double d = static_cast<double>(a.values[f * plane + p]) - b.values[f * plane + p];
                    ss += d * d;
                }
                rows[i][static_cast<std::size_t>(f)] = std::sqrt(ss);
            }
        }
        per_pair[static_cast<std::size_t>(k)] = std::move(rows);
    }

    // Pairwise tree reduction with a fixed topology: results do not depend on thread count.
    for (std::size_t stride = 1; stride < per_pair.size(); stride *= 2) {
        for (std::size_t i = 0; i + stride < per_pair.size(); i += 2 * stride) add_into(per_pair[i], per_pair[i + stride]);
    }

    SensitivityTable table;
    table.layer_indices = convs;
    table.eps = std::move(per_pair.front());
    table.n_dis = pairs.size();
    for (const auto& row : table.eps) table.layer_agg.push_back(std::accumulate(row.begin(), row.end(), 0.0));
    return table;
}

MitigationPlan build_plan(const SensitivityTable& table, int eta, double kappa) {
    const int n_layers = static_cast<int>(table.eps.size());
    if (eta < 1 || eta > n_layers) {
        throw ParameterError("eta must lie in [1, " + std::to_string(n_layers) + "], got " + std::to_string(eta));
    }
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw ParameterError("kappa must lie in [0, 1]");
    if (table.layer_indices.size() != table.eps.size() || table.layer_agg.size() != table.eps.size()) {
        throw ParameterError("sensitivity table rows are inconsistent");
    }

    std::vector<int> rows(static_cast<std::size_t>(n_layers));
    std::iota(rows.begin(), rows.end(), 0);
    std::stable_sort(rows.begin(), rows.end(), [&](int a, int b) {
        return table.layer_agg[static_cast<std::size_t>(a)] > table.layer_agg[static_cast<std::size_t>(b)];
    });

    MitigationPlan plan;
    plan.eta = eta;
    plan.kappa = kappa;
    if (kappa == 0.0) return plan;
    for (int r = 0; r < eta; ++r) {
        const auto& eps = table.eps[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
        const int n_filters = static_cast<int>(eps.size());
        // Guard against kappa * n landing a hair above an integer.
        const int take = std::min(n_filters, static_cast<int>(std::ceil(kappa * n_filters - 1e-9)));
        std::vector<int> filters(static_cast<std::size_t>(n_filters));
        std::iota(filters.begin(), filters.end(), 0);
        std::stable_sort(filters.begin(), filters.end(), [&](int a, int b) {
            return eps[static_cast<std::size_t>(a)] > eps[static_cast<std::size_t>(b)];
        });
        const int layer = table.layer_indices[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
        for (int f = 0; f < take; ++f) plan.mask.disabled.insert({layer, filters[static_cast<std::size_t>(f)]});
    }
    return plan;
}

std::vector<float> mitigate(const NetworkModel& model, const MitigationPlan& plan, const Image& img) {
    model.check_mask(plan.mask);
    if (plan.use_median_filter) return embed(model, median_filter(img, plan.median_size), &plan.mask);
    return embed(model, img, &plan.mask);
}

DefendedEmbeddings defended_embeddings(const NetworkModel& model, const DetectorModel& det,
                                       const MitigationPlan& plan, std::span<const Image> images) {
    model.check_mask(plan.mask);
    DefendedEmbeddings out;
    out.embeddings.resize(images.size());
    out.verdicts.resize(images.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(images.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto fwd = forward(model, images[i]);
        const Detection d = classify(det, canberra_features(fwd.acts, det.mean_reps));
        out.verdicts[i] = d.verdict;
        out.embeddings[i] = d.verdict == Verdict::Distorted ? mitigate(model, plan, images[i]) : std::move(fwd.embedding);
    }
    return out;
}

GridSearchResult grid_search_plan(const NetworkModel& model, const SensitivityTable& table, const Dataset& train_ds,
                                  std::span<const DistortionSpec> distortions, const DetectorModel& det,
                                  const GridSearchOptions& options) {
    if (options.eta_grid.empty() || options.kappa_grid.empty()) throw ParameterError("grid_search_plan: empty grid");
    if (distortions.empty()) throw ParameterError("grid_search_plan: no distortions given");
    const auto ids = train_ds.labels();
    {
        auto sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 2) {
            throw ParameterError("grid_search_plan: training set needs at least two subjects");
        }
    }

    // Per distortion: the distorted corpus, detector verdicts and the plain
    // embeddings of unflagged images do not depend on the plan.
    struct Prepared {
        std::vector<Image> images;
        std::vector<std::vector<float>> embeddings;
        std::vector<std::size_t> flagged;
    };
    std::vector<Prepared> prepared;
    for (std::size_t d = 0; d < distortions.size(); ++d) {
        Prepared p;
        p.images = distort_subset(train_ds, distortions[d], options.distorted_fraction,
                                  options.seed + static_cast<std::uint64_t>(d)).images();
        // With an empty plan every image gets its plain embedding; flagged ones are redone per plan below.
        auto defended = defended_embeddings(model, det, MitigationPlan{0, 0.0, {}, false, 5}, p.images);
        p.embeddings = std::move(defended.embeddings);
        for (std::size_t i = 0; i < p.images.size(); ++i)
            if (defended.verdicts[i] == Verdict::Distorted) p.flagged.push_back(i);
        prepared.push_back(std::move(p));
    }

    GridSearchResult result;
    const GridSearchEntry* best = nullptr;
    for (int eta : options.eta_grid) {
        for (double kappa : options.kappa_grid) {
            MitigationPlan plan = build_plan(table, eta, kappa);
            plan.use_median_filter = options.use_median_filter;
            GridSearchEntry entry{eta, kappa, 0.0, {}};
            for (const auto& p : prepared) {
                auto embeddings = p.embeddings;
#pragma omp parallel for schedule(dynamic)
                for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(p.flagged.size()); ++k) {
                    const std::size_t i = p.flagged[static_cast<std::size_t>(k)];
                    embeddings[i] = mitigate(model, plan, p.images[i]);
                }
                const double gar = gar_at_far(roc(score_matrix(embeddings, ids)), options.far_target);
                entry.gar_per_distortion.push_back(gar);
                entry.mean_gar += gar / static_cast<double>(prepared.size());
            }
            result.entries.push_back(entry);
        }
    }
    for (const auto& e : result.entries) {
        const bool better = best == nullptr || e.mean_gar > best->mean_gar ||
                            (e.mean_gar == best->mean_gar &&
                             (e.kappa < best->kappa || (e.kappa == best->kappa && e.eta < best->eta)));
        if (better) best = &e;
    }
    result.plan = build_plan(table, best->eta, best->kappa);
    result.plan.use_median_filter = options.use_median_filter;
    return result;
}

// ---------------------------------------------------------------------------

void save_sensitivity(const SensitivityTable& table, const std::filesystem::path& path) {
    write_json(nlohmann::json(table), path);
}

SensitivityTable load_sensitivity(const std::filesystem::path& path) {
    try {
        return read_json(path).get<SensitivityTable>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_plan(const MitigationPlan& plan, const std::filesystem::path& path) { write_json(nlohmann::json(plan), path); }

MitigationPlan load_plan(const std::filesystem::path& path) {
    try {
        return read_json(path).get<MitigationPlan>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace advface
