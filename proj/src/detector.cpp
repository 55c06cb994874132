#include "advface/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "advface/error.hpp"
#include "advface/serialize.hpp"
#include "binio.hpp"

namespace advface {

MeanReps compute_mean_reps(const NetworkModel& model, std::span<const Image> clean_images) {
    if (clean_images.empty()) throw ParameterError("compute_mean_reps: need at least one image");
    const auto lengths = model.tap_lengths();
    MeanReps reps;
    reps.n_train = clean_images.size();
    reps.mu.resize(lengths.size());
    for (std::size_t i = 0; i < lengths.size(); ++i) reps.mu[i].assign(lengths[i], 0.0);

    // Activations are produced in parallel but summed in input order.
    constexpr std::size_t kChunk = 16;
    for (std::size_t start = 0; start < clean_images.size(); start += kChunk) {
        const std::size_t end = std::min(clean_images.size(), start + kChunk);
        std::vector<LayerActivations> acts(end - start);
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(end - start); ++j) {
            acts[static_cast<std::size_t>(j)] = forward(model, clean_images[start + static_cast<std::size_t>(j)]).acts;
        }
        for (const auto& a : acts) {
            for (std::size_t i = 0; i < lengths.size(); ++i) {
                auto& mu = reps.mu[i];
                const auto& phi = a.taps[i];
                for (std::size_t z = 0; z < mu.size(); ++z) mu[z] += phi[z];
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(reps.n_train);
    for (auto& mu : reps.mu)
        for (auto& v : mu) v *= inv;
    return reps;
}

std::vector<double> canberra_features(const LayerActivations& acts, const MeanReps& mean_reps) {
    if (acts.taps.size() != mean_reps.mu.size()) {
        throw ShapeError("mean representations have " + std::to_string(mean_reps.mu.size()) + " layers, activations " +
                         std::to_string(acts.taps.size()));
    }
    std::vector<double> psi(acts.taps.size());
    for (std::size_t i = 0; i < psi.size(); ++i) {
        if (acts.taps[i].size() != mean_reps.mu[i].size()) {
            throw ShapeError("layer " + std::to_string(i) + " length mismatch between activations and mean");
        }
        psi[i] = canberra_distance(std::span<const float>(acts.taps[i]), std::span<const double>(mean_reps.mu[i]));
    }
    return psi;
}

std::vector<double> canberra_features(const NetworkModel& model, const MeanReps& mean_reps, const Image& img) {
    return canberra_features(forward(model, img).acts, mean_reps);
}

std::vector<std::vector<double>> canberra_features_batch(const NetworkModel& model, const MeanReps& mean_reps,
                                                         std::span<const Image> images) {
    std::vector<std::vector<double>> out(images.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(images.size()); ++i) {
        out[static_cast<std::size_t>(i)] = canberra_features(model, mean_reps, images[static_cast<std::size_t>(i)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear SVM

double LinearSvm::decision(std::span<const double> x) const {
    double s = b;
    for (std::size_t d = 0; d < w.size(); ++d) s += w[d] * x[d];
    return s;
}

double hinge_objective(const LinearSvm& svm, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       double c) {
    double reg = 0.0;
    for (double v : svm.w) reg += v * v;
    double loss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) loss += std::max(0.0, 1.0 - y[i] * svm.decision(x[i]));
    return 0.5 * reg + c * loss;
}

LinearSvm fit_linear_svm(const std::vector<std::vector<double>>& x, const std::vector<int>& y, double c, int epochs,
                         std::vector<double>* objective_trace) {
    if (x.empty() || x.size() != y.size()) throw ParameterError("fit_linear_svm: empty or mismatched training set");
    const std::size_t dim = x.front().size();
    LinearSvm svm{std::vector<double>(dim, 0.0), 0.0};
    double objective = hinge_objective(svm, x, y, c);
    if (objective_trace) objective_trace->assign(1, objective);

    double step = 1.0 / (c * static_cast<double>(x.size()));
    std::vector<double> gw(dim);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Subgradient of the full objective.
        gw = svm.w;
        double gb = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (y[i] * svm.decision(x[i]) < 1.0) {
                for (std::size_t d = 0; d < dim; ++d) gw[d] -= c * y[i] * x[i][d];
                gb -= c * y[i];
            }
        }
        double gnorm = gb * gb;
        for (double g : gw) gnorm += g * g;
        if (gnorm == 0.0) break;

        bool accepted = false;
        LinearSvm trial;
        double trial_objective = objective;
        for (int halvings = 0; halvings < 60; ++halvings) {
            trial.w = svm.w;
            for (std::size_t d = 0; d < dim; ++d) trial.w[d] -= step * gw[d];
            trial.b = svm.b - step * gb;
            trial_objective = hinge_objective(trial, x, y, c);
            if (trial_objective <= objective) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        svm = std::move(trial);
        objective = trial_objective;
        if (objective_trace) objective_trace->push_back(objective);
        step *= 1.5;
    }
    return svm;
}

std::vector<double> DetectorModel::normalize(std::span<const double> features) const {
    if (features.size() != feat_mean.size()) {
        throw ShapeError("detector expects " + std::to_string(feat_mean.size()) + " features, got " +
                         std::to_string(features.size()));
    }
    std::vector<double> out(features.size());
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = (features[d] - feat_mean[d]) / feat_std[d];
    return out;
}

double DetectorModel::score(std::span<const double> features) const {
    const auto z = normalize(features);
    double s = b;
    for (std::size_t d = 0; d < w.size(); ++d) s += w[d] * z[d];
    return s;
}

namespace {

void check_finite(const std::vector<std::vector<double>>& feats, const char* which) {
    for (std::size_t i = 0; i < feats.size(); ++i) {
        for (double v : feats[i]) {
            if (!std::isfinite(v)) {
                throw DataError(std::string("non-finite feature for ") + which + " image " + std::to_string(i));
            }
        }
    }
}

double accuracy(const LinearSvm& svm, const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int predicted = svm.decision(x[i]) > 0.0 ? 1 : -1;
        if (predicted == y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(x.size());
}

}  // namespace

DetectorModel train_detector_on_features(const std::vector<std::vector<double>>& clean,
                                         const std::vector<std::vector<double>>& distorted, MeanReps mean_reps,
                                         std::uint64_t seed, const DetectorTrainingOptions& options) {
    if (clean.empty() || distorted.empty()) throw ParameterError("train_detector: both classes must be non-empty");
    if (options.c_grid.empty()) throw ParameterError("train_detector: empty C grid");
    check_finite(clean, "clean");
    check_finite(distorted, "distorted");

    std::vector<std::vector<double>> x(clean);
    x.insert(x.end(), distorted.begin(), distorted.end());
    std::vector<int> y(clean.size(), -1);
    y.resize(x.size(), 1);
    const std::size_t dim = x.front().size();
    for (const auto& row : x)
        if (row.size() != dim) throw ShapeError("train_detector: feature vectors differ in length");

    DetectorModel det;
    det.mean_reps = std::move(mean_reps);
    det.feat_mean.assign(dim, 0.0);
    det.feat_std.assign(dim, 0.0);
    for (const auto& row : x)
        for (std::size_t d = 0; d < dim; ++d) det.feat_mean[d] += row[d];
    for (auto& m : det.feat_mean) m /= static_cast<double>(x.size());
    for (const auto& row : x)
        for (std::size_t d = 0; d < dim; ++d) det.feat_std[d] += (row[d] - det.feat_mean[d]) * (row[d] - det.feat_mean[d]);
    for (auto& s : det.feat_std) s = std::max(std::sqrt(s / static_cast<double>(x.size())), 1e-8);
    for (auto& row : x) row = det.normalize(row);

    // Fold assignment from a seeded shuffle.
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const int folds = std::max(2, std::min<int>(options.folds, static_cast<int>(x.size())));
    std::vector<int> fold_of(x.size());
    for (std::size_t k = 0; k < order.size(); ++k) fold_of[order[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));

    std::vector<double> c_grid = options.c_grid;
    std::sort(c_grid.begin(), c_grid.end());
    double best_c = c_grid.front();
    double best_acc = -1.0;
    for (double c : c_grid) {
        std::size_t correct = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::vector<double>> xt, xv;
            std::vector<int> yt, yv;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (fold_of[i] == f) {
                    xv.push_back(x[i]);
                    yv.push_back(y[i]);
                } else {
                    xt.push_back(x[i]);
                    yt.push_back(y[i]);
                }
            }
            if (xv.empty() || xt.empty()) continue;
            const LinearSvm svm = fit_linear_svm(xt, yt, c, options.epochs);
            correct += static_cast<std::size_t>(std::lround(accuracy(svm, xv, yv) * static_cast<double>(xv.size())));
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(x.size());
        if (acc > best_acc) {
            best_acc = acc;
            best_c = c;
        }
    }

    const LinearSvm final_svm = fit_linear_svm(x, y, best_c, options.epochs);
    det.w = final_svm.w;
    det.b = final_svm.b;
    det.C = best_c;
    return det;
}

DetectorModel train_detector(const NetworkModel& model, const MeanReps& mean_reps, std::span<const Image> clean,
                             std::span<const Image> distorted, const std::vector<double>& c_grid, std::uint64_t seed) {
    if (clean.empty() || distorted.empty()) throw ParameterError("train_detector: both classes must be non-empty");
    DetectorTrainingOptions options;
    if (!c_grid.empty()) options.c_grid = c_grid;
    return train_detector_on_features(canberra_features_batch(model, mean_reps, clean),
                                      canberra_features_batch(model, mean_reps, distorted), mean_reps, seed, options);
}

Detection classify(const DetectorModel& det, std::span<const double> features) {
    const double s = det.score(features);
    return {s, s > 0.0 ? Verdict::Distorted : Verdict::Clean};
}

Detection detect(const DetectorModel& det, const NetworkModel& model, const Image& img) {
    return classify(det, canberra_features(model, det.mean_reps, img));
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr std::string_view kMeanMagic = "MREP1";

}  // namespace

void save_mean_reps(const MeanReps& reps, const std::filesystem::path& path) {
    binio::Writer w;
    w.bytes(kMeanMagic);
    w.u64(reps.n_train);
    w.u32(static_cast<std::uint32_t>(reps.mu.size()));
    for (const auto& mu : reps.mu) {
        w.u32(static_cast<std::uint32_t>(mu.size()));
        for (double v : mu) w.f64(v);
    }
    binio::write_file(path.string(), w.data());
}

MeanReps load_mean_reps(const std::filesystem::path& path) {
    const auto bytes = binio::read_file(path.string());
    binio::Reader r(bytes, path.string());
    r.expect_magic(kMeanMagic);
    MeanReps reps;
    reps.n_train = r.u64("n_train");
    if (reps.n_train < 1) r.fail("n_train must be >= 1");
    const std::uint32_t layers = r.u32("layer count");
    if (layers > 4096) r.fail("implausible layer count");
    for (std::uint32_t i = 0; i < layers; ++i) {
        const std::uint32_t n = r.u32("layer " + std::to_string(i) + " length");
        if (static_cast<std::size_t>(n) * 8 > bytes.size()) r.fail("layer " + std::to_string(i) + " length exceeds file");
        std::vector<double> mu(n);
        for (auto& v : mu) v = r.f64("layer " + std::to_string(i) + " values");
        reps.mu.push_back(std::move(mu));
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return reps;
}

void save_detector(const DetectorModel& det, const std::filesystem::path& json_path,
                   const std::filesystem::path& mean_reps_path) {
    save_mean_reps(det.mean_reps, mean_reps_path);
    DetectorModel copy = det;
    // Stored relative to the JSON file when they share a directory.
    copy.mean_reps_path = mean_reps_path.parent_path() == json_path.parent_path()
                              ? mean_reps_path.filename().string()
                              : std::filesystem::absolute(mean_reps_path).string();
    write_json(nlohmann::json(copy), json_path);
}

DetectorModel load_detector(const std::filesystem::path& json_path) {
    const nlohmann::json j = read_json(json_path);
    DetectorModel det;
    try {
        det = j.get<DetectorModel>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what());
    }
    std::filesystem::path reps = det.mean_reps_path;
    if (reps.is_relative()) reps = json_path.parent_path() / reps;
    det.mean_reps = load_mean_reps(reps);
    if (det.mean_reps.mu.size() != det.w.size()) {
        throw FormatError(json_path.string() + ": detector has " + std::to_string(det.w.size()) +
                          " weights but mean reps have " + std::to_string(det.mean_reps.mu.size()) + " layers");
    }
    return det;
}

}  // namespace advface
