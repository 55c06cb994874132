#include "advface/serialize.hpp"

#include <fstream>
#include <string>

#include "advface/error.hpp"

namespace advface {

using nlohmann::json;

void to_json(json& j, const Point& p) { j = json::array({p.x, p.y}); }

void from_json(const json& j, Point& p) {
    if (!j.is_array() || j.size() != 2) throw FormatError("point must be [x, y], got " + j.dump());
    p.x = j[0].get<int>();
    p.y = j[1].get<int>();
}

void to_json(json& j, const Polygon& p) { j = p.vertices; }
void from_json(const json& j, Polygon& p) { p.vertices = j.get<std::vector<Point>>(); }

void to_json(json& j, const LandmarkSet& lm) {
    j = json{{"left_eye", lm.left_eye},
             {"right_eye", lm.right_eye},
             {"nose", lm.nose},
             {"mouth_center", lm.mouth_center},
             {"forehead_polygon", lm.forehead_polygon},
             {"beard_polygon", lm.beard_polygon}};
}

void from_json(const json& j, LandmarkSet& lm) {
    j.at("left_eye").get_to(lm.left_eye);
    j.at("right_eye").get_to(lm.right_eye);
    j.at("nose").get_to(lm.nose);
    j.at("mouth_center").get_to(lm.mouth_center);
    j.at("forehead_polygon").get_to(lm.forehead_polygon);
    j.at("beard_polygon").get_to(lm.beard_polygon);
}

void to_json(json& j, const DistortionSpec& spec) {
    j = json{{"kind", std::string(to_string(spec.kind))}};
    switch (spec.kind) {
        case DistortionKind::Grids:
            j["rho_grids"] = spec.rho_grids;
            j["seed"] = spec.seed;
            break;
        case DistortionKind::XMSB:
            j["phi"] = spec.phi;
            j["seed"] = spec.seed;
            break;
        case DistortionKind::ERO: j["psi"] = spec.psi; break;
        default: break;
    }
}

void from_json(const json& j, DistortionSpec& spec) {
    spec = DistortionSpec{};
    spec.kind = parse_distortion_kind(j.at("kind").get<std::string>());
    spec.rho_grids = j.value("rho_grids", spec.rho_grids);
    if (j.contains("phi")) {
        const auto phi = j.at("phi").get<std::vector<double>>();
        if (phi.size() != 3) throw FormatError("phi must have exactly 3 entries");
        std::copy(phi.begin(), phi.end(), spec.phi.begin());
    }
    spec.psi = j.value("psi", spec.psi);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
}

void to_json(json& j, const DistortionRecord& rec) {
    j = json{{"spec", rec.spec}, {"affected_pixel_count", rec.affected_pixel_count}, {"rng_trace_seed", rec.rng_trace_seed}};
}

void to_json(json& j, const DetectorModel& det) {
    j = json{{"w", det.w},
             {"b", det.b},
             {"C", det.C},
             {"feat_mean", det.feat_mean},
             {"feat_std", det.feat_std},
             {"n_layers", det.w.size()},
             {"mean_reps_path", det.mean_reps_path}};
}

void from_json(const json& j, DetectorModel& det) {
    j.at("w").get_to(det.w);
    j.at("b").get_to(det.b);
    j.at("C").get_to(det.C);
    j.at("feat_mean").get_to(det.feat_mean);
    j.at("feat_std").get_to(det.feat_std);
    j.at("mean_reps_path").get_to(det.mean_reps_path);
    const auto n = j.at("n_layers").get<std::size_t>();
    if (det.w.size() != n || det.feat_mean.size() != n || det.feat_std.size() != n) {
        throw FormatError("detector vectors do not match n_layers = " + std::to_string(n));
    }
    for (auto& s : det.feat_std) s = std::max(s, 1e-8);
}

void to_json(json& j, const SensitivityTable& t) {
    j = json{{"eps", t.eps}, {"layer_agg", t.layer_agg}, {"n_dis", t.n_dis}, {"layer_indices", t.layer_indices}};
}

void from_json(const json& j, SensitivityTable& t) {
    j.at("eps").get_to(t.eps);
    j.at("layer_agg").get_to(t.layer_agg);
    j.at("n_dis").get_to(t.n_dis);
    if (j.contains("layer_indices")) {
        j.at("layer_indices").get_to(t.layer_indices);
    } else {
        t.layer_indices.resize(t.eps.size());
        for (std::size_t i = 0; i < t.eps.size(); ++i) t.layer_indices[i] = static_cast<int>(i);
    }
    if (t.layer_agg.size() != t.eps.size() || t.layer_indices.size() != t.eps.size()) {
        throw FormatError("sensitivity table rows are inconsistent");
    }
}

void to_json(json& j, const MitigationPlan& plan) {
    json mask = json::array();
    for (const auto& [layer, filter] : plan.mask.disabled) mask.push_back({layer, filter});
    j = json{{"eta", plan.eta}, {"kappa", plan.kappa}, {"mask", mask}, {"use_median_filter", plan.use_median_filter}};
}

void from_json(const json& j, MitigationPlan& plan) {
    plan = MitigationPlan{};
    j.at("eta").get_to(plan.eta);
    j.at("kappa").get_to(plan.kappa);
    plan.use_median_filter = j.value("use_median_filter", true);
    for (const auto& pair : j.at("mask")) {
        if (!pair.is_array() || pair.size() != 2) throw FormatError("mask entries must be [layer, filter]");
        plan.mask.disabled.insert({pair[0].get<int>(), pair[1].get<int>()});
    }
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace advface
