// advface: command-line driver for the generate / distort / detect / mitigate / evaluate pipeline.
#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advface/detector.hpp"
#include "advface/distortions.hpp"
#include "advface/error.hpp"
#include "advface/featnet.hpp"
#include "advface/mitigator.hpp"
#include "advface/seed.hpp"
#include "advface/serialize.hpp"
#include "advface/synthface.hpp"
#include "advface/verifybench.hpp"

namespace fs = std::filesystem;
using namespace advface;

namespace {

// Stream tags for derive_seed so each subcommand draws from its own stream.
constexpr std::uint64_t kDetectorStream = 0xD37;
constexpr std::uint64_t kGridStream = 0x6121D;

struct NetOptions {
    std::string weights;
    std::uint64_t net_seed = 7;
};

void add_net_options(CLI::App* sub, NetOptions& o) {
    sub->add_option("--weights", o.weights, "FNET1 weight file (default: default network)")->check(CLI::ExistingFile);
    sub->add_option("--net-seed", o.net_seed, "seed of the default network when --weights is absent")
        ->capture_default_str();
}

NetworkModel load_network(const NetOptions& o) {
    return o.weights.empty() ? default_network(o.net_seed) : load_weights(o.weights);
}

void require(CLI::App* sub, const std::string& flag) {
    if (sub->get_option(flag)->count() == 0) throw UsageError(sub->get_name() + ": " + flag + " is required");
}

// Config files are flat JSON objects whose keys are flag names ("net_seed" or
// "net-seed"). Anything already given on the command line wins.
void apply_config(CLI::App* sub, const std::string& path) {
    const nlohmann::json cfg = read_json(path);
    if (!cfg.is_object()) throw UsageError(path + ": config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (flag == "--config") continue;
        CLI::Option* opt = nullptr;
        try {
            opt = sub->get_option(flag);
        } catch (const CLI::OptionNotFound&) {
            throw UsageError(path + ": unknown key \"" + key + "\" for " + sub->get_name());
        }
        if (opt->count() > 0) continue;
        std::vector<std::string> inputs;
        auto push = [&](const nlohmann::json& v) { inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump()); };
        if (value.is_array()) {
            for (const auto& v : value) push(v);
        } else {
            push(value);
        }
        opt->clear();
        for (const auto& s : inputs) opt->add_result(s);
        opt->run_callback();
    }
}

DistortionSpec read_spec(const std::string& path) {
    try {
        DistortionSpec spec = read_json(path).get<DistortionSpec>();
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void write_embeddings_csv(const fs::path& path, const Dataset& ds, const std::vector<std::vector<float>>& emb,
                          const std::vector<Verdict>* verdicts = nullptr) {
    auto out = open_out(path);
    out << "path,subject_id,sample_index";
    if (verdicts != nullptr) out << ",mitigated";
    const std::size_t dim = emb.empty() ? 0 : emb.front().size();
    for (std::size_t k = 0; k < dim; ++k) out << ",e" << k;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.samples[i];
        out << sample_filename(s) << ',' << s.subject_id << ',' << s.sample_index;
        if (verdicts != nullptr) out << ',' << ((*verdicts)[i] == Verdict::Distorted ? 1 : 0);
        for (float v : emb[i]) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
            out << buf;
        }
        out << '\n';
    }
}

void write_roc_dat(const fs::path& path, const RocCurve& curve) {
    auto out = open_out(path);
    out << "# threshold far gar\n";
    char buf[96];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.threshold, p.far, p.gar);
        out << buf;
    }
}

// ---- subcommands ----------------------------------------------------------

struct GenData {
    int subjects = 40, samples = 10, size = 64;
    std::uint64_t seed = 0;
    std::string out;
};

void run_gen_data(CLI::App* sub, const GenData& o) {
    require(sub, "--out");
    const Dataset ds = generate_dataset(o.subjects, o.samples, o.size, o.seed);
    write_dataset(ds, o.out);
    std::cout << "gen-data: wrote " << ds.size() << " images to " << o.out << '\n';
}

struct Distort {
    std::string spec, in, out;
    std::uint64_t seed = 0;
};

void run_distort(CLI::App* sub, const Distort& o) {
    require(sub, "--spec");
    require(sub, "--in");
    require(sub, "--out");
    DistortionSpec spec = read_spec(o.spec);
    if (sub->get_option("--seed")->count() > 0) spec.seed = o.seed;
    Dataset ds = read_dataset(o.in);
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto [img, rec] = apply_to_sample(spec, ds.samples[i], i);
        ds.samples[i].image = std::move(img);
        records.push_back({{"path", sample_filename(ds.samples[i])}, {"record", rec}});
    }
    write_dataset(ds, o.out);
    write_json(records, fs::path(o.out) / "records.json");
    std::cout << "distort: " << to_string(spec.kind) << " applied to " << ds.size() << " images\n";
}

struct Extract {
    NetOptions net;
    std::string in, out;
    bool mean_reps = false;
    bool save_weights = false;
};

void run_extract(CLI::App* sub, const Extract& o) {
    require(sub, "--in");
    require(sub, "--out");
    const NetworkModel model = load_network(o.net);
    const Dataset ds = read_dataset(o.in);
    ensure_dir(o.out);
    const auto images = ds.images();
    write_embeddings_csv(fs::path(o.out) / "embeddings.csv", ds, embed_batch(model, images));
    if (o.mean_reps) save_mean_reps(compute_mean_reps(model, images), fs::path(o.out) / "mean_reps.bin");
    if (o.save_weights) save_weights(model, fs::path(o.out) / "weights.fnet");
    std::cout << "extract: " << ds.size() << " embeddings\n";
}

struct TrainDetector {
    NetOptions net;
    std::string clean, out;
    std::vector<std::string> distorted;
    std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
    std::uint64_t seed = 0;
};

void run_train_detector(CLI::App* sub, const TrainDetector& o) {
    require(sub, "--clean");
    require(sub, "--distorted");
    require(sub, "--out");
    const NetworkModel model = load_network(o.net);
    const auto clean = read_dataset(o.clean).images();
    std::vector<Image> distorted;
    for (const auto& dir : o.distorted) {
        const auto imgs = read_dataset(dir).images();
        distorted.insert(distorted.end(), imgs.begin(), imgs.end());
    }
    const MeanReps reps = compute_mean_reps(model, clean);
    const DetectorModel det = train_detector(model, reps, clean, distorted, o.c_grid, derive_seed(o.seed, kDetectorStream));
    ensure_dir(o.out);
    save_detector(det, fs::path(o.out) / "detector.json", fs::path(o.out) / "mean_reps.bin");
    std::cout << "train-detector: " << clean.size() << " clean, " << distorted.size() << " distorted, C=" << det.C
              << '\n';
}

struct Detect {
    NetOptions net;
    std::string detector, in, out;
};

void run_detect(CLI::App* sub, const Detect& o) {
    require(sub, "--detector");
    require(sub, "--in");
    require(sub, "--out");
    const NetworkModel model = load_network(o.net);
    const DetectorModel det = load_detector(o.detector);
    const Dataset ds = read_dataset(o.in);
    ensure_dir(o.out);
    const auto feats = canberra_features_batch(model, det.mean_reps, ds.images());
    auto out = open_out(fs::path(o.out) / "verdicts.csv");
    out << "path,score,verdict\n";
    std::size_t flagged = 0;
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Detection d = classify(det, feats[i]);
        flagged += d.verdict == Verdict::Distorted ? 1 : 0;
        std::snprintf(buf, sizeof buf, ",%.6f,", d.score);
        out << sample_filename(ds.samples[i]) << buf << (d.verdict == Verdict::Distorted ? "distorted" : "clean")
            << '\n';
    }
    std::cout << "detect: " << flagged << "/" << ds.size() << " flagged\n";
}

struct Sensitivity {
    NetOptions net;
    std::string clean, distorted, out;
};

void run_sensitivity(CLI::App* sub, const Sensitivity& o) {
    require(sub, "--clean");
    require(sub, "--distorted");
    require(sub, "--out");
    const NetworkModel model = load_network(o.net);
    const Dataset clean = read_dataset(o.clean);
    const Dataset distorted = read_dataset(o.distorted);
    if (clean.size() != distorted.size()) throw DataError("sensitivity: --clean and --distorted differ in size");
    std::vector<ImagePair> pairs;
    pairs.reserve(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const auto& c = clean.samples[i];
        const auto& d = distorted.samples[i];
        if (c.subject_id != d.subject_id || c.sample_index != d.sample_index) {
            throw DataError("sensitivity: datasets are not paired at " + sample_filename(c));
        }
        pairs.emplace_back(d.image, c.image);
    }
    ensure_dir(o.out);
    save_sensitivity(compute_sensitivity(model, pairs), fs::path(o.out) / "sensitivity.json");
    std::cout << "sensitivity: " << pairs.size() << " pairs\n";
}

struct BuildPlan {
    NetOptions net;
    std::string sensitivity, out;
    int eta = 1;
    double kappa = 0.1;
    bool no_median = false;
    bool grid_search = false;
    std::string train, detector;
    std::vector<std::string> distortions;
    std::vector<int> eta_grid{1, 2, 3};
    std::vector<double> kappa_grid{0.1, 0.25, 0.5};
    double far = 0.01;
    double fraction = 0.5;
    std::uint64_t seed = 0;
};

void run_build_plan(CLI::App* sub, const BuildPlan& o) {
    require(sub, "--sensitivity");
    require(sub, "--out");
    const SensitivityTable table = load_sensitivity(o.sensitivity);
    ensure_dir(o.out);
    if (!o.grid_search) {
        MitigationPlan plan = build_plan(table, o.eta, o.kappa);
        plan.use_median_filter = !o.no_median;
        save_plan(plan, fs::path(o.out) / "plan.json");
        std::cout << "build-plan: " << plan.mask.disabled.size() << " filters disabled\n";
        return;
    }
    require(sub, "--train");
    require(sub, "--distortion");
    require(sub, "--detector");
    const NetworkModel model = load_network(o.net);
    const DetectorModel det = load_detector(o.detector);
    const Dataset train = read_dataset(o.train);
    std::vector<DistortionSpec> specs;
    for (const auto& p : o.distortions) specs.push_back(read_spec(p));

    GridSearchOptions gs;
    gs.eta_grid = o.eta_grid;
    gs.kappa_grid = o.kappa_grid;
    gs.far_target = o.far;
    gs.distorted_fraction = o.fraction;
    gs.seed = derive_seed(o.seed, kGridStream);
    gs.use_median_filter = !o.no_median;
    const GridSearchResult result = grid_search_plan(model, table, train, specs, det, gs);
    save_plan(result.plan, fs::path(o.out) / "plan.json");

    auto out = open_out(fs::path(o.out) / "grid_search.csv");
    out << "eta,kappa,mean_gar";
    for (const auto& s : specs) out << ",gar_" << to_string(s.kind);
    out << '\n';
    char buf[64];
    for (const auto& e : result.entries) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f", e.eta, e.kappa, e.mean_gar);
        out << buf;
        for (double g : e.gar_per_distortion) {
            std::snprintf(buf, sizeof buf, ",%.6f", g);
            out << buf;
        }
        out << '\n';
    }
    std::cout << "build-plan: grid search picked eta=" << result.plan.eta << " kappa=" << result.plan.kappa << '\n';
}

struct Mitigate {
    NetOptions net;
    std::string plan, detector, in, out;
};

void run_mitigate(CLI::App* sub, const Mitigate& o) {
    require(sub, "--plan");
    require(sub, "--in");
    require(sub, "--out");
    const NetworkModel model = load_network(o.net);
    const MitigationPlan plan = load_plan(o.plan);
    const Dataset ds = read_dataset(o.in);
    const auto images = ds.images();
    ensure_dir(o.out);
    const auto path = fs::path(o.out) / "embeddings.csv";
    if (!o.detector.empty()) {
        const auto defended = defended_embeddings(model, load_detector(o.detector), plan, images);
        write_embeddings_csv(path, ds, defended.embeddings, &defended.verdicts);
    } else {
        model.check_mask(plan.mask);
        std::vector<std::vector<float>> emb(images.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(images.size()); ++i) {
            emb[static_cast<std::size_t>(i)] = mitigate(model, plan, images[static_cast<std::size_t>(i)]);
        }
        write_embeddings_csv(path, ds, emb);
    }
    std::cout << "mitigate: " << ds.size() << " embeddings\n";
}

struct Evaluate {
    NetOptions net;
    std::string dataset, distortion, detector, plan, out = ".";
    double far = 0.01;
    double fraction = 0.5;
    std::uint64_t seed = 0;
};

void run_evaluate(CLI::App* sub, const Evaluate& o) {
    require(sub, "--dataset");
    require(sub, "--distortion");
    if (o.detector.empty() != o.plan.empty()) throw UsageError("evaluate: --detector and --plan go together");
    const NetworkModel model = load_network(o.net);
    const Dataset ds = read_dataset(o.dataset);
    const DistortionSpec spec = read_spec(o.distortion);
    std::optional<DetectorModel> det;
    std::optional<MitigationPlan> plan;
    if (!o.detector.empty()) {
        det = load_detector(o.detector);
        plan = load_plan(o.plan);
    }
    ProtocolOptions po;
    po.far_target = o.far;
    po.distorted_fraction = o.fraction;
    po.seed = o.seed;
    std::vector<RocCurve> curves;
    const auto rows = run_protocol(ds, model, spec, det ? &*det : nullptr, plan ? &*plan : nullptr, po, &curves);

    ensure_dir(o.out);
    auto csv = open_out(fs::path(o.out) / "report.csv");
    write_report_csv(csv, rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        write_roc_dat(fs::path(o.out) / ("roc_" + std::string(to_string(rows[i].condition)) + ".dat"), curves[i]);
    }
    write_report_csv(std::cout, rows);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"advface: adversarial face-distortion detection and mitigation toolkit"};
    app.require_subcommand(1);

    struct Entry {
        CLI::App* sub;
        std::string config;
        std::function<void(CLI::App*)> run;
    };
    std::deque<Entry> entries;  // stable addresses: options bind to Entry::config
    auto add = [&](const std::string& name, const std::string& desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        entries.push_back({sub, {}, {}});
        return sub;
    };
    auto config_of = [&](CLI::App* sub) -> std::string& {
        for (auto& e : entries)
            if (e.sub == sub) return e.config;
        throw std::logic_error("unknown subcommand");
    };
    auto finish = [&](CLI::App* sub, std::function<void(CLI::App*)> run) {
        sub->add_option("--config", config_of(sub), "JSON file with default flag values")->check(CLI::ExistingFile);
        entries.back().run = std::move(run);
    };

    GenData gen;
    {
        auto* s = add("gen-data", "generate a synthetic face dataset");
        s->add_option("--subjects", gen.subjects)->capture_default_str();
        s->add_option("--samples", gen.samples, "images per subject")->capture_default_str();
        s->add_option("--size", gen.size, "image side in pixels")->capture_default_str();
        s->add_option("--seed", gen.seed)->capture_default_str();
        s->add_option("--out", gen.out, "output directory");
        finish(s, [&](CLI::App* a) { run_gen_data(a, gen); });
    }
    Distort dis;
    {
        auto* s = add("distort", "apply one distortion to every image of a dataset");
        s->add_option("--spec", dis.spec, "distortion spec JSON")->check(CLI::ExistingFile);
        s->add_option("--in", dis.in, "dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--out", dis.out, "output directory");
        s->add_option("--seed", dis.seed, "overrides the seed in --spec");
        finish(s, [&](CLI::App* a) { run_distort(a, dis); });
    }
    Extract ext;
    {
        auto* s = add("extract", "embed every image of a dataset");
        add_net_options(s, ext.net);
        s->add_option("--in", ext.in, "dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--out", ext.out, "output directory");
        s->add_flag("--mean-reps", ext.mean_reps, "also write layer-wise mean representations");
        s->add_flag("--save-weights", ext.save_weights, "also write the network weights");
        finish(s, [&](CLI::App* a) { run_extract(a, ext); });
    }
    TrainDetector td;
    {
        auto* s = add("train-detector", "train the clean-vs-distorted SVM detector");
        add_net_options(s, td.net);
        s->add_option("--clean", td.clean, "clean dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--distorted", td.distorted, "distorted dataset directories")->check(CLI::ExistingDirectory);
        s->add_option("--c-grid", td.c_grid, "SVM C values for cross-validation")->capture_default_str();
        s->add_option("--seed", td.seed)->capture_default_str();
        s->add_option("--out", td.out, "output directory");
        finish(s, [&](CLI::App* a) { run_train_detector(a, td); });
    }
    Detect det;
    {
        auto* s = add("detect", "classify images as clean or distorted");
        add_net_options(s, det.net);
        s->add_option("--detector", det.detector, "detector JSON")->check(CLI::ExistingFile);
        s->add_option("--in", det.in, "dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--out", det.out, "output directory");
        finish(s, [&](CLI::App* a) { run_detect(a, det); });
    }
    Sensitivity sen;
    {
        auto* s = add("sensitivity", "per-filter distortion sensitivity from paired datasets");
        add_net_options(s, sen.net);
        s->add_option("--clean", sen.clean, "clean dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--distorted", sen.distorted, "distorted copy of --clean")->check(CLI::ExistingDirectory);
        s->add_option("--out", sen.out, "output directory");
        finish(s, [&](CLI::App* a) { run_sensitivity(a, sen); });
    }
    BuildPlan bp;
    {
        auto* s = add("build-plan", "derive a filter mask from a sensitivity table");
        add_net_options(s, bp.net);
        s->add_option("--sensitivity", bp.sensitivity, "sensitivity JSON")->check(CLI::ExistingFile);
        s->add_option("--eta", bp.eta, "layers to mask")->capture_default_str();
        s->add_option("--kappa", bp.kappa, "fraction of filters per layer")->capture_default_str();
        s->add_flag("--no-median", bp.no_median, "skip the 5x5 median filter");
        s->add_flag("--grid-search", bp.grid_search, "pick eta and kappa by grid search");
        s->add_option("--train", bp.train, "dataset for the grid search")->check(CLI::ExistingDirectory);
        s->add_option("--distortion", bp.distortions, "distortion spec JSON files")->check(CLI::ExistingFile);
        s->add_option("--detector", bp.detector, "detector JSON")->check(CLI::ExistingFile);
        s->add_option("--eta-grid", bp.eta_grid)->capture_default_str();
        s->add_option("--kappa-grid", bp.kappa_grid)->capture_default_str();
        s->add_option("--far", bp.far, "FAR target")->capture_default_str();
        s->add_option("--fraction", bp.fraction, "distorted fraction")->capture_default_str();
        s->add_option("--seed", bp.seed)->capture_default_str();
        s->add_option("--out", bp.out, "output directory");
        finish(s, [&](CLI::App* a) { run_build_plan(a, bp); });
    }
    Mitigate mit;
    {
        auto* s = add("mitigate", "embed images through a mitigation plan");
        add_net_options(s, mit.net);
        s->add_option("--plan", mit.plan, "plan JSON")->check(CLI::ExistingFile);
        s->add_option("--detector", mit.detector, "mitigate only images this detector flags")
            ->check(CLI::ExistingFile);
        s->add_option("--in", mit.in, "dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--out", mit.out, "output directory");
        finish(s, [&](CLI::App* a) { run_mitigate(a, mit); });
    }
    Evaluate ev;
    {
        auto* s = add("evaluate", "original / distorted / corrected verification report");
        add_net_options(s, ev.net);
        s->add_option("--dataset", ev.dataset, "dataset directory")->check(CLI::ExistingDirectory);
        s->add_option("--distortion", ev.distortion, "distortion spec JSON")->check(CLI::ExistingFile);
        s->add_option("--detector", ev.detector, "detector JSON")->check(CLI::ExistingFile);
        s->add_option("--plan", ev.plan, "plan JSON")->check(CLI::ExistingFile);
        s->add_option("--far", ev.far, "FAR target")->capture_default_str();
        s->add_option("--fraction", ev.fraction, "distorted fraction")->capture_default_str();
        s->add_option("--seed", ev.seed)->capture_default_str();
        s->add_option("--out", ev.out, "output directory")->capture_default_str();
        finish(s, [&](CLI::App* a) { run_evaluate(a, ev); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    for (auto& e : entries) {
        if (!e.sub->parsed()) continue;
        try {
            if (!e.config.empty()) apply_config(e.sub, e.config);
            e.run(e.sub);
            return 0;
        } catch (const CLI::ParseError& err) {
            std::cerr << e.sub->get_name() << ": " << err.what() << '\n';
            return 1;
        } catch (const UsageError& err) {
            std::cerr << err.what() << '\n';
            return 1;
        } catch (const ParameterError& err) {
            std::cerr << e.sub->get_name() << ": " << err.what() << '\n';
            return 1;
        } catch (const std::exception& err) {
            std::cerr << e.sub->get_name() << ": " << err.what() << '\n';
            return 2;
        }
    }
    return 1;
}
