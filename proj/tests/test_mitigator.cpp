#include <algorithm>
#include <cmath>
#include <filesystem>

#include "advface/error.hpp"
#include "advface/mitigator.hpp"
#include "advface/serialize.hpp"
#include "advface/synthface.hpp"
#include "advface/verifybench.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace advface;

namespace {

NetworkModel tiny_net(std::mt19937_64& g, int size) {
    std::normal_distribution<double> d(0.0, 0.6);
    auto conv = [&](int in, int out) {
        ConvLayer c{out, in, 3, 1, 1, {}, {}};
        c.weights.resize(static_cast<std::size_t>(out) * in * 9);
        for (auto& w : c.weights) w = static_cast<float>(d(g));
        c.bias.resize(static_cast<std::size_t>(out));
        for (auto& b : c.bias) b = static_cast<float>(0.1 * d(g));
        return c;
    };
    std::vector<LayerDef> layers;
    layers.emplace_back(conv(1, 3));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(conv(3, 4));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(FlattenLayer{});
    DenseLayer dense{3, 4 * size * size, {}, {}};
    dense.weights.resize(static_cast<std::size_t>(3) * dense.in_dim);
    for (auto& w : dense.weights) w = static_cast<float>(d(g));
    dense.bias.assign(3, 0.0f);
    layers.emplace_back(std::move(dense));
    return NetworkModel(std::move(layers), {1, 3, 5}, InputSpec{size, size, 1});
}

// Sum over pairs of the L2 distance between post-ReLU planes, from the triple-loop forward.
std::vector<std::vector<double>> eps_oracle(const NetworkModel& net, const std::vector<ImagePair>& pairs) {
    std::vector<std::vector<double>> eps;
    for (int li : net.conv_layers()) eps.emplace_back(static_cast<std::size_t>(net.filter_count(li)), 0.0);
    for (const auto& [dis, cln] : pairs) {
        const auto a = oracle::forward_all(net, dis);
        const auto b = oracle::forward_all(net, cln);
        const auto convs = net.conv_layers();
        for (std::size_t r = 0; r < convs.size(); ++r) {
            const auto& ra = a[static_cast<std::size_t>(convs[r]) + 1];
            const auto& rb = b[static_cast<std::size_t>(convs[r]) + 1];
            const std::size_t plane = static_cast<std::size_t>(ra.h) * ra.w;
            for (int f = 0; f < ra.c; ++f) {
                double ss = 0;
                for (std::size_t p = 0; p < plane; ++p) {
                    const double dd = static_cast<double>(ra.v[f * plane + p]) - rb.v[f * plane + p];
                    ss += dd * dd;
                }
                eps[r][static_cast<std::size_t>(f)] += std::sqrt(ss);
            }
        }
    }
    return eps;
}

SensitivityTable make_table(std::vector<int> layers, std::vector<std::vector<double>> eps) {
    SensitivityTable t;
    t.layer_indices = std::move(layers);
    t.eps = std::move(eps);
    for (const auto& row : t.eps) {
        double s = 0;
        for (double v : row) s += v;
        t.layer_agg.push_back(s);
    }
    t.n_dis = 1;
    return t;
}

}  // namespace

TEST_CASE("sensitivity: identical pairs give zero") {
    const NetworkModel net = default_network(7);
    const Dataset ds = generate_dataset(2, 2, 64, 3);
    const std::vector<ImagePair> pairs{{ds.samples[0].image, ds.samples[0].image}, {ds.samples[1].image, ds.samples[1].image}};
    const auto t = compute_sensitivity(net, pairs);
    CHECK(t.layer_indices == std::vector<int>{0, 3, 6, 9});
    CHECK(t.n_dis == 2);
    for (const auto& row : t.eps)
        for (double v : row) CHECK(v == 0.0);
    CHECK_THROWS_AS(compute_sensitivity(net, std::span<const ImagePair>{}), ParameterError);
}

TEST_CASE("sensitivity: single filter on a 1-pixel image") {
    // One 1x1 filter with weight 2: response = relu(2 * p / 255); eps = |relu(2a) - relu(2b)|.
    std::vector<LayerDef> layers{ConvLayer{1, 1, 1, 1, 0, {2.0f}, {0.0f}}, ReluLayer{}};
    const NetworkModel net(layers, {1}, InputSpec{1, 1, 1});
    const std::vector<ImagePair> pairs{{Image(1, 1, 1, 255), Image(1, 1, 1, 0)}, {Image(1, 1, 1, 51), Image(1, 1, 1, 102)}};
    const auto t = compute_sensitivity(net, pairs);
    REQUIRE(t.eps.size() == 1);
    CHECK(t.eps[0][0] == doctest::Approx(2.0 + 0.4).epsilon(1e-6));
    CHECK(t.layer_agg[0] == t.eps[0][0]);
}

TEST_CASE("property: sensitivity matches the brute-force sum and scales with duplicated pairs") {
    auto g = oracle::rng(71);
    for (int i = 0; i < 200; ++i) {
        const int size = oracle::uniform_int(g, 2, 7);
        const NetworkModel net = tiny_net(g, size);
        std::vector<ImagePair> pairs;
        const int n = oracle::uniform_int(g, 1, 4);
        for (int k = 0; k < n; ++k) pairs.emplace_back(oracle::random_image(g, size, size), oracle::random_image(g, size, size));
        const auto t = compute_sensitivity(net, pairs);
        const auto expect = eps_oracle(net, pairs);
        REQUIRE(t.eps.size() == expect.size());
        for (std::size_t r = 0; r < expect.size(); ++r) {
            double agg = 0;
            for (std::size_t f = 0; f < expect[r].size(); ++f) {
                REQUIRE(t.eps[r][f] >= 0.0);
                REQUIRE(std::abs(t.eps[r][f] - expect[r][f]) <= 1e-5 * std::max(1.0, expect[r][f]));
                agg += t.eps[r][f];
            }
            REQUIRE(std::abs(t.layer_agg[r] - agg) <= 1e-6 * std::max(1.0, agg));
        }
        auto doubled = pairs;
        doubled.insert(doubled.end(), pairs.begin(), pairs.end());
        if ((pairs.size() & (pairs.size() - 1)) == 0) {
            // Power-of-two count: the reduction tree adds two equal halves, so the doubling is exact.
            const auto t2 = compute_sensitivity(net, doubled);
            for (std::size_t r = 0; r < t.eps.size(); ++r)
                for (std::size_t f = 0; f < t.eps[r].size(); ++f) REQUIRE(t2.eps[r][f] == 2.0 * t.eps[r][f]);
        }
    }
}

TEST_CASE("build_plan examples") {
    auto t = make_table({1, 2}, {{1.0, 1.5, 0.5}, {0.1, 0.9, 0.5, 0.2}});
    t.layer_agg = {3.0, 7.0};
    CHECK(build_plan(t, 1, 0.0).mask.empty());
    const auto p = build_plan(t, 1, 0.5);
    CHECK(p.mask.disabled == std::set<std::pair<int, int>>{{2, 1}, {2, 2}});
    CHECK(p.use_median_filter);
    CHECK(p.median_size == 5);

    const auto all = build_plan(t, 2, 1.0);
    CHECK(all.mask.disabled.size() == 7);
    // Any positive kappa disables at least one filter per chosen layer.
    CHECK(build_plan(t, 2, 0.01).mask.disabled == std::set<std::pair<int, int>>{{1, 1}, {2, 1}});
    CHECK(build_plan(t, 1, 0.01).mask.disabled == std::set<std::pair<int, int>>{{2, 1}});
    // Ties: smaller layer index first, then smaller filter index.
    const auto tie = make_table({0, 3}, {{1.0, 1.0}, {0.5, 1.5}});
    CHECK(build_plan(tie, 1, 0.5).mask.disabled == std::set<std::pair<int, int>>{{0, 0}});

    CHECK_THROWS_AS(build_plan(t, 0, 0.5), ParameterError);
    CHECK_THROWS_AS(build_plan(t, 3, 0.5), ParameterError);
    CHECK_THROWS_AS(build_plan(t, 1, 1.5), ParameterError);
}

TEST_CASE("property: build_plan matches sort-and-take and is monotone in kappa") {
    auto g = oracle::rng(72);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 250; ++i) {
        const int rows = oracle::uniform_int(g, 1, 5);
        std::vector<int> layers;
        std::vector<std::vector<double>> eps;
        for (int r = 0; r < rows; ++r) {
            layers.push_back(3 * r);
            std::vector<double> row(static_cast<std::size_t>(oracle::uniform_int(g, 1, 12)));
            // Coarse values so ties actually happen.
            for (auto& v : row) v = oracle::uniform_int(g, 0, 4) * 0.25;
            eps.push_back(row);
        }
        const auto t = make_table(layers, eps);
        const int eta = oracle::uniform_int(g, 1, rows);
        const double k1 = u(g);
        const double k2 = k1 + (1.0 - k1) * u(g);
        const auto p1 = build_plan(t, eta, k1);
        const auto p2 = build_plan(t, eta, k2);
        REQUIRE(std::includes(p2.mask.disabled.begin(), p2.mask.disabled.end(), p1.mask.disabled.begin(), p1.mask.disabled.end()));

        // Oracle: order rows by (-agg, index), filters by (-eps, index).
        std::vector<int> order(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) order[r] = r;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return t.layer_agg[a] != t.layer_agg[b] ? t.layer_agg[a] > t.layer_agg[b] : a < b;
        });
        std::set<std::pair<int, int>> expect;
        for (int k = 0; k < eta; ++k) {
            const auto& row = eps[order[k]];
            const int n = static_cast<int>(row.size());
            int take = 0;
            while (take < n && take < k1 * n) ++take;  // smallest integer >= k1 * n
            std::vector<int> fs(row.size());
            for (int f = 0; f < n; ++f) fs[f] = f;
            std::sort(fs.begin(), fs.end(), [&](int a, int b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
            for (int f = 0; f < take; ++f) expect.insert({layers[order[k]], fs[f]});
        }
        REQUIRE(p1.mask.disabled == expect);
    }
}

TEST_CASE("mitigate: empty plan is the plain forward, full plan zeroes the embedding") {
    const NetworkModel net = default_network(7);
    const Dataset ds = generate_dataset(2, 2, 64, 21);
    MitigationPlan none;
    none.use_median_filter = false;
    MitigationPlan full;
    full.use_median_filter = false;
    for (int li : net.conv_layers())
        for (int f = 0; f < net.filter_count(li); ++f) full.mask.disabled.insert({li, f});
    MitigationPlan median_only;
    for (const auto& s : ds.samples) {
        CHECK(mitigate(net, none, s.image) == embed(net, s.image));
        for (float v : mitigate(net, full, s.image)) CHECK(v == 0.0f);
        CHECK(mitigate(net, median_only, s.image) == embed(net, median_filter(s.image, 5)));
    }
    MitigationPlan bad;
    bad.mask.disabled.insert({0, 99});
    CHECK_THROWS_AS(mitigate(net, bad, ds.samples[0].image), ShapeError);
}

TEST_CASE("defended embeddings route by verdict") {
    const NetworkModel net = default_network(7);
    const Dataset ds = generate_dataset(3, 2, 64, 22);
    const auto imgs = ds.images();
    DetectorModel det;
    det.w.assign(5, 0.0);
    det.feat_mean.assign(5, 0.0);
    det.feat_std.assign(5, 1.0);
    det.mean_reps = compute_mean_reps(net, imgs);
    MitigationPlan plan;  // median only

    det.b = -1.0;
    const auto clean = defended_embeddings(net, det, plan, imgs);
    det.b = 1.0;
    const auto flagged = defended_embeddings(net, det, plan, imgs);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        CHECK(clean.verdicts[i] == Verdict::Clean);
        CHECK(clean.embeddings[i] == embed(net, imgs[i]));
        CHECK(flagged.verdicts[i] == Verdict::Distorted);
        CHECK(flagged.embeddings[i] == mitigate(net, plan, imgs[i]));
    }
}

TEST_CASE("grid search: exhaustive over a small grid, argmax with least-intervention ties") {
    const NetworkModel net = default_network(7);
    const Dataset train = generate_dataset(4, 3, 64, 31);
    const std::vector<DistortionSpec> dists{DistortionSpec::grids(10, 4), DistortionSpec::xmsb({0.03, 0.05, 0.10}, 5)};
    std::vector<ImagePair> pairs;
    for (std::size_t i = 0; i < train.size(); ++i) pairs.emplace_back(apply_to_sample(dists[0], train.samples[i], i).first, train.samples[i].image);
    const auto table = compute_sensitivity(net, pairs);

    DetectorModel det;  // flags everything
    det.w.assign(5, 0.0);
    det.b = 1.0;
    det.feat_mean.assign(5, 0.0);
    det.feat_std.assign(5, 1.0);
    det.mean_reps = compute_mean_reps(net, train.images());

    GridSearchOptions opt;
    opt.eta_grid = {1, 2};
    opt.kappa_grid = {0.0, 0.25};
    opt.seed = 3;
    const auto res = grid_search_plan(net, table, train, dists, det, opt);
    REQUIRE(res.entries.size() == 4);

    // Recompute each entry independently.
    for (const auto& e : res.entries) {
        MitigationPlan plan = build_plan(table, e.eta, e.kappa);
        double mean = 0;
        for (std::size_t d = 0; d < dists.size(); ++d) {
            const Dataset dd = distort_subset(train, dists[d], opt.distorted_fraction, opt.seed + d);
            std::vector<std::vector<float>> embs;
            for (const auto& img : dd.images()) embs.push_back(mitigate(net, plan, img));
            const double gar = gar_at_far(roc(score_matrix(embs, train.labels())), opt.far_target);
            CHECK(gar == doctest::Approx(e.gar_per_distortion[d]).epsilon(1e-12));
            mean += gar / dists.size();
        }
        CHECK(mean == doctest::Approx(e.mean_gar).epsilon(1e-12));
    }
    const auto best = std::max_element(res.entries.begin(), res.entries.end(),
                                       [](const auto& a, const auto& b) { return a.mean_gar < b.mean_gar; });
    CHECK(res.plan == build_plan(table, res.plan.eta, res.plan.kappa));
    double chosen = -1;
    for (const auto& e : res.entries)
        if (e.eta == res.plan.eta && e.kappa == res.plan.kappa) chosen = e.mean_gar;
    CHECK(chosen == best->mean_gar);
    // Never worse than the (eta_min, kappa = 0) baseline.
    CHECK(chosen >= res.entries.front().mean_gar);
    // kappa = 0 gives the same plan for every eta, so a tie at kappa 0 must resolve to eta 1.
    if (res.plan.kappa == 0.0) CHECK(res.plan.eta == 1);

    GridSearchOptions single = opt;
    single.eta_grid = {2};
    single.kappa_grid = {0.25};
    const auto one = grid_search_plan(net, table, train, dists, det, single);
    CHECK(one.plan == build_plan(table, 2, 0.25));
}

TEST_CASE("sensitivity and plan JSON round trips") {
    const auto t = make_table({0, 3}, {{0.5, 1.25}, {2.0, 0.0, 3.5}});
    const auto dir = std::filesystem::temp_directory_path();
    save_sensitivity(t, dir / "advface_sens.json");
    CHECK(load_sensitivity(dir / "advface_sens.json") == t);
    const auto j = read_json(dir / "advface_sens.json");
    CHECK(j.contains("eps"));
    CHECK(j.contains("layer_agg"));
    CHECK(j.at("n_dis") == 1);

    const auto plan = build_plan(t, 2, 0.5);
    save_plan(plan, dir / "advface_plan.json");
    CHECK(load_plan(dir / "advface_plan.json") == plan);
    const auto pj = read_json(dir / "advface_plan.json");
    CHECK(pj.at("mask").size() == plan.mask.disabled.size());
    CHECK(pj.at("use_median_filter") == true);
    std::filesystem::remove(dir / "advface_sens.json");
    std::filesystem::remove(dir / "advface_plan.json");
}
