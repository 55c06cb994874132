#include <cmath>
#include <filesystem>
#include <numeric>

#include "advface/error.hpp"
#include "advface/featnet.hpp"
#include "advface/serialize.hpp"
#include "advface/synthface.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace advface;

namespace {

double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(int(a.data[i]) - int(b.data[i]));
    return s / static_cast<double>(a.data.size());
}

}  // namespace

TEST_CASE("generate_dataset: small deterministic dataset") {
    const Dataset a = generate_dataset(2, 2, 64, 7);
    const Dataset b = generate_dataset(2, 2, 64, 7);
    REQUIRE(a.size() == 4);
    CHECK(a.labels() == std::vector<int>{0, 0, 1, 1});
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].image == b.samples[i].image);
        CHECK(a.samples[i].image.width == 64);
        CHECK(a.samples[i].image.channels == 1);
    }
    const Dataset c = generate_dataset(2, 2, 64, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a.samples[i].image == c.samples[i].image);
    CHECK(differs);

    // Each render depends only on (seed, subject, sample), not on the batch it came from.
    const Sample lone = render_sample(subject_params(7, 1, 64), 64, 7, 1);
    CHECK(lone.image == a.samples[3].image);
}

TEST_CASE("generate_dataset: parameter minimums") {
    CHECK_THROWS_AS(generate_dataset(1, 2, 64, 0), ParameterError);
    CHECK_THROWS_AS(generate_dataset(2, 1, 64, 0), ParameterError);
    CHECK_THROWS_AS(generate_dataset(2, 2, 47, 0), ParameterError);
    CHECK_NOTHROW(generate_dataset(2, 2, 48, 0));
}

TEST_CASE("within-subject pixel difference is below across-subject difference") {
    const Dataset ds = generate_dataset(24, 2, 64, 99);
    double within = 0, across = 0;
    int pairs = 0;
    for (int s = 0; s + 1 < 24; ++s) {
        within += mean_abs_diff(ds.samples[2 * s].image, ds.samples[2 * s + 1].image);
        across += mean_abs_diff(ds.samples[2 * s].image, ds.samples[2 * s + 2].image);
        ++pairs;
    }
    CHECK(pairs >= 20);
    CHECK(within / pairs < across / pairs);
}

TEST_CASE("identity signal through the default network has effect size >= 0.5") {
    const Dataset ds = generate_dataset(20, 5, 64, 2024);
    const auto emb = embed_batch(default_network(7), ds.images());
    std::vector<double> gen, imp;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = i + 1; j < ds.size(); ++j)
            (ds.samples[i].subject_id == ds.samples[j].subject_id ? gen : imp).push_back(oracle::cosine(emb[i], emb[j]));
    auto stats = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double ss = 0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, ss / (v.size() - 1)};
    };
    const auto [mg, vg] = stats(gen);
    const auto [mi, vi] = stats(imp);
    const double pooled = std::sqrt(((gen.size() - 1) * vg + (imp.size() - 1) * vi) / (gen.size() + imp.size() - 2));
    MESSAGE("effect size " << (mg - mi) / pooled);
    CHECK(mg > mi);
    CHECK((mg - mi) / pooled >= 0.5);
}

TEST_CASE("property: landmarks are valid and follow the jitter") {
    const Dataset ds = generate_dataset(40, 6, 64, 5);
    for (const auto& s : ds.samples) {
        REQUIRE(s.landmarks.valid(64, 64));
        REQUIRE(subject_params(5, s.subject_id, 64).valid());
    }
    // Same subject: eye landmarks move together by at most the translation jitter (plus rounding).
    for (std::size_t i = 0; i + 1 < ds.size(); ++i) {
        const auto& a = ds.samples[i];
        const auto& b = ds.samples[i + 1];
        if (a.subject_id != b.subject_id) continue;
        CHECK(std::abs(a.landmarks.left_eye.x - b.landmarks.left_eye.x) <= 5);
        CHECK(std::abs(a.landmarks.left_eye.y - b.landmarks.left_eye.y) <= 5);
        CHECK(a.landmarks.right_eye.x - a.landmarks.left_eye.x == b.landmarks.right_eye.x - b.landmarks.left_eye.x);
    }
}

TEST_CASE("split_protocol examples") {
    const auto none = split_protocol(10, 0.0, 3);
    CHECK(none.to_distort_ids.empty());
    CHECK(none.clean_ids.size() == 10);
    CHECK(split_protocol(858, 0.5, 1).to_distort_ids.size() == 429);
    CHECK(split_protocol(858, 0.5, 1).to_distort_ids == split_protocol(858, 0.5, 1).to_distort_ids);
    CHECK_THROWS_AS(split_protocol(10, 1.5, 3), ParameterError);
}

TEST_CASE("property: split_protocol is a sized partition") {
    auto g = oracle::rng(31);
    for (int i = 0; i < 250; ++i) {
        const std::size_t n = static_cast<std::size_t>(oracle::uniform_int(g, 0, 300));
        const double f = std::uniform_real_distribution<double>(0.0, 1.0)(g);
        const auto split = split_protocol(n, f, g());
        REQUIRE(split.to_distort_ids.size() == static_cast<std::size_t>(std::llround(f * n)));
        std::vector<std::size_t> all = split.clean_ids;
        all.insert(all.end(), split.to_distort_ids.begin(), split.to_distort_ids.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(n);
        std::iota(expect.begin(), expect.end(), std::size_t{0});
        REQUIRE(all == expect);
    }
}

TEST_CASE("dataset directory round trip and manifest field names") {
    const Dataset ds = generate_dataset(3, 2, 48, 12);
    const auto dir = std::filesystem::temp_directory_path() / "advface_synth_rt";
    std::filesystem::remove_all(dir);
    write_dataset(ds, dir);
    const auto manifest = read_json(dir / "manifest.json");
    const auto& lm = manifest.at("images").at(0).at("landmarks");
    for (const char* key : {"left_eye", "right_eye", "nose", "mouth_center", "forehead_polygon", "beard_polygon"}) {
        CHECK(lm.contains(key));
    }
    CHECK(manifest.at("images").at(0).at("path") == "s0000_000.pgm");

    const Dataset back = read_dataset(dir);
    REQUIRE(back.size() == ds.size());
    CHECK(back.seed == 12);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].image == ds.samples[i].image);
        CHECK(back.samples[i].subject_id == ds.samples[i].subject_id);
        CHECK(back.samples[i].landmarks.beard_polygon.vertices == ds.samples[i].landmarks.beard_polygon.vertices);
    }
    std::filesystem::remove_all(dir);
}
