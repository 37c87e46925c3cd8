#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "kcc_test_gallery";
    fs::create_directories(dir);
    return dir / name;
}

kcc::Dataset small_synth(std::size_t classes, std::size_t per_class, std::uint64_t seed = 1) {
    kcc::SynthSpec spec;
    spec.classes = classes;
    spec.per_class = per_class;
    spec.grid = 8;
    spec.dim = 8;
    spec.noise = 0.2;
    spec.seed = seed;
    spec.patch_size = 4;
    return kcc::synthesize(spec);
}

kcc::PipelineConfig small_config() {
    kcc::PipelineConfig c;
    c.n_segments = 4;
    c.per_class = 10;
    return c;
}

double oracle_cost(const std::vector<std::vector<float>>& pts, const std::vector<std::size_t>& medoids) {
    double cost = 0.0;
    for (const auto& p : pts) {
        long double best = std::numeric_limits<long double>::infinity();
        for (auto m : medoids) best = std::min(best, oracle::cos_dist(p, pts[m]));
        cost += static_cast<double>(best);
    }
    return cost;
}

}  // namespace

TEST(GlobalVector, PrefersClassToken) {
    kcc::TokenGrid g;
    g.image_id = "x";
    g.cls_vector = std::vector<float>{1.0f, 2.0f};
    std::vector<kcc::Keypoint> kps(1);
    kps[0].representation = {9.0f, 9.0f};
    EXPECT_EQ(kcc::compute_global_vector(g, kps), (std::vector<float>{1.0f, 2.0f}));
}

TEST(GlobalVector, FallsBackToKeypointMean) {
    kcc::TokenGrid g;
    g.image_id = "x";
    std::vector<kcc::Keypoint> kps(2);
    kps[0].representation = {1.0f, 0.0f};
    kps[1].representation = {0.0f, 3.0f};
    EXPECT_EQ(kcc::compute_global_vector(g, kps), (std::vector<float>{0.5f, 1.5f}));
    EXPECT_THROW(kcc::compute_global_vector(g, {}), kcc::ValidationError);
}

TEST(Selection, ClusteredPointsPickOneMedoidPerCluster) {
    // Three near-identical points plus one far away: two medoids must cover both groups.
    kcc::ClassImages ci;
    ci[0] = {{"a", {1.0f, 0.0f, 0.0f}}, {"b", {1.0f, 0.01f, 0.0f}}, {"c", {1.0f, 0.0f, 0.01f}}, {"d", {0.0f, 0.0f, 1.0f}}};
    const auto chosen = kcc::select_prototypes(ci, 2, kcc::SelectionStrategy::KMedoids, 3).at(0);
    ASSERT_EQ(chosen.size(), 2u);
    EXPECT_NE(std::find(chosen.begin(), chosen.end(), "d"), chosen.end());

    // The selection reaches the brute-force optimal cost over all pairs.
    std::vector<std::vector<float>> pts;
    for (const auto& [id, v] : ci[0]) pts.push_back(v);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) best = std::min(best, oracle_cost(pts, {i, j}));
    std::vector<std::size_t> idx;
    for (const auto& id : chosen) idx.push_back(static_cast<std::size_t>(id[0] - 'a'));
    EXPECT_NEAR(oracle_cost(pts, idx), best, 1e-9);
}

TEST(Selection, DeterministicAndOrderFree) {
    std::mt19937_64 rng(17);
    kcc::ClassImages ci;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 15; ++i) ci[c].emplace_back("id" + std::to_string(c) + "_" + std::to_string(i), oracle::random_vector(rng, 6));
    for (auto strategy : {kcc::SelectionStrategy::KMedoids, kcc::SelectionStrategy::Random}) {
        const auto a = kcc::select_prototypes(ci, 4, strategy, 99);
        const auto b = kcc::select_prototypes(ci, 4, strategy, 99);
        EXPECT_EQ(a, b);
        auto shuffled = ci;
        for (auto& [c, v] : shuffled) std::shuffle(v.begin(), v.end(), rng);
        EXPECT_EQ(kcc::select_prototypes(shuffled, 4, strategy, 99), a);
        for (const auto& [c, ids] : a) {
            EXPECT_EQ(ids.size(), 4u);
            EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
            EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 4u);
        }
    }
}

TEST(Selection, SmallClassesKeepEverything) {
    kcc::ClassImages ci;
    ci[0] = {{"b", {1.0f}}, {"a", {2.0f}}};
    EXPECT_EQ(kcc::select_prototypes(ci, 5, kcc::SelectionStrategy::KMedoids, 0).at(0),
              (std::vector<std::string>{"a", "b"}));
    EXPECT_THROW(kcc::select_prototypes({}, 5, kcc::SelectionStrategy::KMedoids, 0), kcc::ValidationError);
    EXPECT_THROW(kcc::select_prototypes(ci, 0, kcc::SelectionStrategy::KMedoids, 0), kcc::ValidationError);
}

TEST(BuildGallery, TwoClassesOfTwelveGiveTwentyRecords) {
    const auto ds = small_synth(2, 12);
    const auto g = kcc::build_gallery(ds, small_config());
    ASSERT_EQ(g.size(), 20u);
    EXPECT_EQ(g.classes, (std::vector<int>{0, 1}));
    EXPECT_TRUE(g.shortfall.empty());
    EXPECT_TRUE(std::is_sorted(g.records.begin(), g.records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.class_label, a.image_id) < std::tie(b.class_label, b.image_id);
    }));
    for (const auto& r : g.records) {
        EXPECT_EQ(r.class_label, ds.image_classes.at(r.image_id));
        EXPECT_FALSE(r.keypoints.empty());
        EXPECT_LE(r.keypoints.size(), 4u);
        for (const auto& kp : r.keypoints) EXPECT_EQ(kp.class_label, r.class_label);
    }
    EXPECT_EQ(g.config.encoder_id, "synthetic");
    EXPECT_EQ(g.fingerprint, g.config.fingerprint());
}

TEST(BuildGallery, ShortfallIsRecorded) {
    const auto ds = small_synth(2, 3);
    const auto g = kcc::build_gallery(ds, small_config());
    EXPECT_EQ(g.size(), 6u);
    EXPECT_EQ(g.shortfall, (std::map<int, std::size_t>{{0, 3}, {1, 3}}));
}

TEST(BuildGallery, EmptyForegroundImagesAreSkipped) {
    auto ds = small_synth(2, 4);
    for (auto& m : ds.masks)
        if (m.image_id == ds.grids[1].image_id) std::fill(m.values.begin(), m.values.end(), 0);
    const auto g = kcc::build_gallery(ds, small_config());
    EXPECT_EQ(g.size(), 7u);
    EXPECT_EQ(g.skipped, (std::vector<std::string>{ds.grids[1].image_id}));
    for (const auto& r : g.records) EXPECT_NE(r.image_id, ds.grids[1].image_id);
}

TEST(BuildGallery, ByteIdenticalRebuildAcrossJobs) {
    const auto ds = small_synth(3, 12);
    auto c = small_config();
    const auto first = kcc::build_gallery(ds, c);
    EXPECT_EQ(kcc::serialize_gallery(first), kcc::serialize_gallery(kcc::build_gallery(ds, c)));
    c.jobs = 4;
    auto threaded = kcc::build_gallery(ds, c);
    threaded.config.jobs = 1;  // the only field allowed to differ
    EXPECT_EQ(kcc::serialize_gallery(threaded), kcc::serialize_gallery(first));
}

TEST(BuildGallery, SaveLoadRoundTrip) {
    auto ds = small_synth(2, 5);
    ds.image_paths[ds.grids[0].image_id] = "imgs/0.png";
    const auto g = kcc::build_gallery(ds, small_config());
    const auto path = temp_path("g.kccg");
    kcc::save_gallery(g, path);
    const auto back = kcc::load_gallery(path);
    EXPECT_EQ(back, g);
    EXPECT_EQ(kcc::load_gallery(path, g.fingerprint), g);
}

TEST(BuildGallery, FingerprintDriftIsDetected) {
    const auto ds = small_synth(2, 5);
    const auto g = kcc::build_gallery(ds, small_config());
    const auto path = temp_path("drift.kccg");
    kcc::save_gallery(g, path);
    auto other = g.config;
    other.n_segments = 5;
    try {
        kcc::load_gallery(path, other.fingerprint());
        FAIL() << "expected drift";
    } catch (const kcc::ConfigDriftError& e) {
        EXPECT_NE(std::string(e.what()).find("config drift"), std::string::npos);
    }
    // J, per_class and jobs are not fingerprinted.
    auto same = g.config;
    same.J = 3;
    same.per_class = 2;
    same.jobs = 8;
    EXPECT_EQ(same.fingerprint(), g.fingerprint);
}

TEST(BuildGallery, TruncatedFileIsAnIntegrityError) {
    const auto ds = small_synth(2, 5);
    const auto path = temp_path("trunc.kccg");
    kcc::save_gallery(kcc::build_gallery(ds, small_config()), path);
    fs::resize_file(path, fs::file_size(path) - 7);
    EXPECT_THROW(kcc::load_gallery(path), kcc::IntegrityError);
}

TEST(BuildGallery, ClassTokenSelectsGlobalVector) {
    kcc::SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 3;
    spec.grid = 6;
    spec.dim = 5;
    spec.patch_size = 2;
    spec.with_cls = true;
    const auto ds = kcc::synthesize(spec);
    const auto g = kcc::build_gallery(ds, small_config());
    for (const auto& r : g.records) {
        const auto it = std::find_if(ds.grids.begin(), ds.grids.end(), [&](const auto& x) { return x.image_id == r.image_id; });
        ASSERT_NE(it, ds.grids.end());
        EXPECT_EQ(r.global_vector, *it->cls_vector);
    }
}

TEST(Config, ParseErrorsCarryLineNumbers) {
    try {
        kcc::parse_config("{\n  \"n_segments\": 4,\n  \"J\": ,\n}", "bad.json");
        FAIL() << "expected a parse error";
    } catch (const kcc::ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.json:3:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(kcc::parse_config("{\"nope\": 1}"), kcc::ValidationError);
    EXPECT_THROW(kcc::parse_config("{\"J\": 0}"), kcc::ValidationError);
    const auto c = kcc::parse_config("{\"n_segments\": 6, \"selection\": \"random\"}");
    EXPECT_EQ(c.n_segments, 6);
    EXPECT_EQ(c.selection, kcc::SelectionStrategy::Random);
    EXPECT_EQ(kcc::PipelineConfig::from_json(c.to_json()), c);
}
