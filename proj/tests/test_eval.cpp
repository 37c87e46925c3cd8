#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"

namespace {

kcc::Dataset synth(std::size_t per_class, std::uint64_t seed, const std::string& prefix) {
    kcc::SynthSpec spec;
    spec.classes = 3;
    spec.per_class = per_class;
    spec.grid = 8;
    spec.dim = 8;
    spec.noise = 0.2;
    spec.seed = seed;
    spec.patch_size = 4;
    spec.prefix = prefix;
    return kcc::synthesize(spec);
}

kcc::PipelineConfig config() {
    kcc::PipelineConfig c;
    c.n_segments = 4;
    c.per_class = 4;
    c.J = 6;
    return c;
}

}  // namespace

TEST(Evaluate, SelfMatchIsPerfect) {
    const auto ds = synth(4, 1, "tr");
    const auto g = kcc::build_gallery(ds, config());
    const auto r = kcc::evaluate(ds, g, g.config);
    EXPECT_EQ(r.total, 12u);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(r.mean_complexity, 1.0);
    EXPECT_EQ(r.abstentions, 0u);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Evaluate, RecountFromLogMatchesSummary) {
    const auto train = synth(6, 1, "tr");
    const auto test = synth(5, 2, "te");
    const auto g = kcc::build_gallery(train, config());
    const auto r = kcc::evaluate(test, g, g.config);
    std::size_t correct = 0, abstained = 0, complexity = 0;
    std::map<int, std::pair<int, int>> per;
    for (const auto& o : r.log) {
        const bool ok = !o.abstained && o.predicted_class == test.image_classes.at(o.image_id);
        correct += ok;
        abstained += o.abstained;
        if (!o.abstained) complexity += o.complexity;
        per[o.true_class].first += ok;
        per[o.true_class].second += 1;
    }
    EXPECT_EQ(r.correct, correct);
    EXPECT_EQ(r.abstentions, abstained);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / static_cast<double>(r.log.size()));
    EXPECT_DOUBLE_EQ(r.mean_complexity,
                     static_cast<double>(complexity) / static_cast<double>(r.log.size() - abstained));
    for (const auto& [c, counts] : per)
        EXPECT_DOUBLE_EQ(r.per_class_accuracy.at(c), static_cast<double>(counts.first) / counts.second);
    EXPECT_TRUE(std::is_sorted(r.log.begin(), r.log.end(),
                               [](const auto& a, const auto& b) { return a.image_id < b.image_id; }));
}

TEST(Evaluate, QueryOrderAndJobsDoNotMatter) {
    const auto train = synth(6, 1, "tr");
    auto test = synth(5, 2, "te");
    const auto g = kcc::build_gallery(train, config());
    const auto base = kcc::evaluate(test, g, g.config);
    std::mt19937_64 rng(3);
    std::vector<std::size_t> order(test.grids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    kcc::Dataset shuffled = test;
    shuffled.grids.clear();
    shuffled.masks.clear();
    for (auto i : order) {
        shuffled.grids.push_back(test.grids[i]);
        shuffled.masks.push_back(test.masks[i]);
    }
    auto cfg = g.config;
    cfg.jobs = 3;
    const auto other = kcc::evaluate(shuffled, g, cfg);
    EXPECT_EQ(other.log, base.log);
    EXPECT_EQ(kcc::to_json(other, false), kcc::to_json(base, false));
}

TEST(Evaluate, EncoderMismatchWarns) {
    const auto train = synth(3, 1, "tr");
    auto test = synth(2, 2, "te");
    test.encoder_id = "other";
    const auto g = kcc::build_gallery(train, config());
    const auto r = kcc::evaluate(test, g, g.config);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("encoder"), std::string::npos);
}

TEST(Evaluate, AbstentionsCountAsErrors) {
    const auto train = synth(3, 1, "tr");
    auto test = synth(2, 2, "te");
    std::fill(test.masks[0].values.begin(), test.masks[0].values.end(), 0);
    const auto g = kcc::build_gallery(train, config());
    const auto r = kcc::evaluate(test, g, g.config);
    EXPECT_EQ(r.abstentions, 1u);
    EXPECT_LE(r.correct, r.total - 1);
    EXPECT_NEAR(r.abstention_rate, 1.0 / 6.0, 1e-12);
}

TEST(Sweep, GridExpansionAndDeduplication) {
    auto base = config();
    const auto grid = kcc::parse_sweep_grid(nlohmann::json::parse(R"({"n_segments": [4, 6], "J": [3, 6, 3]})"), base);
    std::vector<std::string> warnings;
    const auto configs = kcc::expand_grid(grid, base, &warnings);
    EXPECT_EQ(configs.size(), 4u);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_EQ(warnings[0], "removed 2 duplicate sweep configuration(s)");
    EXPECT_THROW(kcc::parse_sweep_grid(nlohmann::json::parse(R"({"bogus": [1]})"), base), kcc::ValidationError);
    EXPECT_THROW(kcc::expand_grid(kcc::parse_sweep_grid(nlohmann::json::parse(R"({"J": [0]})"), base), base),
                 kcc::ValidationError);
}

TEST(Sweep, FourRowsReproducible) {
    const auto train = synth(5, 1, "tr");
    const auto test = synth(3, 2, "te");
    const auto grid = kcc::parse_sweep_grid(nlohmann::json::parse(R"({"n_segments": [3, 5], "J": [2, 8]})"), config());
    const auto a = kcc::run_sweep(train, test, grid, config());
    const auto b = kcc::run_sweep(train, test, grid, config());
    ASSERT_EQ(a.rows.size(), 4u);
    EXPECT_EQ(kcc::sweep_csv(a), kcc::sweep_csv(b));
    const auto csv = kcc::sweep_csv(a);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "n_segments,per_class,J,seed,accuracy,mean_complexity,abstention_rate");
    // Each row equals a stand-alone evaluation of the same configuration.
    for (const auto& row : a.rows) {
        auto c = row.config;
        const auto g = kcc::build_gallery(train, c);
        EXPECT_EQ(kcc::evaluate(test, g, c).log, row.log);
    }
}
