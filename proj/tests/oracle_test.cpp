#include <gtest/gtest.h>

#include <map>

#include "pgnas/data.hpp"
#include "pgnas/oracle.hpp"
#include "pgnas/search.hpp"
#include "pgnas/supernet.hpp"

using namespace pgnas;

namespace {

SearchSpaceSpec one_layer_space(int in_channels) {
    SearchSpaceSpec s;
    s.layers.push_back({in_channels, 3, {1}, "relu", true});
    s.num_classes = 3;
    s.input_shape = {in_channels, 3, 3};
    return s;
}

Dataset val_for(const SearchSpaceSpec& space, int count, uint64_t seed) {
    data::PlantedSpec ps;
    ps.space = space;
    std::vector<uint8_t> bits(static_cast<size_t>(space.total_slices()), 0);
    bits[0] = 1;
    if (bits.size() > 2) bits[2] = 1;
    ps.planted = Architecture::from_bits(space, bits);
    ps.teacher_seed = seed;
    ps.noise = 0.0;
    ps.count = count;
    Dataset ds = data::generate_planted(ps);
    ds.split_tag = "val";
    return ds;
}

}  // namespace

TEST(Enumerate, SingleChoiceGivesOneArchitecture) {
    SearchSpaceSpec s = one_layer_space(1);
    SuperNet net = SuperNet::build(s, 1, {});
    Dataset val = val_for(s, 60, 2);
    oracle::EnumerationResult res = oracle::enumerate_all(net, val);
    EXPECT_EQ(res.entries.size(), 1u);
    EXPECT_EQ(res.rejected, 0);
}

TEST(Enumerate, FourChoicesGiveFifteenArchitectures) {
    SearchSpaceSpec s = one_layer_space(4);
    SuperNet net = SuperNet::build(s, 3, {});
    Dataset val = val_for(s, 80, 4);
    oracle::EnumerationResult res = oracle::enumerate_all(net, val);
    EXPECT_EQ(res.entries.size(), 15u);  // 2^4 - 1, only the empty one rejected
    EXPECT_EQ(res.rejected, 0);          // empty bitmask never enters the loop
    for (size_t i = 1; i < res.entries.size(); ++i) {
        EXPECT_FALSE(oracle::entry_ranks_before(res.entries[i], res.entries[i - 1]));
    }
}

TEST(Enumerate, CountsHeadlessArchitecturesAsRejected) {
    SearchSpaceSpec s;  // two layers: masks killing either layer are headless
    s.layers.push_back({1, 2, {1}, "relu", false});
    s.layers.push_back({2, 2, {1}, "relu", true});
    s.num_classes = 2;
    s.input_shape = {1, 3, 3};
    SuperNet net = SuperNet::build(s, 5, {});
    Dataset val = val_for(s, 60, 6);
    oracle::EnumerationResult res = oracle::enumerate_all(net, val);
    // 3 slices -> 7 non-empty masks; alive needs layer0 bit and one of layer1's
    EXPECT_EQ(res.entries.size(), 3u);
    EXPECT_EQ(res.rejected, 4);
}

TEST(Enumerate, CapIsEnforced) {
    SearchSpaceSpec s = one_layer_space(4);
    SuperNet net = SuperNet::build(s, 7, {});
    Dataset val = val_for(s, 30, 8);
    EXPECT_THROW(oracle::enumerate_all(net, val, 3), ConfigError);
}

TEST(Enumerate, TopEntryDominatesEverySampledCandidate) {
    SearchSpaceSpec s = one_layer_space(4);
    SuperNet net = SuperNet::build(s, 9, {});
    Dataset val = val_for(s, 100, 10);
    oracle::EnumerationResult res = oracle::enumerate_all(net, val);
    SearchConfig cfg;
    cfg.num_candidates = 30;
    cfg.seed = 11;
    search::SearchResult sr = search::run_search(net, val, cfg);
    for (const auto& r : sr.reports) {
        EXPECT_LE(r.accuracy, res.best().accuracy);
    }
}

TEST(Enumerate, GuidedSelectionAppearsWithIdenticalMetrics) {
    SearchSpaceSpec s = one_layer_space(4);
    SuperNet net = SuperNet::build(s, 12, {});
    Dataset val = val_for(s, 90, 13);
    oracle::EnumerationResult res = oracle::enumerate_all(net, val);
    SearchConfig cfg;
    cfg.num_candidates = 10;
    cfg.seed = 14;
    search::SearchResult sr = search::run_search(net, val, cfg);
    const Architecture& best = sr.best().arch;
    bool found = false;
    for (const auto& e : res.entries) {
        if (e.arch.active == best.active) {
            found = true;
            EXPECT_EQ(e.accuracy, sr.best().accuracy);
            EXPECT_EQ(e.loss, sr.best().loss);
            EXPECT_EQ(e.param_count, sr.best().param_count);
        }
    }
    EXPECT_TRUE(found);
}

TEST(RandomBaseline, DeterministicUnderFixedSeed) {
    SearchSpaceSpec s = one_layer_space(4);
    SuperNet net = SuperNet::build(s, 15, {});
    Dataset val = val_for(s, 70, 16);
    CandidateReport a = oracle::random_baseline(net, 20, 0.7, val, 17);
    CandidateReport b = oracle::random_baseline(net, 20, 0.7, val, 17);
    EXPECT_EQ(a.arch.active, b.arch.active);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_THROW(oracle::random_baseline(net, 20, 1.5, val, 17), ConfigError);
}

TEST(RandomBaseline, ExhaustiveMaskListRecoversEnumerationBest) {
    SearchSpaceSpec s = one_layer_space(4);
    SuperNet net = SuperNet::build(s, 18, {});
    Dataset val = val_for(s, 110, 19);
    oracle::EnumerationResult res = oracle::enumerate_all(net, val);
    // feed every bitmask through the shared evaluate+rank path
    std::vector<CandidateReport> reports;
    for (uint32_t bits = 1; bits < 16; ++bits) {
        MaskSample m;
        m.mode = MaskSample::Mode::hard;
        for (int i = 0; i < 4; ++i) m.values.push_back((bits >> i) & 1u ? 1.0 : 0.0);
        CandidateReport r = search::evaluate_candidate(net, m, val);
        r.index = static_cast<int>(bits) - 1;
        reports.push_back(std::move(r));
    }
    const size_t best = search::rank_and_select(reports);
    EXPECT_EQ(reports[best].accuracy, res.best().accuracy);
    EXPECT_EQ(reports[best].loss, res.best().loss);
    EXPECT_EQ(reports[best].arch.active, res.best().arch.active);
}

TEST(CompareRuns, IdenticalInputsSplitTheWins) {
    std::vector<double> same = {0.5, 0.6, 0.7};
    oracle::RunComparison c = oracle::compare_runs(same, same);
    EXPECT_EQ(c.wins, 0);
    EXPECT_EQ(c.ties, 3);
    EXPECT_DOUBLE_EQ(c.win_rate, 0.5);
    EXPECT_DOUBLE_EQ(c.sign_test_p, 1.0);
}

TEST(CompareRuns, DominatingGuidedRun) {
    std::vector<double> guided = {0.9, 0.8, 0.95, 0.85};
    std::vector<double> random = {0.7, 0.6, 0.9, 0.8};
    oracle::RunComparison c = oracle::compare_runs(guided, random);
    EXPECT_EQ(c.wins, 4);
    EXPECT_DOUBLE_EQ(c.win_rate, 1.0);
    EXPECT_DOUBLE_EQ(c.guided_median, 0.875);
    EXPECT_NEAR(c.sign_test_p, 1.0 / 16.0, 1e-12);
}

TEST(CompareRuns, NineOfTenSignTest) {
    std::vector<double> guided(10, 0.9), random(10, 0.5);
    random[3] = 0.95;  // one loss
    oracle::RunComparison c = oracle::compare_runs(guided, random);
    EXPECT_EQ(c.wins, 9);
    EXPECT_EQ(c.losses, 1);
    EXPECT_NEAR(c.sign_test_p, 11.0 / 1024.0, 1e-12);  // ~0.0107
}

TEST(CompareRuns, UnpairedInputsRejected) {
    EXPECT_THROW(oracle::compare_runs({0.5, 0.6}, {0.5}), ConfigError);
    EXPECT_THROW(oracle::compare_runs({}, {}), ConfigError);
}

TEST(CompareRuns, SummaryLineCarriesTheStatistics) {
    oracle::RunComparison c = oracle::compare_runs({0.9, 0.8}, {0.7, 0.85});
    const std::string line = oracle::comparison_line(c);
    EXPECT_NE(line.find("\"wins\":1"), std::string::npos);
    EXPECT_NE(line.find("\"losses\":1"), std::string::npos);
    EXPECT_NE(line.find("\"win_rate\":0.5"), std::string::npos);
}
