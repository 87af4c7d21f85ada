// Copyright 2025 The Breadth Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <memory>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "breadth/policy.hpp"
#include "breadth/synthetic.hpp"

namespace {

using namespace breadth;
using policy::Preset;
using policy::Tactic;

struct ConstantRescorer final : scoring::Rescorer {
    double value;
    explicit ConstantRescorer(double v) : value(v) {}
    double score(const EmbeddingVector&, const EmbeddingVector&) const override { return value; }
};

policy::RetrievalEngine text_engine(const std::vector<std::string>& titles,
                                    std::shared_ptr<const scoring::Rescorer> rescorer =
                                        std::make_shared<scoring::CalibratedScorer>(60, -50)) {
    auto embedder = std::make_shared<catalog::NGramEmbedder>();
    catalog::Catalog cat("m", embedder->dim());
    for (std::size_t i = 0; i < titles.size(); ++i) {
        auto p = synthetic::plain_product(synthetic::numbered("p", i, 3), "m", titles[i]);
        auto e = embedder->embed(p.descriptor());
        cat.add(std::move(p), std::move(e));
    }
    return policy::RetrievalEngine::build(std::move(cat), {}, embedder, std::move(rescorer));
}

const std::vector<std::string> kTitles{"red nail polish",  "coral nail polish", "nail polish remover",
                                       "lip gloss clear",  "lip balm honey",    "vitamin c face serum",
                                       "night face cream", "hiking boots",      "wool hiking socks"};

policy::MerchantConfig config(Preset p, std::size_t k = 50) {
    policy::MerchantConfig c;
    c.merchant_id = "m";
    c.preset = p;
    c.k = k;
    return c;
}

TEST(Presets, Thresholds) {
    EXPECT_EQ(policy::preset_threshold(Preset::educational), 0.3);
    EXPECT_EQ(policy::preset_threshold(Preset::balanced), 0.8);
    EXPECT_EQ(policy::preset_threshold(Preset::pushy), 1.0);
    EXPECT_EQ(policy::parse_preset("pushy"), Preset::pushy);
    EXPECT_THROW(policy::parse_preset("aggressive"), InvalidArgument);
}

TEST(MerchantConfig, OverrideAndValidation) {
    auto c = config(Preset::balanced);
    c.threshold_override = 0.55;
    EXPECT_EQ(c.threshold(), 0.55);
    c.threshold_override = 1.5;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c.threshold_override.reset();
    c.k = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Decide, BranchTable) {
    EXPECT_EQ(policy::decide(std::nullopt, false, 0.3), Tactic::exploration);
    EXPECT_EQ(policy::decide(0.2, false, 0.3), Tactic::recommendation);
    EXPECT_EQ(policy::decide(0.85, false, 0.8), Tactic::discovery);
    EXPECT_EQ(policy::decide(0.8, false, 0.8), Tactic::discovery);
    EXPECT_EQ(policy::decide(0.1, true, 0.8), Tactic::discovery);
    EXPECT_EQ(policy::decide(1.0, false, 1.0), Tactic::discovery);
    EXPECT_EQ(policy::decide(0.999, false, 1.0), Tactic::recommendation);
}

TEST(Decide, ThresholdMonotonicity) {
    for (int bi = 0; bi <= 100; ++bi) {
        const double b = bi / 100.0;
        bool recommended = false;
        for (int ti = 0; ti <= 100; ++ti) {
            const bool now = policy::decide(b, false, ti / 100.0) == Tactic::recommendation;
            EXPECT_FALSE(recommended && !now) << "b=" << b << " tau=" << ti / 100.0;
            recommended = now;
        }
    }
}

TEST(Route, NoFocusedQueryExplores) {
    auto engine = text_engine(kTitles);
    policy::QueryBundle bundle;
    bundle.exploratory.push_back({policy::QueryMode::identification, "face care"});
    auto d = policy::route(bundle, engine, config(Preset::balanced, 4));
    EXPECT_EQ(d.tactic, Tactic::exploration);
    EXPECT_FALSE(d.broadness);
    EXPECT_FALSE(d.report);
    EXPECT_EQ(d.candidates.size(), 4u);
    EXPECT_FALSE(d.empty_candidates);
}

TEST(Route, ExplorationMergesAndDeduplicates) {
    auto engine = text_engine(kTitles);
    policy::QueryBundle bundle;
    bundle.exploratory.push_back({policy::QueryMode::identification, "nail polish"});
    bundle.exploratory.push_back({policy::QueryMode::identification, "polish nail red"});
    auto d = policy::route(bundle, engine, config(Preset::balanced, 5));
    std::set<std::string> ids;
    for (std::size_t i = 0; i < d.candidates.size(); ++i) {
        ids.insert(d.candidates[i].product_id);
        if (i) {
            EXPECT_GE(d.candidates[i - 1].similarity, d.candidates[i].similarity);
        }
    }
    EXPECT_EQ(ids.size(), d.candidates.size());
    EXPECT_LE(d.candidates.size(), 5u);
}

TEST(Route, FocusedQueryUsesBroadness) {
    auto engine = text_engine(kTitles);
    policy::QueryBundle bundle;
    bundle.focused = "red nail polish";
    for (auto p : {Preset::educational, Preset::balanced, Preset::pushy}) {
        auto d = policy::route(bundle, engine, config(p));
        ASSERT_TRUE(d.broadness);
        ASSERT_TRUE(d.report);
        EXPECT_EQ(d.report->k, kTitles.size());
        EXPECT_EQ(d.report->catalog_size, kTitles.size());
        EXPECT_EQ(d.tactic, policy::decide(d.broadness, d.zero_mass_fallback, d.threshold));
        EXPECT_EQ(d.candidates.front().product_id, "p000");
    }
}

TEST(Route, ZeroMassFallbackDiscovers) {
    auto engine = text_engine(kTitles, std::make_shared<ConstantRescorer>(0.0));
    policy::QueryBundle bundle;
    bundle.focused = "red nail polish";
    auto d = policy::route(bundle, engine, config(Preset::pushy));
    EXPECT_TRUE(d.zero_mass_fallback);
    EXPECT_EQ(*d.broadness, 1.0);
    EXPECT_EQ(d.tactic, Tactic::discovery);
}

TEST(Route, EmptyCatalogExploresWithFlag) {
    auto engine = text_engine({});
    policy::QueryBundle bundle;
    bundle.focused = "anything";
    bundle.exploratory.push_back({policy::QueryMode::identification, "anything at all"});
    auto d = policy::route(bundle, engine, config(Preset::balanced));
    EXPECT_EQ(d.tactic, Tactic::exploration);
    EXPECT_TRUE(d.empty_candidates);
    EXPECT_TRUE(d.candidates.empty());
}

TEST(Route, CandidatesComeFromTheEngine) {
    auto engine = text_engine(kTitles);
    policy::QueryBundle bundle;
    bundle.focused = "lip";
    auto d = policy::route(bundle, engine, config(Preset::balanced, 3));
    auto direct = engine.identify("lip", 3);
    ASSERT_EQ(d.candidates.size(), direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        EXPECT_EQ(d.candidates[i], direct[i]);
    }
}

TEST(Route, RejectsMalformedBundle) {
    auto engine = text_engine(kTitles);
    policy::QueryBundle bundle;
    bundle.focused = "   ";
    EXPECT_THROW(policy::route(bundle, engine, config(Preset::balanced)), InvalidArgument);
}

TEST(Route, RaisingThresholdNeverRevokesRecommendation) {
    auto engine = text_engine(kTitles);
    for (const auto& q : {"red nail polish", "nail", "lip", "hiking", "cream"}) {
        policy::QueryBundle bundle;
        bundle.focused = q;
        bool recommended = false;
        for (int t = 0; t <= 20; ++t) {
            auto c = config(Preset::balanced);
            c.threshold_override = t / 20.0;
            const bool now = policy::route(bundle, engine, c).tactic == Tactic::recommendation;
            EXPECT_FALSE(recommended && !now) << q;
            recommended = now;
        }
    }
}

TEST(Engine, RecommendationModeUsesCartPartners) {
    auto engine = text_engine(kTitles);
    scoring::CoOccurrenceStats stats;
    stats.add_pair("p000", "p008", 40);  // red nail polish with wool socks
    engine.set_cooccurrence(stats);
    auto recs = engine.recommend("red nail polish", 3);
    ASSERT_FALSE(recs.empty());
    EXPECT_EQ(recs.front().product_id, "p008");
    for (const auto& c : recs) {
        EXPECT_NE(c.product_id, "p000");
        EXPECT_GE(c.score, 0.0);
        EXPECT_LE(c.score, 1.0);
    }
}

TEST(Engine, UpsertIsVisibleToIdentify) {
    auto engine = text_engine(kTitles);
    engine.upsert(synthetic::plain_product("new", "m", "bamboo toothbrush"));
    EXPECT_EQ(engine.identify("bamboo toothbrush", 1).front().product_id, "new");
}

TEST(RecallAt10, Basics) {
    std::vector<policy::Candidate> hits;
    for (int i = 0; i < 12; ++i) {
        hits.push_back({"p" + std::to_string(i), 1.0 - i * 0.01, 0.5});
    }
    EXPECT_EQ(policy::recall_at_10(hits, "p0"), 1);
    EXPECT_EQ(policy::recall_at_10(hits, "p9"), 1);
    EXPECT_EQ(policy::recall_at_10(hits, "p10"), 0);
    EXPECT_EQ(policy::recall_at_10(std::vector<policy::Candidate>{}, "p0"), 0);
}

// Calibration

TEST(Calibration, IdenticalHittingQueriesFillOneBin) {
    auto engine = text_engine(kTitles);
    std::vector<policy::LandingClick> log(5, {"red nail polish", "p000"});
    auto res = policy::calibrate(log, engine);
    std::size_t occupied = 0;
    for (const auto& b : res.bins) {
        if (b.count) {
            ++occupied;
            EXPECT_EQ(b.count, 5u);
            EXPECT_EQ(b.mean_recall, 1.0);
        }
    }
    EXPECT_EQ(occupied, 1u);
    EXPECT_TRUE(res.breakpoints.empty());
}

TEST(Calibration, SingleQuery) {
    auto engine = text_engine(kTitles);
    std::vector<policy::LandingClick> log{{"lip gloss", "p003"}};
    auto res = policy::calibrate(log, engine);
    EXPECT_EQ(res.bins.size(), 20u);
    EXPECT_EQ(res.total_count(), 1u);
    EXPECT_TRUE(res.breakpoints.empty());
}

TEST(Calibration, EmptyLogIsAnError) {
    auto engine = text_engine(kTitles);
    std::vector<policy::LandingClick> log;
    EXPECT_THROW(policy::calibrate(log, engine), InvalidArgument);
}

TEST(Calibration, BinsPartitionTheUnitInterval) {
    auto res = policy::calibrate_observations({{0.0, 1}, {0.05, 0}, {1.0, 1}, {0.9999, 0}});
    ASSERT_EQ(res.bins.size(), 20u);
    EXPECT_EQ(res.bins.front().lo, 0.0);
    EXPECT_EQ(res.bins.back().hi, 1.0);
    for (std::size_t i = 1; i < res.bins.size(); ++i) {
        EXPECT_DOUBLE_EQ(res.bins[i].lo, res.bins[i - 1].hi);
    }
    EXPECT_EQ(res.bins[0].count, 1u);
    EXPECT_EQ(res.bins[1].count, 1u);
    EXPECT_EQ(res.bins[19].count, 2u);
}

TEST(Calibration, StepFunctionBreakpoints) {
    std::vector<policy::Observation> obs;
    Rng rng(3);
    for (int i = 0; i < 4000; ++i) {
        const double b = uniform01(rng) * 0.9999;
        const double p = b < 0.3 ? 0.6 : (b < 0.8 ? 0.4 : 0.2);
        obs.push_back({b, uniform01(rng) < p ? 1 : 0});
    }
    auto res = policy::calibrate_observations(obs);
    ASSERT_EQ(res.breakpoints.size(), 2u);
    EXPECT_NEAR(res.breakpoints[0].boundary, 0.3, 0.05 + 1e-9);
    EXPECT_NEAR(res.breakpoints[1].boundary, 0.8, 0.05 + 1e-9);
}

TEST(Calibration, FlatRecallHasNoBreakpoints) {
    std::vector<policy::Observation> obs;
    Rng rng(4);
    for (int i = 0; i < 4000; ++i) {
        obs.push_back({uniform01(rng) * 0.9999, uniform01(rng) < 0.5 ? 1 : 0});
    }
    EXPECT_TRUE(policy::calibrate_observations(obs).breakpoints.empty());
}

TEST(Calibration, ConservationProperty) {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        std::vector<policy::Observation> obs;
        const std::size_t n = 1 + uniform_index(rng, 300);
        for (std::size_t i = 0; i < n; ++i) {
            obs.push_back({uniform01(rng), static_cast<int>(uniform_index(rng, 2))});
        }
        policy::CalibrationOptions opt;
        opt.bin_width = 0.02 + 0.1 * uniform01(rng);
        auto res = policy::calibrate_observations(obs, opt);
        EXPECT_EQ(res.total_count(), n);
        for (const auto& b : res.bins) {
            EXPECT_GE(b.mean_recall, 0.0);
            EXPECT_LE(b.mean_recall, 1.0);
        }
    }
}

TEST(Calibration, WritesDelimitedBins) {
    auto res = policy::calibrate_observations({{0.1, 1}});
    std::ostringstream out;
    policy::write_calibration(out, res);
    auto s = out.str();
    EXPECT_EQ(s.rfind("lo\thi\tcount\tmean_recall\n", 0), 0u);
    EXPECT_NE(s.find("0.1\t0.15\t1\t1\n"), std::string::npos);
    EXPECT_NE(s.find("# breakpoints\n"), std::string::npos);
}

TEST(Calibration, ReadsLandingLog) {
    std::istringstream in("nail polish\tp1\n# comment\nbad\n\tp2\n");
    std::vector<catalog::LineError> errors;
    auto log = policy::read_landing_clicks(in, &errors);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(errors.size(), 2u);
}

}  // namespace
