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


// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "breadth/breadth.hpp"
#include "breadth/service.hpp"
#include "breadth/synthetic.hpp"
#include "support.hpp"

namespace {

using namespace breadth;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double x, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << x;
    return s.str();
}

double b_of(std::span<const double> raw) { return entropy::broadness(entropy::normalize_scores(raw), raw.size()).broadness; }

// 1 ---------------------------------------------------------------------
Outcome broadness_correctness() {
    Outcome o;
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> kd(2, 200);
    std::uniform_real_distribution<double> sd(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> s(kd(rng));
        for (auto& x : s) {
            x = sd(rng);
        }
        worst = std::max(worst, std::abs(b_of(s) - oracle::hp_broadness(s)));
    }
    o.require(worst <= 1e-10, "max |B - oracle| = " + fmt(worst) + " > 1e-10");
    bool uniform_ok = true;
    bool onehot_ok = true;
    for (std::size_t k = 2; k <= 200; ++k) {
        std::vector<double> u(k, 0.25);
        uniform_ok = uniform_ok && b_of(u) == 1.0;
        std::vector<double> h(k, 0.0);
        h[k / 2] = 0.7;
        onehot_ok = onehot_ok && b_of(h) == 0.0;
    }
    o.require(uniform_ok, "uniform != 1.0");
    o.require(onehot_ok, "one-hot != 0.0");
    o.note("1000 vectors, max |B - oracle| = " + fmt(worst, 3));
    return o;
}

// 2 ---------------------------------------------------------------------
Outcome scale_permutation_invariance() {
    Outcome o;
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> kd(2, 200);
    std::uniform_real_distribution<double> sd(0.0, 1.0);
    double worst_scale = 0.0;
    double worst_perm = 0.0;
    for (int t = 0; t < 500; ++t) {
        std::vector<double> s(kd(rng));
        for (auto& x : s) {
            x = sd(rng);
        }
        const double b = b_of(s);
        for (double c : {1e-3, 1.0, 1e3}) {
            auto scaled = s;
            for (auto& x : scaled) {
                x *= c;
            }
            worst_scale = std::max(worst_scale, std::abs(b_of(scaled) - b));
        }
        for (int p = 0; p < 10; ++p) {
            std::shuffle(s.begin(), s.end(), rng);
            worst_perm = std::max(worst_perm, std::abs(b_of(s) - b));
        }
    }
    o.require(worst_scale <= 1e-12, "scale drift " + fmt(worst_scale));
    o.require(worst_perm <= 1e-12, "permutation drift " + fmt(worst_perm));
    o.note("max drift scale " + fmt(worst_scale, 3) + ", permutation " + fmt(worst_perm, 3));
    return o;
}

// 3 ---------------------------------------------------------------------
Outcome estimator_study() {
    Outcome o;
    const std::vector<std::size_t> ks{5, 10, 25, 50, 100, 2000};
    std::vector<double> mean(ks.size(), 0.0);
    const int catalogs = 20;
    for (int c = 0; c < catalogs; ++c) {
        auto fx = synthetic::long_tail_catalog({}, 100 + c);
        auto curve = entropy::estimator_error_curve(fx.catalog, fx.scorer, fx.queries, ks);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            mean[i] += curve[i].mean_error / catalogs;
            if (ks[i] == fx.catalog.size()) {
                o.require(curve[i].mean_error == 0.0, "k=N error not exactly 0");
            }
        }
    }
    for (std::size_t i = 0; i < 5; ++i) {
        o.require(mean[i] >= 0.0, "mean error at k=" + std::to_string(ks[i]) + " negative");
    }
    for (std::size_t i = 1; i < 4; ++i) {
        o.require(mean[i] < mean[i - 1], "error not decreasing at k=" + std::to_string(ks[i]));
    }
    o.require(std::abs(mean[3]) < 0.05, "|error at k=50| >= 0.05");
    o.require(mean[5] == 0.0, "mean error at k=N not exactly 0");

    const std::vector<double> raw{0.9, 0.05, 0.05};
    const double b2 = b_of(std::span<const double>(raw).first(2));
    const double b3 = b_of(raw);
    const double o2 = oracle::hp_broadness({0.9, 0.05});
    const double o3 = oracle::hp_broadness(raw);
    o.require(std::abs(b2 - o2) < 1e-12 && std::abs(b3 - o3) < 1e-12, "counterexample disagrees with oracle");
    o.require(b2 < b3, "counterexample B_2 < B_3 not reproduced");

    std::string curve = "mean error";
    for (std::size_t i = 0; i < ks.size(); ++i) {
        curve += " k=" + std::to_string(ks[i]) + ":" + fmt(mean[i], 3);
    }
    o.note(curve);
    o.note("B_2=" + fmt(b2) + " < B_3=" + fmt(b3));
    return o;
}

// 4 ---------------------------------------------------------------------
double mean_recall(const ann::HnswIndex& idx, const ann::VectorSet& data, const std::vector<EmbeddingVector>& qs) {
    double total = 0.0;
    for (const auto& q : qs) {
        total += ann::recall(idx.search(q, 10, 100), ann::exact_knn(data, q, 10));
    }
    return total / static_cast<double>(qs.size());
}

Outcome hnsw_quality() {
    Outcome o;
    ann::HnswParams params;  // M=16, ef_construction=200, ef_search=100
    params.rng_seed = 4;
    synthetic::LowRankGaussian gen(256, 16, 4);
    auto data = gen.sample_set(10000);
    std::vector<EmbeddingVector> queries;
    for (int i = 0; i < 100; ++i) {
        queries.push_back(gen.sample());
    }
    auto a = ann::HnswIndex::build(data, params);
    auto b = ann::HnswIndex::build(data, params);
    std::ostringstream sa, sb;
    a.save(sa);
    b.save(sb);
    const double r = mean_recall(a, data, queries);
    o.require(r >= 0.95, "recall@10 " + fmt(r) + " < 0.95");
    o.require(sa.str() == sb.str(), "two seeded builds differ");
    o.note("recall@10 = " + fmt(r) + " (10k x 256 unit vectors, intrinsic rank 16); builds byte-identical (" +
           std::to_string(sa.str().size()) + " bytes)");
    return o;
}

double isotropic_recall() {
    auto data = synthetic::gaussian_unit_vectors(10000, 256, 44);
    auto idx = ann::HnswIndex::build(data);
    Rng rng(45);
    std::vector<EmbeddingVector> qs;
    for (int i = 0; i < 100; ++i) {
        qs.push_back(synthetic::random_unit(rng, 256));
    }
    return mean_recall(idx, data, qs);
}

// 5 ---------------------------------------------------------------------
Outcome calibration_fitting() {
    Outcome o;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> cos(-1.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<scoring::LabeledSimilarity> data;
    for (int i = 0; i < 10000; ++i) {
        const double c = cos(rng);
        data.push_back({c, u(rng) < scoring::sigmoid(3.0 * c - 1.0) ? 1 : 0});
    }
    scoring::FitOptions opt;
    opt.record_trace = true;
    auto fit = scoring::fit_calibration(data, opt);
    const double a = fit.scorer.slope();
    const double b = fit.scorer.intercept();
    o.require(std::abs(a - 3.0) <= 0.2 && std::abs(b + 1.0) <= 0.2, "recovered (" + fmt(a) + ", " + fmt(b) + ")");

    std::uniform_real_distribution<double> p(-4.0, 4.0);
    double worst = 0.0;
    const double h = 1e-5;
    for (int t = 0; t < 10; ++t) {
        const double pa = p(rng);
        const double pb = p(rng);
        auto [ga, gb] = scoring::bce_gradient(data, pa, pb);
        const double na = (scoring::bce_loss(data, pa + h, pb) - scoring::bce_loss(data, pa - h, pb)) / (2 * h);
        const double nb = (scoring::bce_loss(data, pa, pb + h) - scoring::bce_loss(data, pa, pb - h)) / (2 * h);
        worst = std::max({worst, std::abs(ga - na) / std::max(std::abs(na), 1e-12),
                          std::abs(gb - nb) / std::max(std::abs(nb), 1e-12)});
    }
    o.require(worst < 1e-4, "gradient relative error " + fmt(worst));
    o.require(fit.final_loss <= fit.initial_loss, "loss increased");
    o.note("(a, b) = (" + fmt(a) + ", " + fmt(b) + "), max gradient rel. error " + fmt(worst, 3) + ", BCE " +
           fmt(fit.initial_loss) + " -> " + fmt(fit.final_loss));
    return o;
}

// 6 ---------------------------------------------------------------------
Outcome threshold_calibration() {
    Outcome o;
    synthetic::PlantedLogSpec spec;
    auto fx = synthetic::planted_landing_log(spec, 6);
    o.require(fx.log.size() == 5000, "log has " + std::to_string(fx.log.size()) + " queries");
    policy::CalibrationOptions opt;
    auto res = policy::calibrate(fx.log, *fx.engine, opt);
    const double w = opt.bin_width + 1e-9;
    std::vector<double> found;
    for (const auto& bp : res.breakpoints) {
        found.push_back(bp.boundary);
    }
    auto near = [&](double target) {
        return std::any_of(found.begin(), found.end(), [&](double x) { return std::abs(x - target) <= w; });
    };
    const bool spurious = std::any_of(found.begin(), found.end(), [&](double x) {
        return std::abs(x - 0.3) > w && std::abs(x - 0.8) > w;
    });
    o.require(near(0.3), "no breakpoint near 0.3");
    o.require(near(0.8), "no breakpoint near 0.8");
    o.require(!spurious, "spurious breakpoint");
    const double r1 = res.pooled_recall(0.0, 0.3);
    const double r2 = res.pooled_recall(0.3, 0.8);
    const double r3 = res.pooled_recall(0.8, 1.0);
    o.require(std::abs(r1 - 0.6) <= 0.05, "regime 1 recall " + fmt(r1));
    o.require(std::abs(r2 - 0.4) <= 0.05, "regime 2 recall " + fmt(r2));
    o.require(std::abs(r3 - 0.2) <= 0.05, "regime 3 recall " + fmt(r3));
    std::string bps = "breakpoints";
    for (double x : found) {
        bps += " " + fmt(x, 3);
    }
    o.note(bps);
    o.note("regime recall " + fmt(r1, 3) + " / " + fmt(r2, 3) + " / " + fmt(r3, 3));
    return o;
}

// 7 ---------------------------------------------------------------------
Outcome routing_table() {
    Outcome o;
    const double eps = 1e-9;
    std::size_t cells = 0;
    for (auto preset : {policy::Preset::educational, policy::Preset::balanced, policy::Preset::pushy}) {
        const double tau = policy::preset_threshold(preset);
        for (bool focused : {true, false}) {
            for (double b : {0.0, tau - eps, tau, tau + eps, 1.0}) {
                if (b < 0.0 || b > 1.0) {
                    continue;  // tau + eps lies outside [0, 1] for pushy
                }
                ++cells;
                const auto got = policy::decide(focused ? std::optional<double>(b) : std::nullopt, false, tau);
                const auto want = !focused ? policy::Tactic::exploration
                                           : (b < tau ? policy::Tactic::recommendation : policy::Tactic::discovery);
                o.require(got == want, "preset " + std::string(policy::to_string(preset)) + " B=" + fmt(b, 12) +
                                           (focused ? " focused" : " no focus"));
            }
        }
    }
    // monotonicity: a recommendation at tau stays one at every larger preset threshold
    for (double b : {0.0, 0.3 - eps, 0.3, 0.3 + eps, 0.8 - eps, 0.8, 0.8 + eps, 1.0 - eps, 1.0}) {
        bool recommended = false;
        for (double tau : {0.3, 0.8, 1.0}) {
            const bool now = policy::decide(b, false, tau) == policy::Tactic::recommendation;
            o.require(!(recommended && !now), "monotonicity at B=" + fmt(b, 12));
            recommended = now;
        }
    }
    // the same table through route() on a live engine
    auto embedder = std::make_shared<catalog::NGramEmbedder>();
    auto fx = synthetic::storefront(*embedder);
    auto engine = policy::RetrievalEngine::build(std::move(fx.catalog), {}, embedder,
                                                 std::make_shared<scoring::CalibratedScorer>(fx.scorer));
    for (const char* q : {"nail polish", "lip gloss coral", "face cream jade matte okapi 30ml"}) {
        for (auto preset : {policy::Preset::educational, policy::Preset::balanced, policy::Preset::pushy}) {
            policy::MerchantConfig c;
            c.preset = preset;
            policy::QueryBundle with;
            with.focused = q;
            with.exploratory.push_back({policy::QueryMode::identification, q});
            auto d = policy::route(with, engine, c);
            o.require(d.broadness && d.tactic == policy::decide(d.broadness, d.zero_mass_fallback, d.threshold),
                      std::string("route() disagrees with table for '") + q + "'");
            policy::QueryBundle without;
            without.exploratory = with.exploratory;
            o.require(policy::route(without, engine, c).tactic == policy::Tactic::exploration,
                      "route() without focus did not explore");
        }
    }
    o.note(std::to_string(cells) + " matrix cells plus route() cross-check");
    return o;
}

// 8 ---------------------------------------------------------------------
Outcome engagement() {
    Outcome o;
    auto embedder = std::make_shared<catalog::NGramEmbedder>();
    auto fx = synthetic::storefront(*embedder);
    o.require(fx.shoppers.size() == 100, "population size");
    bool all_focused = true;
    for (const auto& s : fx.shoppers) {
        std::vector<std::string> first{s.utterances.front()};
        all_focused = all_focused && harness::stub_query_generator(first).focused.has_value();
    }
    auto engine = policy::RetrievalEngine::build(std::move(fx.catalog), {}, embedder,
                                                 std::make_shared<scoring::CalibratedScorer>(fx.scorer));
    std::vector<policy::MerchantConfig> configs(3);
    configs[0].preset = policy::Preset::educational;
    configs[1].preset = policy::Preset::balanced;
    configs[2].preset = policy::Preset::pushy;
    auto rows = harness::compare_policies(fx.shoppers, engine, configs);
    o.require(rows[0].mean_rounds >= rows[1].mean_rounds, "educational < balanced");
    o.require(rows[1].mean_rounds >= rows[2].mean_rounds, "balanced < pushy");
    o.require(all_focused, "some first utterance has no focused query");
    o.require(rows[2].mean_rounds == 1.0, "pushy mean rounds " + fmt(rows[2].mean_rounds));
    o.note("mean rounds educational " + fmt(rows[0].mean_rounds, 3) + ", balanced " + fmt(rows[1].mean_rounds, 3) +
           ", pushy " + fmt(rows[2].mean_rounds, 3));
    return o;
}

// 9 ---------------------------------------------------------------------
Outcome service_integrity() {
    Outcome o;
    service::Service svc;
    auto embedder = catalog::NGramEmbedder();
    auto fx = synthetic::storefront(embedder);
    std::string body;
    for (const auto& p : fx.catalog.products()) {
        body += catalog::format_record(p) + "\n";
    }
    auto ing = svc.ingest_catalog("storefront", body);
    o.require(ing.status == 200, "ingest status " + std::to_string(ing.status));
    auto up = svc.upsert_product("storefront",
                                 R"({"product_id":"sku-new","title":"sun cream cobalt sheer tundra 50ml"})");
    o.require(up.status == 200, "upsert status " + std::to_string(up.status));
    auto q = service::json::parse(svc.query("storefront", R"({"focused":"sun cream cobalt sheer tundra 50ml"})").body);
    o.require(!q["candidates"].empty() && q["candidates"][0]["product_id"] == "sku-new", "read-your-write");

    std::vector<std::string> requests;
    const char* presets[] = {"educational", "balanced", "pushy"};
    for (int i = 0; i < 20; ++i) {
        const auto& s = fx.shoppers[static_cast<std::size_t>(i)];
        const auto& utt = s.utterances[static_cast<std::size_t>(i) % s.utterances.size()];
        service::json req{{"preset", presets[i % 3]}, {"exploratory", {utt}}};
        if (i % 5 != 4) {
            req["focused"] = utt;
        }
        requests.push_back(req.dump());
    }
    std::vector<std::string> before;
    for (const auto& r : requests) {
        before.push_back(svc.query("storefront", r).body);
    }
    auto path = oracle::scratch_path("acceptance-snapshot").string();
    svc.snapshot(path);
    service::Service restored;
    restored.restore(path);
    std::size_t identical = 0;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        identical += restored.query("storefront", requests[i]).body == before[i];
    }
    std::filesystem::remove(path);
    o.require(identical == requests.size(), "replay differs");
    o.note(std::to_string(identical) + "/20 decision records byte-identical after restore");
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "broadness correctness", 1.0, broadness_correctness},
        {2, "scale/permutation invariance", 0.0, scale_permutation_invariance},
        {3, "estimator study", 120.0, estimator_study},
        {4, "HNSW quality", 300.0, hnsw_quality},
        {5, "calibration fitting", 30.0, calibration_fitting},
        {6, "threshold calibration", 120.0, threshold_calibration},
        {7, "routing decision table", 0.0, routing_table},
        {8, "engagement ordering", 60.0, engagement},
        {9, "service integrity", 0.0, service_integrity},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0.0 && secs >= c.budget_s) {
            o.pass = false;
            o.detail += "; FAILED runtime budget " + fmt(c.budget_s) + " s";
        }
        failed += !o.pass;
        std::printf("%s [%d] %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
        std::fflush(stdout);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const double iso = isotropic_recall();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("INFO recall@10 on isotropic 10k x 256 unit vectors at ef_search=100: %.3f (%.2f s)\n", iso, secs);
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
