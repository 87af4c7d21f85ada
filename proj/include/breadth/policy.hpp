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


#pragma once

/// \file policy.hpp
/// Entropy-driven routing of a dialogue turn and threshold calibration from
/// recall@10 measured per broadness bin.
///
/// Routing:
///   no focused query                 -> Exploration
///   focused query, B <  tau          -> Recommendation
///   focused query, B >= tau          -> Discovery
///   focused query, zero-mass scores  -> Discovery

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "breadth/broadness.hpp"
#include "breadth/common.hpp"
#include "breadth/engine.hpp"

namespace breadth::policy {

enum class Tactic { exploration, discovery, recommendation };

inline std::string_view to_string(Tactic t) {
    switch (t) {
        case Tactic::exploration:
            return "exploration";
        case Tactic::discovery:
            return "discovery";
        case Tactic::recommendation:
            return "recommendation";
    }
    return "unknown";
}

enum class Preset { educational, balanced, pushy };

inline std::string_view to_string(Preset p) {
    switch (p) {
        case Preset::educational:
            return "educational";
        case Preset::balanced:
            return "balanced";
        case Preset::pushy:
            return "pushy";
    }
    return "unknown";
}

inline Preset parse_preset(std::string_view s) {
    if (s == "educational") {
        return Preset::educational;
    }
    if (s == "balanced") {
        return Preset::balanced;
    }
    if (s == "pushy") {
        return Preset::pushy;
    }
    throw InvalidArgument("unknown preset: " + std::string(s));
}

/// Broadness threshold per aggressiveness preset. The two recall@10 plateau
/// boundaries (0.3, 0.8) bound educational and balanced; pushy recommends
/// whenever a focused query exists.
inline double preset_threshold(Preset p) {
    switch (p) {
        case Preset::educational:
            return 0.3;
        case Preset::balanced:
            return 0.8;
        case Preset::pushy:
            return 1.0;
    }
    throw InvalidArgument("unknown preset");
}

struct MerchantConfig {
    std::string merchant_id;
    Preset preset = Preset::balanced;
    std::optional<double> threshold_override;
    std::size_t k = 50;

    double threshold() const {
        const double tau = threshold_override ? *threshold_override : preset_threshold(preset);
        if (!(tau >= 0.0 && tau <= 1.0)) {
            throw InvalidArgument("threshold must lie in [0, 1]");
        }
        return tau;
    }

    void validate() const {
        (void)threshold();
        if (k == 0) {
            throw InvalidArgument("retrieval depth k must be >= 1");
        }
    }
};

struct ExploratoryQuery {
    QueryMode mode = QueryMode::identification;
    std::string text;

    friend bool operator==(const ExploratoryQuery&, const ExploratoryQuery&) = default;
};

struct QueryBundle {
    std::vector<ExploratoryQuery> exploratory;
    std::optional<std::string> focused;

    void validate() const {
        if (focused && text::trim(*focused).empty()) {
            throw InvalidArgument("focused query must be absent or non-empty");
        }
        for (const auto& q : exploratory) {
            if (text::trim(q.text).empty()) {
                throw InvalidArgument("exploratory query text is empty");
            }
        }
    }

    friend bool operator==(const QueryBundle&, const QueryBundle&) = default;
};

struct RouteDecision {
    Tactic tactic = Tactic::exploration;
    std::optional<double> broadness;  // present iff a focused search produced candidates
    double threshold = 0.0;
    std::vector<Candidate> candidates;
    bool zero_mass_fallback = false;
    bool empty_candidates = false;
    std::optional<entropy::BroadnessReport> report;
};

/// The branch table on its own: broadness of the focused query (absent when
/// there is none), the zero-mass flag, and the merchant threshold.
inline Tactic decide(std::optional<double> focused_broadness, bool zero_mass_fallback, double threshold) {
    if (!focused_broadness) {
        return Tactic::exploration;
    }
    if (zero_mass_fallback) {
        return Tactic::discovery;
    }
    return *focused_broadness < threshold ? Tactic::recommendation : Tactic::discovery;
}

/// Union of result lists: best similarity per id, similarity descending
/// (ties by id), truncated to k.
inline std::vector<Candidate> merge_candidates(std::vector<std::vector<Candidate>> lists, std::size_t k) {
    std::unordered_map<std::string, Candidate> best;
    for (auto& list : lists) {
        for (auto& c : list) {
            auto [it, inserted] = best.try_emplace(c.product_id, c);
            if (!inserted && c.similarity > it->second.similarity) {
                it->second = c;
            }
        }
    }
    std::vector<Candidate> out;
    out.reserve(best.size());
    for (auto& [id, c] : best) {
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.product_id < b.product_id;
    });
    if (out.size() > k) {
        out.resize(k);
    }
    return out;
}

/// Broadness of an identification result list against a catalog of size n.
inline entropy::BroadnessReport candidate_broadness(const std::vector<Candidate>& hits, std::size_t n) {
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(hits.size());
    for (const auto& h : hits) {
        scored.emplace_back(h.product_id, h.score);
    }
    return entropy::broadness(entropy::normalize_scores(std::move(scored)), n);
}

inline RouteDecision route(const QueryBundle& bundle, const RetrievalEngine& engine, const MerchantConfig& config) {
    bundle.validate();
    config.validate();
    RouteDecision d;
    d.threshold = config.threshold();
    if (bundle.focused) {
        auto hits = engine.identify(*bundle.focused, config.k);
        if (!hits.empty()) {
            auto report = candidate_broadness(hits, engine.index().size());
            d.broadness = report.broadness;
            d.zero_mass_fallback = report.zero_mass_fallback;
            d.report = report;
            d.tactic = decide(d.broadness, d.zero_mass_fallback, d.threshold);
            d.candidates = std::move(hits);
            return d;
        }
    }
    std::vector<std::vector<Candidate>> lists;
    for (const auto& q : bundle.exploratory) {
        lists.push_back(engine.search(q.mode, q.text, config.k));
    }
    d.tactic = Tactic::exploration;
    d.candidates = merge_candidates(std::move(lists), config.k);
    d.empty_candidates = d.candidates.empty();
    return d;
}

/// 1 iff `landing_product_id` is among the first 10 results.
template <typename Hit>
int recall_at_10(std::span<const Hit> results, std::string_view landing_product_id) {
    const std::size_t n = std::min<std::size_t>(10, results.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (results[i].product_id == landing_product_id) {
            return 1;
        }
    }
    return 0;
}

template <typename Hit>
int recall_at_10(const std::vector<Hit>& results, std::string_view landing_product_id) {
    return recall_at_10(std::span<const Hit>(results), landing_product_id);
}

// ---------------------------------------------------------------------------
// Threshold calibration

/// Landing-page click: query_text <TAB> landing_product_id.
struct LandingClick {
    std::string query_text;
    std::string landing_product_id;
};

inline std::vector<LandingClick> read_landing_clicks(std::istream& in,
                                                     std::vector<catalog::LineError>* errors = nullptr) {
    std::vector<LandingClick> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        auto f = text::split(t, '\t');
        if (f.size() != 2 || text::trim(f[0]).empty() || text::trim(f[1]).empty()) {
            if (errors) {
                errors->push_back({lineno, "expected query_text and landing_product_id"});
            }
            continue;
        }
        out.push_back({std::string(text::trim(f[0])), std::string(text::trim(f[1]))});
    }
    return out;
}

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;  // exclusive, except the last bin which includes 1
    double mean_recall = 0.0;
    std::size_t count = 0;
};

struct Breakpoint {
    double boundary = 0.0;
    double drop = 0.0;  // pooled recall left window minus right window
};

struct CalibrationOptions {
    double bin_width = 0.05;
    std::size_t window = 3;  // bins pooled on each side of a boundary
    double min_drop = 0.1;
    std::size_t k = 50;
};

struct Observation {
    double broadness = 0.0;
    int recall = 0;
};

struct CalibrationResult {
    std::vector<CalibrationBin> bins;
    std::vector<Breakpoint> breakpoints;
    std::vector<Observation> observations;

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& b : bins) {
            n += b.count;
        }
        return n;
    }

    /// Pooled recall of all observations with lo <= B < hi.
    double pooled_recall(double lo, double hi) const {
        std::size_t n = 0;
        std::size_t hits = 0;
        for (const auto& o : observations) {
            if (o.broadness >= lo && (o.broadness < hi || (hi >= 1.0 && o.broadness <= 1.0))) {
                ++n;
                hits += static_cast<std::size_t>(o.recall);
            }
        }
        return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    }
};

inline std::size_t bin_count(double width) {
    return static_cast<std::size_t>(std::ceil(1.0 / width - 1e-9));
}

inline std::size_t bin_of(double b, double width, std::size_t nbins) {
    auto i = static_cast<std::size_t>(std::floor(b / width + 1e-9));
    return std::min(i, nbins - 1);
}

/// Bins (broadness, recall) observations and finds recall drops.
///
/// For every interior boundary, recall is pooled over `window` bins on each
/// side; boundaries whose left-minus-right drop reaches `min_drop` are
/// candidates, and each run of consecutive candidates contributes the
/// boundary with the largest drop.
inline CalibrationResult calibrate_observations(std::vector<Observation> obs, const CalibrationOptions& opt = {}) {
    if (obs.empty()) {
        throw InvalidArgument("calibrate: empty click log");
    }
    if (!(opt.bin_width > 0.0 && opt.bin_width <= 1.0)) {
        throw InvalidArgument("calibrate: bin width must lie in (0, 1]");
    }
    if (opt.window == 0) {
        throw InvalidArgument("calibrate: window must be >= 1");
    }
    const std::size_t nb = bin_count(opt.bin_width);
    CalibrationResult res;
    std::vector<std::size_t> hits(nb, 0);
    res.bins.resize(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        res.bins[i].lo = static_cast<double>(i) * opt.bin_width;
        res.bins[i].hi = std::min(1.0, static_cast<double>(i + 1) * opt.bin_width);
    }
    for (const auto& o : obs) {
        if (!(o.broadness >= 0.0 && o.broadness <= 1.0)) {
            throw InvalidArgument("calibrate: broadness outside [0, 1]");
        }
        auto i = bin_of(o.broadness, opt.bin_width, nb);
        res.bins[i].count += 1;
        hits[i] += static_cast<std::size_t>(o.recall != 0);
    }
    for (std::size_t i = 0; i < nb; ++i) {
        if (res.bins[i].count) {
            res.bins[i].mean_recall = static_cast<double>(hits[i]) / static_cast<double>(res.bins[i].count);
        }
    }

    auto pooled = [&](std::size_t from, std::size_t to) -> std::optional<double> {  // bins [from, to)
        std::size_t n = 0;
        std::size_t h = 0;
        for (std::size_t i = from; i < to; ++i) {
            n += res.bins[i].count;
            h += hits[i];
        }
        if (n == 0) {
            return std::nullopt;
        }
        return static_cast<double>(h) / static_cast<double>(n);
    };

    std::vector<std::optional<double>> drops(nb, std::nullopt);  // drops[i]: boundary at start of bin i
    for (std::size_t i = 1; i < nb; ++i) {
        auto left = pooled(i >= opt.window ? i - opt.window : 0, i);
        auto right = pooled(i, std::min(nb, i + opt.window));
        if (left && right && *left - *right >= opt.min_drop) {
            drops[i] = *left - *right;
        }
    }
    for (std::size_t i = 1; i < nb;) {
        if (!drops[i]) {
            ++i;
            continue;
        }
        std::size_t best = i;
        std::size_t j = i;
        for (; j < nb && drops[j]; ++j) {
            if (*drops[j] > *drops[best]) {
                best = j;
            }
        }
        res.breakpoints.push_back({res.bins[best].lo, *drops[best]});
        i = j;
    }
    res.observations = std::move(obs);
    return res;
}

/// Runs every logged query through identification search, measures
/// (broadness, recall@10) and bins the results.
inline CalibrationResult calibrate(std::span<const LandingClick> log, const RetrievalEngine& engine,
                                   const CalibrationOptions& opt = {}) {
    if (log.empty()) {
        throw InvalidArgument("calibrate: empty click log");
    }
    std::vector<Observation> obs;
    obs.reserve(log.size());
    for (const auto& click : log) {
        auto hits = engine.identify(click.query_text, opt.k);
        if (hits.empty()) {
            throw InvalidArgument("calibrate: engine returned no candidates (empty catalog)");
        }
        obs.push_back({candidate_broadness(hits, engine.index().size()).broadness,
                       recall_at_10(hits, click.landing_product_id)});
    }
    return calibrate_observations(std::move(obs), opt);
}

inline void write_calibration(std::ostream& out, const CalibrationResult& res) {
    auto old = out.precision(6);
    out << "lo\thi\tcount\tmean_recall\n";
    for (const auto& b : res.bins) {
        out << b.lo << '\t' << b.hi << '\t' << b.count << '\t' << b.mean_recall << '\n';
    }
    out << "# breakpoints";
    for (const auto& bp : res.breakpoints) {
        out << '\t' << bp.boundary;
    }
    out << '\n';
    out.precision(old);
}

}  // namespace breadth::policy
