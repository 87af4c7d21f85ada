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

/// \file broadness.hpp
/// Query broadness as the normalized entropy of the rescored candidate
/// distribution: P_i = s_i / sum_j s_j over the top-k candidates, and
/// B = -sum P_i ln P_i / ln k in [0, 1]. B near 0 means the relevance mass
/// sits on one product (precise intent); B near 1 means it is spread evenly
/// (vague intent).

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "breadth/catalog.hpp"
#include "breadth/common.hpp"
#include "breadth/scoring.hpp"

namespace breadth::entropy {

struct ScoreEntry {
    std::string product_id;  // empty when built from bare scores
    double raw = 0.0;
    double mass = 0.0;
};

struct ScoreDistribution {
    std::vector<ScoreEntry> entries;
    /// All raw scores were zero; masses were set uniform.
    bool zero_mass_fallback = false;

    std::size_t k() const noexcept { return entries.size(); }

    std::vector<double> masses() const {
        std::vector<double> m;
        m.reserve(entries.size());
        for (const auto& e : entries) {
            m.push_back(e.mass);
        }
        return m;
    }
};

struct BroadnessReport {
    double broadness = 0.0;
    std::size_t k = 0;
    std::size_t catalog_size = 0;
    bool zero_mass_fallback = false;
};

/// P_i = s_i / sum(s); uniform 1/k with the fallback flag when the sum is zero.
inline ScoreDistribution normalize_scores(std::vector<std::pair<std::string, double>> scored) {
    if (scored.empty()) {
        throw InvalidArgument("normalize_scores: empty score list");
    }
    double total = 0.0;
    for (const auto& [id, s] : scored) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw InvalidArgument("normalize_scores: scores must be finite and non-negative");
        }
        total += s;
    }
    ScoreDistribution dist;
    dist.entries.reserve(scored.size());
    const double k = static_cast<double>(scored.size());
    dist.zero_mass_fallback = !(total > 0.0);
    for (auto& [id, s] : scored) {
        const double mass = dist.zero_mass_fallback ? 1.0 / k : s / total;
        dist.entries.push_back({std::move(id), s, mass});
    }
    return dist;
}

inline ScoreDistribution normalize_scores(std::span<const double> raw) {
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(raw.size());
    for (double s : raw) {
        scored.emplace_back(std::string{}, s);
    }
    return normalize_scores(std::move(scored));
}

enum class LogBase { natural, binary };

/// -sum p log p / log k over a probability vector, with 0 log 0 = 0.
/// k = 1 gives 0; exactly equal masses give exactly 1. Clamped to [0, 1].
inline double normalized_entropy(std::span<const double> masses, LogBase base = LogBase::natural) {
    const std::size_t k = masses.size();
    if (k <= 1) {
        return 0.0;
    }
    if (std::all_of(masses.begin(), masses.end(), [&](double m) { return m == masses.front(); })) {
        return 1.0;
    }
    auto lg = [base](double x) { return base == LogBase::natural ? std::log(x) : std::log2(x); };
    double h = 0.0;
    for (double p : masses) {
        if (p > 0.0) {
            h -= p * lg(p);
        }
    }
    return std::clamp(h / lg(static_cast<double>(k)), 0.0, 1.0);
}

/// Normalized entropy of `dist` for a catalog of `catalog_size` products.
inline BroadnessReport broadness(const ScoreDistribution& dist, std::size_t catalog_size) {
    if (dist.k() == 0) {
        throw InvalidArgument("broadness: empty distribution");
    }
    if (catalog_size < dist.k()) {
        throw InvalidArgument("broadness: catalog size " + std::to_string(catalog_size) + " is smaller than k = " +
                              std::to_string(dist.k()));
    }
    const auto masses = dist.masses();
    return {normalized_entropy(masses), dist.k(), catalog_size, dist.zero_mass_fallback};
}

/// Every catalog product scored against the query, best first (ties by id).
inline std::vector<std::pair<std::string, double>> rank_catalog(const catalog::Catalog& cat,
                                                                const scoring::Rescorer& rescorer,
                                                                const EmbeddingVector& query) {
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(cat.size());
    for (std::size_t i = 0; i < cat.size(); ++i) {
        scored.emplace_back(cat.products()[i].product_id, rescorer.score(query, cat.embeddings()[i]));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return scored;
}

/// Broadness over the best `k` entries of a ranking produced by rank_catalog.
inline BroadnessReport prefix_broadness(const std::vector<std::pair<std::string, double>>& ranked, std::size_t k) {
    std::vector<std::pair<std::string, double>> top(ranked.begin(),
                                                    ranked.begin() + static_cast<std::ptrdiff_t>(k));
    return broadness(normalize_scores(std::move(top)), ranked.size());
}

/// B with k = N: exhaustive scoring of the whole catalog, no ANN.
inline BroadnessReport full_catalog_broadness(const catalog::Catalog& cat, const scoring::Rescorer& rescorer,
                                              const EmbeddingVector& query) {
    if (cat.empty()) {
        throw InvalidArgument("full_catalog_broadness: empty catalog");
    }
    auto ranked = rank_catalog(cat, rescorer, query);
    return prefix_broadness(ranked, ranked.size());
}

struct ErrorPoint {
    std::size_t k = 0;
    double mean_error = 0.0;  // mean over queries of B_k - B_N
};

/// Mean signed error of the top-k estimate against the full-catalog value,
/// one row per requested k. Both sides come from the same exact ranking, so
/// the k = N row is exactly zero.
inline std::vector<ErrorPoint> estimator_error_curve(const catalog::Catalog& cat, const scoring::Rescorer& rescorer,
                                                     std::span<const EmbeddingVector> queries,
                                                     std::span<const std::size_t> ks) {
    if (queries.empty()) {
        throw InvalidArgument("estimator_error_curve: no queries");
    }
    for (auto k : ks) {
        if (k == 0 || k > cat.size()) {
            throw InvalidArgument("estimator_error_curve: k = " + std::to_string(k) + " outside [1, N = " +
                                  std::to_string(cat.size()) + "]");
        }
    }
    std::vector<double> sums(ks.size(), 0.0);
    for (const auto& q : queries) {
        auto ranked = rank_catalog(cat, rescorer, q);
        const double full = prefix_broadness(ranked, ranked.size()).broadness;
        for (std::size_t i = 0; i < ks.size(); ++i) {
            sums[i] += prefix_broadness(ranked, ks[i]).broadness - full;
        }
    }
    std::vector<ErrorPoint> out;
    out.reserve(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        out.push_back({ks[i], sums[i] / static_cast<double>(queries.size())});
    }
    return out;
}

/// Two tab-separated columns with a header row.
inline void write_error_curve(std::ostream& out, std::span<const ErrorPoint> curve) {
    out << "k\tmean_error\n";
    auto old = out.precision(12);
    for (const auto& p : curve) {
        out << p.k << '\t' << p.mean_error << '\n';
    }
    out.precision(old);
}

}  // namespace breadth::entropy
