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

/// \file scoring.hpp
/// Second-stage rescoring: Platt-style sigmoid calibration of cosine
/// similarity fit by gradient descent on binary cross-entropy, negative
/// sampling for triplet export, and cart co-occurrence blending for
/// recommendation-mode retrieval.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "breadth/catalog.hpp"
#include "breadth/common.hpp"
#include "breadth/vector.hpp"

namespace breadth::scoring {

inline double sigmoid(double z) noexcept {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) noexcept {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// Relevance of a candidate for a query, consumed by the broadness computation.
class Rescorer {
public:
    virtual ~Rescorer() = default;
    virtual double score(const EmbeddingVector& query, const EmbeddingVector& candidate) const = 0;
};

/// s(q, p) = sigmoid(a * cos(q, p) + b), kept strictly inside (0, 1).
class CalibratedScorer final : public Rescorer {
public:
    CalibratedScorer() = default;
    CalibratedScorer(double slope, double intercept) : a_(slope), b_(intercept) {
        if (!std::isfinite(a_) || !std::isfinite(b_)) {
            throw InvalidArgument("calibration parameters must be finite");
        }
    }

    double slope() const noexcept { return a_; }
    double intercept() const noexcept { return b_; }

    double score_cosine(double cos) const noexcept {
        const double s = sigmoid(a_ * cos + b_);
        return std::clamp(s, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
    }

    double score(const EmbeddingVector& query, const EmbeddingVector& candidate) const override {
        return score_cosine(cosine(query, candidate));
    }

    friend bool operator==(const CalibratedScorer&, const CalibratedScorer&) = default;

private:
    double a_ = 1.0;
    double b_ = 0.0;
};

/// One (raw cosine, click label) training pair.
struct LabeledSimilarity {
    double cosine = 0.0;
    int label = 0;
};

inline double bce_loss(std::span<const LabeledSimilarity> data, double a, double b) {
    double total = 0.0;
    for (const auto& d : data) {
        const double z = a * d.cosine + b;
        total += softplus(z) - d.label * z;
    }
    return total / static_cast<double>(data.size());
}

/// Analytic gradient of the mean BCE with respect to (a, b).
inline std::pair<double, double> bce_gradient(std::span<const LabeledSimilarity> data, double a, double b) {
    double ga = 0.0;
    double gb = 0.0;
    for (const auto& d : data) {
        const double r = sigmoid(a * d.cosine + b) - d.label;
        ga += r * d.cosine;
        gb += r;
    }
    const double n = static_cast<double>(data.size());
    return {ga / n, gb / n};
}

struct FitOptions {
    double step = 0.1;
    int iterations = 2000;
    double init_slope = 1.0;
    double init_intercept = 0.0;
    bool record_trace = false;
};

struct CalibrationFit {
    CalibratedScorer scorer;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> loss_trace;  // loss before each step, then final; only with record_trace
};

/// Fixed-step gradient descent on mean BCE.
inline CalibrationFit fit_calibration(std::span<const LabeledSimilarity> data, const FitOptions& opt = {}) {
    bool pos = false;
    bool neg = false;
    for (const auto& d : data) {
        if (d.label != 0 && d.label != 1) {
            throw InvalidArgument("labels must be 0 or 1");
        }
        if (!std::isfinite(d.cosine)) {
            throw InvalidArgument("similarity must be finite");
        }
        pos = pos || d.label == 1;
        neg = neg || d.label == 0;
    }
    if (!pos || !neg) {
        throw InvalidArgument("degenerate labels");
    }
    double a = opt.init_slope;
    double b = opt.init_intercept;
    CalibrationFit fit;
    fit.initial_loss = bce_loss(data, a, b);
    if (opt.record_trace) {
        fit.loss_trace.reserve(static_cast<std::size_t>(opt.iterations) + 1);
        fit.loss_trace.push_back(fit.initial_loss);
    }
    for (int it = 0; it < opt.iterations; ++it) {
        auto [ga, gb] = bce_gradient(data, a, b);
        a -= opt.step * ga;
        b -= opt.step * gb;
        if (opt.record_trace) {
            fit.loss_trace.push_back(bce_loss(data, a, b));
        }
    }
    fit.final_loss = bce_loss(data, a, b);
    fit.scorer = CalibratedScorer(a, b);
    return fit;
}

// ---------------------------------------------------------------------------
// Click logs: query_text <TAB> product_id <TAB> label

struct ClickRecord {
    std::string query_text;
    std::string product_id;
    int label = 0;
};

inline std::vector<ClickRecord> read_click_records(std::istream& in, std::vector<catalog::LineError>* errors = nullptr) {
    std::vector<ClickRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        auto f = text::split(t, '\t');
        std::string problem;
        if (f.size() != 3) {
            problem = "expected 3 tab-separated fields";
        } else if (text::trim(f[0]).empty() || text::trim(f[1]).empty()) {
            problem = "empty query or product_id";
        } else if (text::trim(f[2]) != "0" && text::trim(f[2]) != "1") {
            problem = "label must be 0 or 1";
        }
        if (!problem.empty()) {
            if (errors) {
                errors->push_back({lineno, problem});
            }
            continue;
        }
        out.push_back({std::string(text::trim(f[0])), std::string(text::trim(f[1])), text::trim(f[2]) == "1" ? 1 : 0});
    }
    return out;
}

/// Raw cosine between each click's query embedding and its product. Clicks on
/// products missing from the catalog are skipped.
inline std::vector<LabeledSimilarity> to_similarities(std::span<const ClickRecord> clicks, const catalog::Catalog& cat,
                                                      const catalog::Embedder& embedder) {
    std::vector<LabeledSimilarity> out;
    out.reserve(clicks.size());
    for (const auto& c : clicks) {
        if (!cat.contains(c.product_id)) {
            continue;
        }
        out.push_back({cosine(embedder.embed(c.query_text), cat.embedding(c.product_id)), c.label});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Negative sampling

/// Products eligible as negatives for `positive`: everything from other
/// merchants plus same-merchant products in a different collection.
inline std::vector<const catalog::Product*> negative_pool(std::span<const catalog::Catalog> universe,
                                                          const std::string& merchant_id,
                                                          const catalog::Product& positive) {
    std::vector<const catalog::Product*> pool;
    for (const auto& cat : universe) {
        for (const auto& p : cat.products()) {
            const bool same_merchant = p.merchant_id == merchant_id;
            if (!same_merchant || p.collection != positive.collection) {
                pool.push_back(&p);
            }
        }
    }
    return pool;
}

/// `count` distinct products drawn uniformly without replacement from the
/// eligible pool (partial Fisher-Yates).
inline std::vector<catalog::Product> sample_negatives(std::span<const catalog::Catalog> universe,
                                                      const std::string& merchant_id,
                                                      const catalog::Product& positive, std::size_t count,
                                                      std::uint64_t seed) {
    auto pool = negative_pool(universe, merchant_id, positive);
    if (pool.size() < count) {
        throw InvalidArgument("insufficient negative pool: " + std::to_string(pool.size()) + " eligible, " +
                              std::to_string(count) + " requested");
    }
    Rng rng(seed);
    std::vector<catalog::Product> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto j = i + uniform_index(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
        out.push_back(*pool[i]);
    }
    return out;
}

struct TrainingTriplet {
    std::string query_text;
    std::string positive_id;
    std::string negative_id;
};

/// Pairs every positive click with `per_positive` sampled negatives. Clicks
/// whose product is unknown to `merchant_id`'s catalog are skipped.
inline std::vector<TrainingTriplet> make_triplets(std::span<const ClickRecord> clicks,
                                                  std::span<const catalog::Catalog> universe,
                                                  const std::string& merchant_id, std::size_t per_positive,
                                                  std::uint64_t seed) {
    const catalog::Catalog* own = nullptr;
    for (const auto& c : universe) {
        if (c.merchant_id() == merchant_id) {
            own = &c;
        }
    }
    if (!own) {
        throw NotFound("unknown merchant: " + merchant_id);
    }
    std::vector<TrainingTriplet> out;
    std::uint64_t draw = 0;
    for (const auto& click : clicks) {
        if (click.label != 1 || !own->contains(click.product_id)) {
            continue;
        }
        const auto& pos = own->product(click.product_id);
        for (const auto& neg : sample_negatives(universe, merchant_id, pos, per_positive, seed + draw++)) {
            out.push_back({click.query_text, pos.product_id, neg.product_id});
        }
    }
    return out;
}

inline void write_triplets(std::ostream& out, std::span<const TrainingTriplet> triplets) {
    for (const auto& t : triplets) {
        out << t.query_text << '\t' << t.positive_id << '\t' << t.negative_id << '\n';
    }
}

// ---------------------------------------------------------------------------
// Cart co-occurrence

/// Unordered pair counts and per-item counts. Every pair increment also
/// increments both items, so pair_count(a, b) <= min(item_count(a), item_count(b)).
class CoOccurrenceStats {
public:
    void add_pair(const std::string& a, const std::string& b, std::uint64_t count = 1) {
        if (a == b) {
            throw InvalidArgument("co-occurrence pair needs two distinct products: " + a);
        }
        pairs_[key(a, b)] += count;
        items_[a] += count;
        items_[b] += count;
    }

    /// One basket: each distinct item counted once, each distinct pair once.
    void add_cart(std::span<const std::string> items) {
        std::vector<std::string> uniq(items.begin(), items.end());
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (const auto& it : uniq) {
            items_[it] += 1;
        }
        for (std::size_t i = 0; i < uniq.size(); ++i) {
            for (std::size_t j = i + 1; j < uniq.size(); ++j) {
                pairs_[key(uniq[i], uniq[j])] += 1;
            }
        }
    }

    std::uint64_t pair_count(const std::string& a, const std::string& b) const {
        auto it = pairs_.find(key(a, b));
        return it == pairs_.end() ? 0 : it->second;
    }

    std::uint64_t item_count(const std::string& a) const {
        auto it = items_.find(a);
        return it == items_.end() ? 0 : it->second;
    }

    /// Products that co-occurred with `anchor`, most frequent first.
    std::vector<std::pair<std::string, std::uint64_t>> partners(const std::string& anchor) const {
        std::vector<std::pair<std::string, std::uint64_t>> out;
        for (const auto& [k, n] : pairs_) {
            if (k.first == anchor) {
                out.emplace_back(k.second, n);
            } else if (k.second == anchor) {
                out.emplace_back(k.first, n);
            }
        }
        std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
            return x.second != y.second ? x.second > y.second : x.first < y.first;
        });
        return out;
    }

    const std::map<std::pair<std::string, std::string>, std::uint64_t>& pairs() const noexcept { return pairs_; }
    const std::map<std::string, std::uint64_t>& items() const noexcept { return items_; }

    /// Restores raw counts (snapshot path); checks the pair/item invariant.
    static CoOccurrenceStats from_counts(std::map<std::pair<std::string, std::string>, std::uint64_t> pairs,
                                         std::map<std::string, std::uint64_t> items) {
        CoOccurrenceStats s;
        s.pairs_ = std::move(pairs);
        s.items_ = std::move(items);
        for (const auto& [k, n] : s.pairs_) {
            if (n > std::min(s.item_count(k.first), s.item_count(k.second))) {
                throw InvalidArgument("pair count exceeds item count for " + k.first + "/" + k.second);
            }
        }
        return s;
    }

private:
    static std::pair<std::string, std::string> key(const std::string& a, const std::string& b) {
        return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    }

    std::map<std::pair<std::string, std::string>, std::uint64_t> pairs_;
    std::map<std::string, std::uint64_t> items_;
};

/// Cart tuples file: product_id_a <TAB> product_id_b <TAB> count.
inline CoOccurrenceStats read_cart_tuples(std::istream& in, std::vector<catalog::LineError>* errors = nullptr) {
    CoOccurrenceStats stats;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        auto f = text::split(t, '\t');
        double count = 0;
        std::string problem;
        if (f.size() != 3) {
            problem = "expected 3 tab-separated fields";
        } else if (!text::parse_double(f[2], count) || count < 0 || count != std::floor(count)) {
            problem = "count must be a non-negative integer";
        } else if (text::trim(f[0]).empty() || text::trim(f[0]) == text::trim(f[1])) {
            problem = "pair needs two distinct non-empty product ids";
        }
        if (!problem.empty()) {
            if (errors) {
                errors->push_back({lineno, problem});
            }
            continue;
        }
        stats.add_pair(std::string(text::trim(f[0])), std::string(text::trim(f[1])),
                       static_cast<std::uint64_t>(count));
    }
    return stats;
}

/// alpha * calibrated_sim + (1 - alpha) * lift, with
/// lift = pair_count(anchor, candidate) / max(1, item_count(anchor)) clamped to [0, 1].
inline double recommend_score(const CoOccurrenceStats& stats, const catalog::Product& anchor,
                              const catalog::Product& candidate, double candidate_sim, double alpha = 0.5) {
    if (anchor.product_id == candidate.product_id) {
        throw InvalidArgument("self-recommendation");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw InvalidArgument("alpha must lie in [0, 1]");
    }
    if (!(candidate_sim >= 0.0 && candidate_sim <= 1.0)) {
        throw InvalidArgument("calibrated similarity must lie in [0, 1]");
    }
    const double pairs = static_cast<double>(stats.pair_count(anchor.product_id, candidate.product_id));
    const double base = std::max<double>(1.0, static_cast<double>(stats.item_count(anchor.product_id)));
    const double lift = std::clamp(pairs / base, 0.0, 1.0);
    return alpha * candidate_sim + (1.0 - alpha) * lift;
}

}  // namespace breadth::scoring
