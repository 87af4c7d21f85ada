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

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "breadth/catalog.hpp"
#include "breadth/common.hpp"
#include "breadth/hnsw.hpp"
#include "breadth/scoring.hpp"

namespace breadth::policy {

enum class QueryMode { identification, recommendation };

inline std::string_view to_string(QueryMode m) {
    return m == QueryMode::identification ? "identification" : "recommendation";
}

inline QueryMode parse_query_mode(std::string_view s) {
    if (s == "identification") {
        return QueryMode::identification;
    }
    if (s == "recommendation") {
        return QueryMode::recommendation;
    }
    throw InvalidArgument("unknown query mode: " + std::string(s));
}

/// A retrieved product: raw cosine from the first stage, rescored relevance
/// from the second.
struct Candidate {
    std::string product_id;
    double similarity = 0.0;
    double score = 0.0;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Two-stage retrieval over one merchant: HNSW candidates, then rescoring.
///
/// Reads (`identify`, `recommend`) are const and may run concurrently;
/// `upsert` and the setters need exclusive access.
class RetrievalEngine {
public:
    RetrievalEngine(catalog::Catalog cat, ann::HnswIndex index, std::shared_ptr<const catalog::Embedder> embedder,
                    std::shared_ptr<const scoring::Rescorer> rescorer, scoring::CoOccurrenceStats cooc = {},
                    std::size_t ef_search = 100, double alpha = 0.5)
        : catalog_(std::move(cat)),
          index_(std::move(index)),
          embedder_(std::move(embedder)),
          rescorer_(std::move(rescorer)),
          cooc_(std::move(cooc)),
          ef_search_(ef_search),
          alpha_(alpha) {
        if (!embedder_ || !rescorer_) {
            throw InvalidArgument("engine needs an embedder and a rescorer");
        }
        if (!catalog_.empty() && catalog_.dim() != embedder_->dim()) {
            throw DimensionMismatch("catalog dimension differs from embedder dimension");
        }
    }

    /// Builds the HNSW index from the catalog's vectors.
    static RetrievalEngine build(catalog::Catalog cat, const ann::HnswParams& params,
                                 std::shared_ptr<const catalog::Embedder> embedder,
                                 std::shared_ptr<const scoring::Rescorer> rescorer,
                                 scoring::CoOccurrenceStats cooc = {}, double alpha = 0.5) {
        auto index = ann::HnswIndex::build(cat.vectors(), params);
        return RetrievalEngine(std::move(cat), std::move(index), std::move(embedder), std::move(rescorer),
                               std::move(cooc), params.ef_search, alpha);
    }

    const catalog::Catalog& catalog() const noexcept { return catalog_; }
    const ann::HnswIndex& index() const noexcept { return index_; }
    const catalog::Embedder& embedder() const noexcept { return *embedder_; }
    const scoring::Rescorer& rescorer() const noexcept { return *rescorer_; }
    std::shared_ptr<const scoring::Rescorer> rescorer_ptr() const noexcept { return rescorer_; }
    const scoring::CoOccurrenceStats& cooccurrence() const noexcept { return cooc_; }
    std::size_t ef_search() const noexcept { return ef_search_; }
    double alpha() const noexcept { return alpha_; }

    void set_rescorer(std::shared_ptr<const scoring::Rescorer> r) {
        if (!r) {
            throw InvalidArgument("null rescorer");
        }
        rescorer_ = std::move(r);
    }
    void set_cooccurrence(scoring::CoOccurrenceStats stats) { cooc_ = std::move(stats); }

    void upsert(catalog::Product p, std::optional<EmbeddingVector> supplied = std::nullopt) {
        catalog::upsert_product(catalog_, index_, std::move(p), *embedder_, std::move(supplied));
    }

    /// Identification mode: top-k products matching the text, similarity descending.
    std::vector<Candidate> identify(std::string_view text, std::size_t k) const {
        return identify(embedder_->embed(text), k);
    }

    std::vector<Candidate> identify(const EmbeddingVector& q, std::size_t k) const {
        std::vector<Candidate> out;
        for (auto& hit : index_.search(q, k, std::max(ef_search_, k))) {
            const double s = rescorer_->score(q, catalog_.embedding(hit.product_id));
            out.push_back({std::move(hit.product_id), hit.similarity, s});
        }
        return out;
    }

    /// Recommendation mode: complements of the best identification match.
    /// Pool = HNSW neighbors of the anchor plus its cart partners; each is
    /// scored with recommend_score (similarity relative to the anchor).
    std::vector<Candidate> recommend(std::string_view text, std::size_t k) const {
        auto anchor_hits = identify(text, 1);
        if (anchor_hits.empty()) {
            return {};
        }
        const auto& anchor = catalog_.product(anchor_hits.front().product_id);
        const auto& anchor_vec = catalog_.embedding(anchor.product_id);
        std::vector<std::string> pool;
        std::unordered_set<std::string> seen{anchor.product_id};
        for (auto& hit : index_.search(anchor_vec, k + 1, std::max(ef_search_, k + 1))) {
            if (seen.insert(hit.product_id).second) {
                pool.push_back(std::move(hit.product_id));
            }
        }
        for (const auto& [id, n] : cooc_.partners(anchor.product_id)) {
            if (index_.contains(id) && seen.insert(id).second) {
                pool.push_back(id);
            }
        }
        std::vector<Candidate> out;
        out.reserve(pool.size());
        for (const auto& id : pool) {
            const auto& vec = catalog_.embedding(id);
            const double sim = cosine(anchor_vec, vec);
            const double calibrated = std::clamp(rescorer_->score(anchor_vec, vec), 0.0, 1.0);
            out.push_back({id, sim,
                           scoring::recommend_score(cooc_, anchor, catalog_.product(id), calibrated, alpha_)});
        }
        std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
            return a.score != b.score ? a.score > b.score : a.product_id < b.product_id;
        });
        if (out.size() > k) {
            out.resize(k);
        }
        return out;
    }

    std::vector<Candidate> search(QueryMode mode, std::string_view text, std::size_t k) const {
        return mode == QueryMode::identification ? identify(text, k) : recommend(text, k);
    }

private:
    catalog::Catalog catalog_;
    ann::HnswIndex index_;
    std::shared_ptr<const catalog::Embedder> embedder_;
    std::shared_ptr<const scoring::Rescorer> rescorer_;
    scoring::CoOccurrenceStats cooc_;
    std::size_t ef_search_;
    double alpha_;
};

}  // namespace breadth::policy
