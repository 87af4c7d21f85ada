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

/// \file synthetic.hpp
/// Deterministic synthetic fixtures: random and clustered unit vectors,
/// long-tail catalogs for the top-k estimator study, a planted
/// three-regime landing log for threshold calibration, and a broad-intent
/// storefront with scripted shoppers.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "breadth/catalog.hpp"
#include "breadth/common.hpp"
#include "breadth/engine.hpp"
#include "breadth/harness.hpp"
#include "breadth/policy.hpp"
#include "breadth/scoring.hpp"
#include "breadth/vector.hpp"

namespace breadth::synthetic {

inline std::vector<double> gaussian_values(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) {
        x = gaussian(rng);
    }
    return v;
}

/// Uniform direction on the unit sphere.
inline EmbeddingVector random_unit(Rng& rng, std::size_t dim) {
    return EmbeddingVector::normalized(gaussian_values(rng, dim));
}

/// normalize(a * x + b * y)
inline EmbeddingVector mix(double a, const EmbeddingVector& x, double b, const EmbeddingVector& y) {
    std::vector<double> v(x.dim());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = a * x[i] + b * y[i];
    }
    return EmbeddingVector::normalized(std::move(v));
}

/// A unit vector with cosine exactly `c` to the unit vector `axis`.
inline EmbeddingVector at_cosine(Rng& rng, const EmbeddingVector& axis, double c) {
    auto u = gaussian_values(rng, axis.dim());
    const double proj = dot(u, axis.values());
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] -= proj * axis[i];
    }
    auto ortho = EmbeddingVector::normalized(std::move(u));
    return mix(c, axis, std::sqrt(std::max(0.0, 1.0 - c * c)), ortho);
}

inline std::string numbered(std::string_view prefix, std::size_t i, int width = 5) {
    std::string n = std::to_string(i);
    if (n.size() < static_cast<std::size_t>(width)) {
        n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
    }
    return std::string(prefix) + n;
}

/// n isotropic Gaussian directions, ids "v00000".. in order.
inline ann::VectorSet gaussian_unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    ann::VectorSet out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.emplace_back(numbered("v", i), random_unit(rng, dim));
    }
    return out;
}

/// Normalized Gaussian mixture: each sample is normalize(center + spread * g)
/// with g a uniform direction and centers uniform on the sphere.
class GaussianMixture {
public:
    GaussianMixture(std::size_t dim, std::size_t clusters, double spread, std::uint64_t seed)
        : spread_(spread), rng_(seed) {
        for (std::size_t i = 0; i < clusters; ++i) {
            centers_.push_back(random_unit(rng_, dim));
        }
    }

    EmbeddingVector sample() {
        const auto& c = centers_[uniform_index(rng_, centers_.size())];
        return mix(1.0, c, spread_, random_unit(rng_, c.dim()));
    }

    ann::VectorSet sample_set(std::size_t n, std::string_view prefix = "v") {
        ann::VectorSet out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.emplace_back(numbered(prefix, i), sample());
        }
        return out;
    }

private:
    double spread_;
    Rng rng_;
    std::vector<EmbeddingVector> centers_;
};

/// Unit vectors with low intrinsic dimension: normalize(A z) for a fixed
/// Gaussian `dim x latent` matrix A and z ~ N(0, I_latent).
class LowRankGaussian {
public:
    LowRankGaussian(std::size_t dim, std::size_t latent, std::uint64_t seed) : dim_(dim), latent_(latent), rng_(seed) {
        if (latent == 0 || latent > dim) {
            throw InvalidArgument("latent dimension must be in [1, dim]");
        }
        basis_ = gaussian_values(rng_, dim * latent);
    }

    EmbeddingVector sample() {
        const auto z = gaussian_values(rng_, latent_);
        std::vector<double> v(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i) {
            const double* row = basis_.data() + i * latent_;
            for (std::size_t j = 0; j < latent_; ++j) {
                v[i] += row[j] * z[j];
            }
        }
        return EmbeddingVector::normalized(std::move(v));
    }

    ann::VectorSet sample_set(std::size_t n, std::string_view prefix = "v") {
        ann::VectorSet out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            out.emplace_back(numbered(prefix, i), sample());
        }
        return out;
    }

private:
    std::size_t dim_;
    std::size_t latent_;
    Rng rng_;
    std::vector<double> basis_;
};

/// Maps known strings to fixed vectors; anything else goes to a fallback
/// embedder. Lets vector-level fixtures drive text-level entry points.
class TableEmbedder final : public catalog::Embedder {
public:
    TableEmbedder(std::shared_ptr<const catalog::Embedder> fallback) : fallback_(std::move(fallback)) {}

    void set(std::string key, EmbeddingVector v) {
        if (v.dim() != fallback_->dim()) {
            throw DimensionMismatch("table embedder: dimension mismatch for '" + key + "'");
        }
        table_.insert_or_assign(std::move(key), std::move(v));
    }

    std::size_t dim() const override { return fallback_->dim(); }

    EmbeddingVector embed(std::string_view text) const override {
        auto it = table_.find(std::string(text::trim(text)));
        return it != table_.end() ? it->second : fallback_->embed(text);
    }

private:
    std::shared_ptr<const catalog::Embedder> fallback_;
    std::unordered_map<std::string, EmbeddingVector> table_;
};

inline catalog::Product plain_product(std::string id, std::string merchant, std::string title,
                                      std::string collection = {}) {
    catalog::Product p;
    p.product_id = std::move(id);
    p.merchant_id = std::move(merchant);
    p.title = std::move(title);
    p.collection = std::move(collection);
    return p;
}

// ---------------------------------------------------------------------------
// Long-tail catalogs for the top-k estimator study

struct LongTailSpec {
    std::size_t catalog_size = 2000;
    std::size_t dim = 48;
    std::size_t clusters = 50;
    std::size_t per_cluster = 8;    // products forming each dominant cluster
    double cluster_cos_lo = 0.6;    // cosine of cluster members to their center
    double cluster_cos_hi = 0.9;
    double query_noise = 0.1;       // queries = normalize(center + noise * g)
    std::size_t queries = 50;
    double slope = 8.0;             // calibrated scorer
    double intercept = -5.0;
};

struct LongTailFixture {
    catalog::Catalog catalog;
    std::vector<EmbeddingVector> queries;
    scoring::CalibratedScorer scorer;
};

/// Cluster members sit close to one of `clusters` centers, the remainder is
/// uniform on the sphere. Each query targets one center, so its relevance
/// mass concentrates on a handful of products above a long low-score tail.
inline LongTailFixture long_tail_catalog(const LongTailSpec& spec, std::uint64_t seed) {
    if (spec.clusters * spec.per_cluster > spec.catalog_size) {
        throw InvalidArgument("long_tail_catalog: clusters do not fit in the catalog");
    }
    Rng rng(seed);
    std::vector<EmbeddingVector> centers;
    for (std::size_t i = 0; i < spec.clusters; ++i) {
        centers.push_back(random_unit(rng, spec.dim));
    }
    LongTailFixture fx{catalog::Catalog("longtail-" + std::to_string(seed), spec.dim), {},
                       scoring::CalibratedScorer(spec.slope, spec.intercept)};
    std::size_t id = 0;
    for (const auto& c : centers) {
        for (std::size_t j = 0; j < spec.per_cluster; ++j) {
            double cos = spec.cluster_cos_lo + (spec.cluster_cos_hi - spec.cluster_cos_lo) * uniform01(rng);
            fx.catalog.add(plain_product(numbered("p", id), fx.catalog.merchant_id(), "item " + std::to_string(id)),
                           at_cosine(rng, c, cos));
            ++id;
        }
    }
    while (id < spec.catalog_size) {
        fx.catalog.add(plain_product(numbered("p", id), fx.catalog.merchant_id(), "item " + std::to_string(id)),
                       random_unit(rng, spec.dim));
        ++id;
    }
    for (std::size_t q = 0; q < spec.queries; ++q) {
        const auto& c = centers[uniform_index(rng, centers.size())];
        fx.queries.push_back(mix(1.0, c, spec.query_noise, random_unit(rng, spec.dim)));
    }
    return fx;
}

// ---------------------------------------------------------------------------
// Planted three-regime landing log

struct PlantedLogSpec {
    std::size_t catalog_size = 2000;
    std::size_t dim = 64;
    std::size_t blob_size = 200;        // near-duplicates that make flat top-k lists
    double blob_noise = 0.05;
    double slope = 25.0;
    double intercept = -15.0;
    std::size_t queries = 5000;
    double bin_width = 0.05;
    std::size_t k = 50;
    std::vector<double> regime_edges{0.3, 0.8};
    std::vector<double> regime_recall{0.6, 0.4, 0.2};
    std::size_t max_attempts = 400000;
};

struct PlantedLogFixture {
    std::shared_ptr<TableEmbedder> embedder;
    std::shared_ptr<const policy::RetrievalEngine> engine;
    std::vector<policy::LandingClick> log;
    std::vector<double> broadness;  // per log entry, as measured when planting
};

/// Builds an engine plus a landing log whose recall@10 depends on the query's
/// broadness only through the planted regime. Queries are drawn to cover the
/// broadness bins evenly (queries / bins per bin); each query's landing
/// product is its top hit with the regime's probability and a product
/// outside the top 10 otherwise.
inline PlantedLogFixture planted_landing_log(const PlantedLogSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    auto fallback = std::make_shared<catalog::NGramEmbedder>(spec.dim);
    auto table = std::make_shared<TableEmbedder>(fallback);

    catalog::Catalog cat("planted", spec.dim);
    const auto blob_center = random_unit(rng, spec.dim);
    for (std::size_t i = 0; i < spec.catalog_size; ++i) {
        auto v = i < spec.blob_size ? mix(1.0, blob_center, spec.blob_noise, random_unit(rng, spec.dim))
                                    : random_unit(rng, spec.dim);
        cat.add(plain_product(numbered("p", i), "planted", "item " + std::to_string(i)), std::move(v));
    }
    ann::HnswParams params;
    params.rng_seed = seed;
    auto scorer = std::make_shared<scoring::CalibratedScorer>(spec.slope, spec.intercept);
    auto engine = std::make_shared<policy::RetrievalEngine>(
        policy::RetrievalEngine::build(std::move(cat), params, table, scorer));

    const std::size_t nbins = policy::bin_count(spec.bin_width);
    const std::size_t quota = (spec.queries + nbins - 1) / nbins;
    std::vector<std::size_t> filled(nbins, 0);
    const auto& products = engine->catalog().products();

    PlantedLogFixture fx{table, engine, {}, {}};
    for (std::size_t attempt = 0; attempt < spec.max_attempts && fx.log.size() < spec.queries; ++attempt) {
        const auto& anchor = engine->catalog().embeddings()[uniform_index(rng, products.size())];
        const double t = uniform01(rng);
        auto q = mix(t, anchor, 1.0 - t, random_unit(rng, spec.dim));
        auto hits = engine->identify(q, spec.k);
        const double b = policy::candidate_broadness(hits, engine->index().size()).broadness;
        const auto bin = policy::bin_of(b, spec.bin_width, nbins);
        if (filled[bin] >= quota) {
            continue;
        }
        ++filled[bin];
        std::size_t regime = 0;
        while (regime < spec.regime_edges.size() &&
               bin >= policy::bin_of(spec.regime_edges[regime], spec.bin_width, nbins)) {
            ++regime;
        }
        std::string landing;
        if (uniform01(rng) < spec.regime_recall[regime]) {
            landing = hits.front().product_id;
        } else {
            std::unordered_set<std::string> top;
            for (std::size_t i = 0; i < std::min<std::size_t>(10, hits.size()); ++i) {
                top.insert(hits[i].product_id);
            }
            do {
                landing = products[uniform_index(rng, products.size())].product_id;
            } while (top.count(landing));
        }
        auto key = numbered("query-", fx.log.size(), 6);
        table->set(key, q);
        fx.log.push_back({key, landing});
        fx.broadness.push_back(b);
    }
    return fx;
}

// ---------------------------------------------------------------------------
// Broad-intent storefront with scripted shoppers

struct StorefrontSpec {
    std::size_t shoppers = 100;
    std::size_t patience = 6;
    std::uint64_t seed = 7;
    // Calibration steep enough that a full product title concentrates the
    // n-gram embedder's top-50 mass on a few near-identical SKUs.
    double slope = 60.0;
    double intercept = -50.0;
};

struct StorefrontFixture {
    catalog::Catalog catalog;
    std::vector<harness::ScriptedShopper> shoppers;
    scoring::CalibratedScorer scorer;
};

/// Products are titled "<category> <color> <finish> <brand> <size>" across a
/// few categories, so a bare category name matches dozens of near-duplicates.
/// Every shopper's script is a growing keyword prefix of their target's title.
inline StorefrontFixture storefront(const catalog::Embedder& embedder, const StorefrontSpec& spec = {}) {
    static const std::vector<std::string> categories{"nail polish", "lip gloss", "hair serum", "face cream",
                                                     "eye liner"};
    static const std::vector<std::string> colors{"ruby", "coral", "violet", "amber", "jade"};
    static const std::vector<std::string> finishes{"matte", "glossy", "shimmer"};
    static const std::vector<std::string> brands{"lumiere", "nordvik", "okapi", "saffron"};
    static const std::vector<std::string> sizes{"10ml", "30ml"};

    StorefrontFixture fx{catalog::Catalog("storefront", embedder.dim()), {},
                         scoring::CalibratedScorer(spec.slope, spec.intercept)};
    std::size_t n = 0;
    for (const auto& cat : categories) {
        for (const auto& color : colors) {
            for (const auto& finish : finishes) {
                for (const auto& brand : brands) {
                    for (const auto& size : sizes) {
                        catalog::Product p = plain_product(numbered("sku-", n++, 4), "storefront",
                                                           cat + " " + color + " " + finish + " " + brand + " " + size,
                                                           cat);
                        p.price = 5.0 + static_cast<double>(n % 40);
                        auto e = embedder.embed(p.descriptor());
                        fx.catalog.add(std::move(p), std::move(e));
                    }
                }
            }
        }
    }
    Rng rng(spec.seed);
    const auto& products = fx.catalog.products();
    for (std::size_t i = 0; i < spec.shoppers; ++i) {
        const auto& target = products[uniform_index(rng, products.size())];
        auto words = text::split(target.title, ' ');
        harness::ScriptedShopper s;
        s.target_id = target.product_id;
        s.patience = spec.patience;
        // category (two words), then one more attribute per turn
        for (std::size_t len = 2; len <= words.size(); ++len) {
            std::string u;
            for (std::size_t w = 0; w < len; ++w) {
                u += (w ? " " : "") + std::string(words[w]);
            }
            s.utterances.push_back(std::move(u));
        }
        fx.shoppers.push_back(std::move(s));
    }
    return fx;
}

}  // namespace breadth::synthetic
