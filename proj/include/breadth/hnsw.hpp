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

/// \file hnsw.hpp
/// Hierarchical navigable small world graph over unit vectors, scored by
/// cosine similarity, with incremental insert, tombstone-based upsert and a
/// versioned little-endian snapshot format. `exact_knn` is the brute-force
/// reference used to measure recall.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "breadth/common.hpp"
#include "breadth/vector.hpp"

namespace breadth::ann {

struct HnswParams {
    std::size_t M = 16;                ///< max neighbors per node on layers > 0 (2M on layer 0)
    std::size_t ef_construction = 200;
    std::size_t ef_search = 100;
    double level_multiplier = 0.0;     ///< 0 selects 1/ln(M)
    std::uint64_t rng_seed = 42;
    bool diversity_heuristic = false;  ///< neighbor selection: false keeps the M closest

    double effective_level_multiplier() const {
        return level_multiplier > 0.0 ? level_multiplier : 1.0 / std::log(static_cast<double>(M));
    }

    void validate() const {
        if (M < 2) {
            throw InvalidArgument("HnswParams: M must be >= 2");
        }
        if (ef_construction < M) {
            throw InvalidArgument("HnswParams: ef_construction must be >= M");
        }
        if (ef_search < 1) {
            throw InvalidArgument("HnswParams: ef_search must be >= 1");
        }
        if (level_multiplier < 0.0 || !std::isfinite(level_multiplier)) {
            throw InvalidArgument("HnswParams: level_multiplier must be finite and >= 0");
        }
    }
};

struct SearchHit {
    std::string product_id;
    double similarity = 0.0;

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Ordered (id, vector) collection; the input shape of `build` and `exact_knn`.
using VectorSet = std::vector<std::pair<std::string, EmbeddingVector>>;

/// Similarity descending, then id ascending.
inline void sort_hits(std::vector<SearchHit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.similarity != b.similarity) {
            return a.similarity > b.similarity;
        }
        return a.product_id < b.product_id;
    });
}

/// Exhaustive cosine scan. Total order: similarity descending, id ascending.
inline std::vector<SearchHit> exact_knn(const VectorSet& vectors, const EmbeddingVector& query,
                                        std::size_t k) {
    std::vector<SearchHit> hits;
    hits.reserve(vectors.size());
    for (const auto& [id, vec] : vectors) {
        hits.push_back({id, cosine(vec, query)});
    }
    sort_hits(hits);
    if (hits.size() > k) {
        hits.resize(k);
    }
    return hits;
}

/// Fraction of `truth` ids present in `found` (recall@|truth|).
inline double recall(const std::vector<SearchHit>& found, const std::vector<SearchHit>& truth) {
    if (truth.empty()) {
        return 1.0;
    }
    std::size_t hit = 0;
    for (const auto& t : truth) {
        for (const auto& f : found) {
            if (f.product_id == t.product_id) {
                ++hit;
                break;
            }
        }
    }
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// Not internally synchronized: `search` is const and safe to run from many
/// threads as long as no writer (`insert`, `upsert`, `remove`) runs at the
/// same time.
class HnswIndex {
public:
    using NodeId = std::uint32_t;
    static constexpr std::string_view kMagic = "BRHNSW";
    static constexpr std::uint32_t kVersion = 1;

    explicit HnswIndex(HnswParams params = {}, std::size_t dim = 0)
        : params_(params), dim_(dim), rng_(params.rng_seed) {
        params_.validate();
    }

    static HnswIndex build(const VectorSet& vectors, HnswParams params = {}) {
        HnswIndex index(params, vectors.empty() ? 0 : vectors.front().second.dim());
        for (const auto& [id, vec] : vectors) {
            if (vec.dim() != index.dim_) {
                throw DimensionMismatch("build: vector '" + id + "' has dimension " +
                                        std::to_string(vec.dim()) + ", expected " +
                                        std::to_string(index.dim_));
            }
            index.insert(id, vec);
        }
        return index;
    }

    const HnswParams& params() const noexcept { return params_; }
    std::size_t dim() const noexcept { return dim_; }
    /// Live (non-tombstoned) nodes.
    std::size_t size() const noexcept { return live_.size(); }
    /// All graph nodes, tombstones included.
    std::size_t node_count() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return live_.empty(); }
    bool contains(const std::string& id) const { return live_.count(id) != 0; }

    std::optional<NodeId> entry_point() const noexcept { return entry_; }
    int max_level() const noexcept { return max_level_; }
    int level(NodeId n) const { return nodes_.at(n).level; }
    bool is_deleted(NodeId n) const { return nodes_.at(n).deleted; }
    const std::string& label(NodeId n) const { return nodes_.at(n).label; }
    const std::vector<NodeId>& neighbors(NodeId n, int level) const {
        return nodes_.at(n).links.at(static_cast<std::size_t>(level));
    }
    std::optional<NodeId> node_of(const std::string& id) const {
        auto it = live_.find(id);
        if (it == live_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    EmbeddingVector vector_of(NodeId n) const {
        auto v = vec(n);
        return EmbeddingVector::from_unit(std::vector<double>(v.begin(), v.end()));
    }

    /// Live (id, vector) pairs in insertion order.
    VectorSet live_vectors() const {
        VectorSet out;
        out.reserve(live_.size());
        for (NodeId n = 0; n < nodes_.size(); ++n) {
            if (!nodes_[n].deleted) {
                out.emplace_back(nodes_[n].label, vector_of(n));
            }
        }
        return out;
    }

    /// Inserts a new id. Throws DuplicateId if the id is live; use upsert to replace.
    void insert(const std::string& id, const EmbeddingVector& v) {
        if (live_.count(id)) {
            throw DuplicateId(id);
        }
        check_dim(id, v);
        add_node(id, v);
    }

    /// Tombstones any live node with this id, then inserts a fresh node.
    void upsert(const std::string& id, const EmbeddingVector& v) {
        check_dim(id, v);
        remove(id);
        add_node(id, v);
    }

    /// Tombstones the live node for `id`. Returns false if absent.
    bool remove(const std::string& id) {
        auto it = live_.find(id);
        if (it == live_.end()) {
            return false;
        }
        nodes_[it->second].deleted = true;
        live_.erase(it);
        return true;
    }

    /// Top-k live hits, similarity descending. `ef` of 0 uses params().ef_search;
    /// the beam is never narrower than k.
    std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k, std::size_t ef = 0) const {
        if (k == 0) {
            throw InvalidArgument("search: k must be >= 1");
        }
        if (!entry_ || live_.empty()) {
            return {};
        }
        if (query.dim() != dim_) {
            throw DimensionMismatch("search: query dimension " + std::to_string(query.dim()) +
                                    ", index dimension " + std::to_string(dim_));
        }
        const std::size_t beam = std::max(ef == 0 ? params_.ef_search : ef, k);
        auto q = query.values();
        std::vector<Scored> eps{{similarity(q, *entry_), *entry_}};
        for (int l = max_level_; l > 0; --l) {
            eps = search_layer(q, eps, 1, l, false);
        }
        auto found = search_layer(q, eps, beam, 0, true);
        std::vector<SearchHit> hits;
        hits.reserve(found.size());
        for (const auto& s : found) {
            hits.push_back({nodes_[s.node].label, clamp_sim(s.sim)});
        }
        sort_hits(hits);
        if (hits.size() > k) {
            hits.resize(k);
        }
        return hits;
    }

    void save(std::ostream& out) const {
        io::write_magic(out, kMagic, kVersion);
        io::write_u64(out, params_.M);
        io::write_u64(out, params_.ef_construction);
        io::write_u64(out, params_.ef_search);
        io::write_f64(out, params_.level_multiplier);
        io::write_u64(out, params_.rng_seed);
        io::write_u32(out, params_.diversity_heuristic ? 1 : 0);
        std::ostringstream rng_state;
        rng_state << rng_;
        io::write_string(out, rng_state.str());
        io::write_u64(out, dim_);
        io::write_u64(out, entry_ ? static_cast<std::uint64_t>(*entry_) : kNoEntry);
        io::write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(max_level_)));
        io::write_u64(out, nodes_.size());
        for (NodeId n = 0; n < nodes_.size(); ++n) {
            const auto& node = nodes_[n];
            io::write_string(out, node.label);
            io::write_u32(out, node.deleted ? 1 : 0);
            io::write_u32(out, static_cast<std::uint32_t>(node.level));
            for (double x : vec(n)) {
                io::write_f64(out, x);
            }
            for (const auto& links : node.links) {
                io::write_u32(out, static_cast<std::uint32_t>(links.size()));
                for (NodeId nb : links) {
                    io::write_u32(out, nb);
                }
            }
        }
    }

    static HnswIndex load(std::istream& in) {
        io::read_magic(in, kMagic, kVersion);
        HnswParams p;
        p.M = io::read_u64(in);
        p.ef_construction = io::read_u64(in);
        p.ef_search = io::read_u64(in);
        p.level_multiplier = io::read_f64(in);
        p.rng_seed = io::read_u64(in);
        p.diversity_heuristic = io::read_u32(in) != 0;
        HnswIndex index(p);
        std::istringstream rng_state(io::read_string(in, 1 << 20));
        rng_state >> index.rng_;
        if (!rng_state) {
            throw FormatError("index snapshot: corrupt rng state");
        }
        index.dim_ = io::read_u64(in);
        auto entry = io::read_u64(in);
        index.max_level_ = static_cast<int>(static_cast<std::int64_t>(io::read_u64(in)));
        auto count = io::read_u64(in);
        if (count > std::numeric_limits<NodeId>::max()) {
            throw FormatError("index snapshot: node count out of range");
        }
        index.nodes_.resize(count);
        index.data_.resize(count * index.dim_);
        for (NodeId n = 0; n < count; ++n) {
            auto& node = index.nodes_[n];
            node.label = io::read_string(in);
            node.deleted = io::read_u32(in) != 0;
            node.level = static_cast<int>(io::read_u32(in));
            for (std::size_t i = 0; i < index.dim_; ++i) {
                index.data_[n * index.dim_ + i] = io::read_f64(in);
            }
            node.links.resize(static_cast<std::size_t>(node.level) + 1);
            for (auto& links : node.links) {
                auto deg = io::read_u32(in);
                links.resize(deg);
                for (auto& nb : links) {
                    nb = io::read_u32(in);
                    if (nb >= count) {
                        throw FormatError("index snapshot: neighbor id out of range");
                    }
                }
            }
            if (!node.deleted) {
                index.live_[node.label] = n;
            }
        }
        if (entry != kNoEntry) {
            if (entry >= count) {
                throw FormatError("index snapshot: entry point out of range");
            }
            index.entry_ = static_cast<NodeId>(entry);
        }
        return index;
    }

private:
    static constexpr std::uint64_t kNoEntry = std::numeric_limits<std::uint64_t>::max();

    struct Node {
        std::string label;
        int level = 0;
        bool deleted = false;
        std::vector<std::vector<NodeId>> links;  // one list per layer 0..level
    };

    struct Scored {
        double sim;
        NodeId node;
    };

    // a ranks ahead of b: higher similarity, then lower node id.
    static bool better(const Scored& a, const Scored& b) noexcept {
        return a.sim > b.sim || (a.sim == b.sim && a.node < b.node);
    }
    struct WorseFirst {  // heap with the best element on top
        bool operator()(const Scored& a, const Scored& b) const noexcept { return better(b, a); }
    };
    struct BestFirst {  // heap with the worst element on top
        bool operator()(const Scored& a, const Scored& b) const noexcept { return better(a, b); }
    };

    static double clamp_sim(double s) noexcept { return s > 1.0 ? 1.0 : (s < -1.0 ? -1.0 : s); }

    std::span<const double> vec(NodeId n) const noexcept {
        return {data_.data() + static_cast<std::size_t>(n) * dim_, dim_};
    }
    double similarity(std::span<const double> q, NodeId n) const noexcept { return dot(q, vec(n)); }

    std::size_t max_degree(int level) const noexcept { return level == 0 ? 2 * params_.M : params_.M; }

    void check_dim(const std::string& id, const EmbeddingVector& v) {
        if (v.empty()) {
            throw InvalidArgument("insert: empty vector for '" + id + "'");
        }
        if (dim_ == 0) {
            dim_ = v.dim();
        }
        if (v.dim() != dim_) {
            throw DimensionMismatch("insert: vector '" + id + "' has dimension " +
                                    std::to_string(v.dim()) + ", expected " + std::to_string(dim_));
        }
    }

    int draw_level() {
        double u = 1.0 - uniform01(rng_);  // (0, 1]
        return static_cast<int>(std::floor(-std::log(u) * params_.effective_level_multiplier()));
    }

    // Beam search restricted to one layer. Returns up to `ef` nodes, best first.
    // With `live_only`, tombstoned nodes are traversed but never returned.
    std::vector<Scored> search_layer(std::span<const double> q, const std::vector<Scored>& entry_points,
                                     std::size_t ef, int level, bool live_only) const {
        std::vector<char> visited(nodes_.size(), 0);
        std::priority_queue<Scored, std::vector<Scored>, WorseFirst> candidates;
        std::priority_queue<Scored, std::vector<Scored>, BestFirst> results;
        for (const auto& ep : entry_points) {
            if (visited[ep.node]) {
                continue;
            }
            visited[ep.node] = 1;
            candidates.push(ep);
            if (!live_only || !nodes_[ep.node].deleted) {
                results.push(ep);
            }
        }
        while (results.size() > ef) {
            results.pop();
        }
        while (!candidates.empty()) {
            Scored c = candidates.top();
            if (results.size() >= ef && better(results.top(), c)) {
                break;
            }
            candidates.pop();
            const auto& node = nodes_[c.node];
            if (static_cast<std::size_t>(level) >= node.links.size()) {
                continue;
            }
            for (NodeId nb : node.links[static_cast<std::size_t>(level)]) {
                if (visited[nb]) {
                    continue;
                }
                visited[nb] = 1;
                Scored s{similarity(q, nb), nb};
                if (results.size() < ef || better(s, results.top())) {
                    candidates.push(s);
                    if (!live_only || !nodes_[nb].deleted) {
                        results.push(s);
                        if (results.size() > ef) {
                            results.pop();
                        }
                    }
                }
            }
        }
        std::vector<Scored> out;
        out.reserve(results.size());
        while (!results.empty()) {
            out.push_back(results.top());
            results.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    // `candidates` sorted best first, scored against the base vector.
    std::vector<NodeId> select_neighbors(const std::vector<Scored>& candidates, std::size_t m) const {
        std::vector<NodeId> out;
        if (!params_.diversity_heuristic) {
            for (std::size_t i = 0; i < candidates.size() && out.size() < m; ++i) {
                out.push_back(candidates[i].node);
            }
            return out;
        }
        for (const auto& c : candidates) {
            if (out.size() >= m) {
                break;
            }
            bool keep = true;
            for (NodeId r : out) {
                if (dot(vec(c.node), vec(r)) > c.sim) {
                    keep = false;
                    break;
                }
            }
            if (keep) {
                out.push_back(c.node);
            }
        }
        return out;
    }

    void connect_back(NodeId from, NodeId to, int level) {
        auto& links = nodes_[from].links[static_cast<std::size_t>(level)];
        links.push_back(to);
        const std::size_t cap = max_degree(level);
        if (links.size() <= cap) {
            return;
        }
        auto base = vec(from);
        std::vector<Scored> scored;
        scored.reserve(links.size());
        for (NodeId nb : links) {
            scored.push_back({dot(base, vec(nb)), nb});
        }
        std::sort(scored.begin(), scored.end(), better);
        links = select_neighbors(scored, cap);
    }

    void add_node(const std::string& id, const EmbeddingVector& v) {
        if (nodes_.size() >= std::numeric_limits<NodeId>::max()) {
            throw Error("index full");
        }
        const NodeId id_n = static_cast<NodeId>(nodes_.size());
        const int lvl = draw_level();
        Node node;
        node.label = id;
        node.level = lvl;
        node.links.resize(static_cast<std::size_t>(lvl) + 1);
        nodes_.push_back(std::move(node));
        data_.insert(data_.end(), v.values().begin(), v.values().end());
        live_[id] = id_n;

        if (!entry_) {
            entry_ = id_n;
            max_level_ = lvl;
            return;
        }
        auto q = vec(id_n);
        std::vector<Scored> eps{{similarity(q, *entry_), *entry_}};
        for (int l = max_level_; l > lvl; --l) {
            eps = search_layer(q, eps, 1, l, false);
        }
        for (int l = std::min(lvl, max_level_); l >= 0; --l) {
            auto found = search_layer(q, eps, params_.ef_construction, l, false);
            auto chosen = select_neighbors(found, params_.M);
            nodes_[id_n].links[static_cast<std::size_t>(l)] = chosen;
            for (NodeId nb : chosen) {
                connect_back(nb, id_n, l);
            }
            eps = std::move(found);
        }
        if (lvl > max_level_) {
            max_level_ = lvl;
            entry_ = id_n;
        }
    }

    HnswParams params_;
    std::size_t dim_ = 0;
    Rng rng_;
    std::vector<Node> nodes_;
    std::vector<double> data_;
    std::unordered_map<std::string, NodeId> live_;
    std::optional<NodeId> entry_;
    int max_level_ = -1;
};

}  // namespace breadth::ann
