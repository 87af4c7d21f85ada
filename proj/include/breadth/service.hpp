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

/// \file service.hpp
/// Multi-tenant engine state behind JSON request handlers. Each merchant owns
/// a catalog, its HNSW index, a calibrated scorer, cart statistics and a
/// routing configuration. Handlers return a status code and a JSON body; the
/// HTTP binding lives in http.hpp.
///
/// Locking: a shared mutex guards the merchant map; every merchant has its
/// own shared mutex (queries shared, writes exclusive), so tenants never
/// contend with each other.

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "breadth/catalog.hpp"
#include "breadth/common.hpp"
#include "breadth/engine.hpp"
#include "breadth/hnsw.hpp"
#include "breadth/policy.hpp"
#include "breadth/scoring.hpp"

namespace breadth::service {

using json = nlohmann::json;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    policy::Preset default_preset = policy::Preset::balanced;
    std::size_t dim = catalog::NGramEmbedder::kDefaultDim;
    std::size_t k = 50;
    ann::HnswParams hnsw;
    double slope = 60.0;  // default calibration, tuned for the n-gram embedder
    double intercept = -50.0;
    double alpha = 0.5;

    static ServiceConfig from_json(const json& j) {
        ServiceConfig c;
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        if (j.contains("default_preset")) {
            c.default_preset = policy::parse_preset(j.at("default_preset").get<std::string>());
        }
        c.dim = j.value("dim", c.dim);
        c.k = j.value("k", c.k);
        c.hnsw.ef_search = j.value("ef_search", c.hnsw.ef_search);
        c.hnsw.M = j.value("M", c.hnsw.M);
        c.hnsw.ef_construction = j.value("ef_construction", c.hnsw.ef_construction);
        c.hnsw.rng_seed = j.value("seed", c.hnsw.rng_seed);
        c.hnsw.diversity_heuristic = j.value("diversity_heuristic", c.hnsw.diversity_heuristic);
        c.slope = j.value("slope", c.slope);
        c.intercept = j.value("intercept", c.intercept);
        c.alpha = j.value("alpha", c.alpha);
        c.validate();
        return c;
    }

    static ServiceConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw NotFound("cannot open config file: " + path);
        }
        return from_json(json::parse(in));
    }

    /// BREADTH_LISTEN=host:port overrides the listen address.
    void apply_env() {
        if (const char* listen = std::getenv("BREADTH_LISTEN")) {
            std::string s(listen);
            auto colon = s.rfind(':');
            if (colon == std::string::npos) {
                throw InvalidArgument("BREADTH_LISTEN must be host:port");
            }
            host = s.substr(0, colon);
            port = std::stoi(s.substr(colon + 1));
        }
    }

    void validate() const {
        hnsw.validate();
        if (dim == 0 || k == 0) {
            throw InvalidArgument("config: dim and k must be positive");
        }
        if (port < 0 || port > 65535) {
            throw InvalidArgument("config: port out of range");
        }
        (void)scoring::CalibratedScorer(slope, intercept);
    }
};

struct Response {
    int status = 200;
    std::string body;
};

// ---------------------------------------------------------------------------
// JSON shapes

inline json to_json(const policy::Candidate& c) {
    return {{"product_id", c.product_id}, {"similarity", c.similarity}, {"score", c.score}};
}

inline json to_json(const entropy::BroadnessReport& r) {
    return {{"broadness", r.broadness},
            {"k", r.k},
            {"catalog_size", r.catalog_size},
            {"zero_mass_fallback", r.zero_mass_fallback}};
}

inline json to_json(const policy::RouteDecision& d) {
    json cands = json::array();
    for (const auto& c : d.candidates) {
        cands.push_back(to_json(c));
    }
    return {{"tactic", std::string(policy::to_string(d.tactic))},
            {"broadness", d.broadness ? json(*d.broadness) : json(nullptr)},
            {"threshold", d.threshold},
            {"zero_mass_fallback", d.zero_mass_fallback},
            {"empty_candidates", d.empty_candidates},
            {"report", d.report ? to_json(*d.report) : json(nullptr)},
            {"candidates", std::move(cands)}};
}

inline json to_json(const policy::CalibrationResult& r) {
    json bins = json::array();
    for (const auto& b : r.bins) {
        bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mean_recall", b.mean_recall}});
    }
    json bps = json::array();
    for (const auto& bp : r.breakpoints) {
        bps.push_back({{"boundary", bp.boundary}, {"drop", bp.drop}});
    }
    return {{"bins", std::move(bins)}, {"breakpoints", std::move(bps)}, {"queries", r.total_count()}};
}

inline policy::QueryBundle bundle_from_json(const json& j) {
    if (!j.is_object()) {
        throw InvalidArgument("query body must be a JSON object");
    }
    policy::QueryBundle b;
    if (j.contains("focused") && !j.at("focused").is_null()) {
        if (!j.at("focused").is_string()) {
            throw InvalidArgument("focused must be a string or null");
        }
        b.focused = j.at("focused").get<std::string>();
    }
    if (j.contains("exploratory")) {
        if (!j.at("exploratory").is_array()) {
            throw InvalidArgument("exploratory must be an array");
        }
        for (const auto& e : j.at("exploratory")) {
            policy::ExploratoryQuery q;
            if (e.is_string()) {
                q.text = e.get<std::string>();
            } else if (e.is_object() && e.contains("text") && e.at("text").is_string()) {
                q.text = e.at("text").get<std::string>();
                if (e.contains("mode")) {
                    q.mode = policy::parse_query_mode(e.at("mode").get<std::string>());
                }
            } else {
                throw InvalidArgument("exploratory entries need a text field");
            }
            b.exploratory.push_back(std::move(q));
        }
    }
    b.validate();
    return b;
}

inline catalog::Product product_from_json(const json& j, const std::string& merchant_id,
                                          std::optional<std::vector<double>>& embedding) {
    if (!j.is_object()) {
        throw InvalidArgument("product body must be a JSON object");
    }
    catalog::Product p;
    p.product_id = j.value("product_id", std::string{});
    p.merchant_id = j.value("merchant_id", merchant_id);
    if (p.merchant_id != merchant_id) {
        throw InvalidArgument("product merchant_id does not match the path");
    }
    p.title = j.value("title", std::string{});
    p.description = j.value("description", std::string{});
    p.collection = j.value("collection", std::string{});
    p.price = j.value("price", 0.0);
    if (j.contains("embedding") && !j.at("embedding").is_null()) {
        embedding = j.at("embedding").get<std::vector<double>>();
    }
    catalog::validate(p);
    return p;
}

inline Response json_response(int status, const json& body) { return {status, body.dump()}; }

inline Response error_response(int status, const std::string& message) {
    return json_response(status, json{{"error", message}});
}

/// Runs a handler and maps library errors onto HTTP-style status codes.
template <typename F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const DuplicateId& e) {
        return error_response(409, e.what());
    } catch (const NotFound& e) {
        return error_response(404, e.what());
    } catch (const InvalidArgument& e) {
        return error_response(400, e.what());
    } catch (const DimensionMismatch& e) {
        return error_response(400, e.what());
    } catch (const FormatError& e) {
        return error_response(400, e.what());
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

class Service {
public:
    static constexpr std::string_view kMagic = "BRSNAP";
    static constexpr std::uint32_t kVersion = 1;

    explicit Service(ServiceConfig config = {})
        : config_(std::move(config)), embedder_(std::make_shared<catalog::NGramEmbedder>(config_.dim)) {
        config_.validate();
    }

    const ServiceConfig& config() const noexcept { return config_; }

    /// POST /merchants/{id}/catalog: replaces the merchant's catalog and index.
    Response ingest_catalog(const std::string& merchant_id, const std::string& body) {
        return guarded([&] {
            check_merchant_id(merchant_id);
            std::istringstream in(body);
            auto result = catalog::ingest_catalog(in, *embedder_, merchant_id);
            auto slot = std::make_shared<Slot>();
            slot->config.merchant_id = merchant_id;
            slot->config.preset = config_.default_preset;
            slot->config.k = config_.k;
            slot->scorer = scoring::CalibratedScorer(config_.slope, config_.intercept);
            const std::size_t n = result.catalog.size();
            slot->engine = std::make_unique<policy::RetrievalEngine>(policy::RetrievalEngine::build(
                std::move(result.catalog), config_.hnsw, embedder_,
                std::make_shared<scoring::CalibratedScorer>(slot->scorer), {}, config_.alpha));
            {
                std::unique_lock lock(map_mu_);
                if (auto it = merchants_.find(merchant_id); it != merchants_.end()) {
                    // keep the merchant's routing settings across re-ingest
                    std::shared_lock old(it->second->mu);
                    slot->config = it->second->config;
                    slot->scorer = it->second->scorer;
                    slot->engine->set_rescorer(std::make_shared<scoring::CalibratedScorer>(slot->scorer));
                    slot->engine->set_cooccurrence(it->second->engine->cooccurrence());
                }
                merchants_[merchant_id] = slot;
            }
            json errors = json::array();
            for (const auto& e : result.errors) {
                errors.push_back({{"line", e.line}, {"message", e.message}});
            }
            return json_response(200, {{"merchant_id", merchant_id},
                                        {"N", n},
                                        {"dim", embedder_->dim()},
                                        {"errors", std::move(errors)}});
        });
    }

    /// POST /merchants/{id}/products: upsert one product, visible to the next query.
    Response upsert_product(const std::string& merchant_id, const std::string& body) {
        return guarded([&] {
            auto slot = find(merchant_id);
            std::optional<std::vector<double>> raw;
            auto product = product_from_json(json::parse(body), merchant_id, raw);
            std::optional<EmbeddingVector> supplied;
            if (raw) {
                if (raw->size() != embedder_->dim()) {
                    throw DimensionMismatch("embedding has " + std::to_string(raw->size()) + " components, expected " +
                                            std::to_string(embedder_->dim()));
                }
                supplied = EmbeddingVector::normalized(std::move(*raw));
            }
            std::unique_lock lock(slot->mu);
            const std::string id = product.product_id;
            slot->engine->upsert(std::move(product), std::move(supplied));
            return json_response(200, {{"ok", true}, {"product_id", id}, {"N", slot->engine->catalog().size()}});
        });
    }

    /// POST /merchants/{id}/query: route one turn, with full decision provenance.
    Response query(const std::string& merchant_id, const std::string& body) {
        return guarded([&] {
            auto slot = find(merchant_id);
            auto j = json::parse(body);
            auto bundle = bundle_from_json(j);
            std::shared_lock lock(slot->mu);
            auto config = slot->config;
            if (j.contains("preset") && !j.at("preset").is_null()) {
                config.preset = policy::parse_preset(j.at("preset").get<std::string>());
                config.threshold_override.reset();
            }
            if (j.contains("tau") && !j.at("tau").is_null()) {
                config.threshold_override = j.at("tau").get<double>();
            }
            if (j.contains("k") && !j.at("k").is_null()) {
                config.k = j.at("k").get<std::size_t>();
            }
            auto decision = policy::route(bundle, *slot->engine, config);
            auto out = to_json(decision);
            out["merchant_id"] = merchant_id;
            out["preset"] = std::string(policy::to_string(config.preset));
            return json_response(200, out);
        });
    }

    /// POST /merchants/{id}/calibrate: body is a landing log (query <TAB> product).
    Response calibrate(const std::string& merchant_id, const std::string& body, double bin_width = 0.05) {
        return guarded([&] {
            auto slot = find(merchant_id);
            std::istringstream in(body);
            auto log = policy::read_landing_clicks(in);
            if (log.empty()) {
                throw InvalidArgument("empty click log");
            }
            policy::CalibrationOptions opt;
            opt.bin_width = bin_width;
            std::shared_lock lock(slot->mu);
            opt.k = slot->config.k;
            return json_response(200, to_json(policy::calibrate(log, *slot->engine, opt)));
        });
    }

    /// POST /merchants/{id}/config: preset, tau (null clears), k, slope, intercept.
    Response configure(const std::string& merchant_id, const std::string& body) {
        return guarded([&] {
            auto slot = find(merchant_id);
            auto j = json::parse(body);
            std::unique_lock lock(slot->mu);
            auto config = slot->config;
            auto scorer = slot->scorer;
            if (j.contains("preset")) {
                config.preset = policy::parse_preset(j.at("preset").get<std::string>());
            }
            if (j.contains("tau")) {
                config.threshold_override =
                    j.at("tau").is_null() ? std::nullopt : std::optional<double>(j.at("tau").get<double>());
            }
            if (j.contains("k")) {
                config.k = j.at("k").get<std::size_t>();
            }
            if (j.contains("slope") || j.contains("intercept")) {
                scorer = scoring::CalibratedScorer(j.value("slope", scorer.slope()),
                                                   j.value("intercept", scorer.intercept()));
            }
            config.validate();
            slot->config = config;
            slot->scorer = scorer;
            slot->engine->set_rescorer(std::make_shared<scoring::CalibratedScorer>(scorer));
            return json_response(200, describe(merchant_id, *slot));
        });
    }

    /// POST /merchants/{id}/carts: body is cart tuples (a <TAB> b <TAB> count).
    Response load_carts(const std::string& merchant_id, const std::string& body) {
        return guarded([&] {
            auto slot = find(merchant_id);
            std::istringstream in(body);
            std::vector<catalog::LineError> errors;
            auto stats = scoring::read_cart_tuples(in, &errors);
            std::unique_lock lock(slot->mu);
            slot->engine->set_cooccurrence(std::move(stats));
            json errs = json::array();
            for (const auto& e : errors) {
                errs.push_back({{"line", e.line}, {"message", e.message}});
            }
            return json_response(200, {{"pairs", slot->engine->cooccurrence().pairs().size()}, {"errors", errs}});
        });
    }

    /// GET /merchants/{id}
    Response summary(const std::string& merchant_id) const {
        return guarded([&] {
            auto slot = find(merchant_id);
            std::shared_lock lock(slot->mu);
            return json_response(200, describe(merchant_id, *slot));
        });
    }

    /// Writes every merchant's state to `path` (versioned little-endian binary).
    void snapshot(const std::string& path) const {
        std::ostringstream out;
        io::write_magic(out, kMagic, kVersion);
        std::shared_lock map_lock(map_mu_);
        io::write_u64(out, merchants_.size());
        for (const auto& [id, slot] : merchants_) {
            std::shared_lock lock(slot->mu);
            io::write_string(out, id);
            io::write_u32(out, static_cast<std::uint32_t>(slot->config.preset));
            io::write_u32(out, slot->config.threshold_override ? 1 : 0);
            io::write_f64(out, slot->config.threshold_override.value_or(0.0));
            io::write_u64(out, slot->config.k);
            io::write_f64(out, slot->scorer.slope());
            io::write_f64(out, slot->scorer.intercept());
            io::write_f64(out, slot->engine->alpha());
            io::write_u64(out, slot->engine->ef_search());
            slot->engine->catalog().save(out);
            slot->engine->index().save(out);
            const auto& cooc = slot->engine->cooccurrence();
            io::write_u64(out, cooc.pairs().size());
            for (const auto& [key, n] : cooc.pairs()) {
                io::write_string(out, key.first);
                io::write_string(out, key.second);
                io::write_u64(out, n);
            }
            io::write_u64(out, cooc.items().size());
            for (const auto& [item, n] : cooc.items()) {
                io::write_string(out, item);
                io::write_u64(out, n);
            }
        }
        std::ofstream file(path, std::ios::binary | std::ios::trunc);
        if (!file) {
            throw Error("cannot write snapshot: " + path);
        }
        const auto bytes = out.str();
        file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!file) {
            throw Error("failed writing snapshot: " + path);
        }
    }

    /// Replaces all state with the snapshot at `path`. State is untouched on error.
    void restore(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw NotFound("snapshot not found: " + path);
        }
        io::read_magic(in, kMagic, kVersion);
        std::map<std::string, std::shared_ptr<Slot>> loaded;
        auto count = io::read_u64(in);
        for (std::uint64_t i = 0; i < count; ++i) {
            auto slot = std::make_shared<Slot>();
            auto id = io::read_string(in);
            slot->config.merchant_id = id;
            auto preset = io::read_u32(in);
            if (preset > 2) {
                throw FormatError("snapshot: bad preset");
            }
            slot->config.preset = static_cast<policy::Preset>(preset);
            const bool has_tau = io::read_u32(in) != 0;
            const double tau = io::read_f64(in);
            if (has_tau) {
                slot->config.threshold_override = tau;
            }
            slot->config.k = io::read_u64(in);
            const double a = io::read_f64(in);
            const double b = io::read_f64(in);
            slot->scorer = scoring::CalibratedScorer(a, b);
            const double alpha = io::read_f64(in);
            const auto ef = io::read_u64(in);
            auto cat = catalog::Catalog::load(in);
            auto index = ann::HnswIndex::load(in);
            std::map<std::pair<std::string, std::string>, std::uint64_t> pairs;
            auto np = io::read_u64(in);
            for (std::uint64_t p = 0; p < np; ++p) {
                auto first = io::read_string(in);
                auto second = io::read_string(in);
                pairs[{std::move(first), std::move(second)}] = io::read_u64(in);
            }
            std::map<std::string, std::uint64_t> items;
            auto ni = io::read_u64(in);
            for (std::uint64_t p = 0; p < ni; ++p) {
                auto item = io::read_string(in);
                items[std::move(item)] = io::read_u64(in);
            }
            slot->engine = std::make_unique<policy::RetrievalEngine>(
                std::move(cat), std::move(index), embedder_, std::make_shared<scoring::CalibratedScorer>(slot->scorer),
                scoring::CoOccurrenceStats::from_counts(std::move(pairs), std::move(items)), ef, alpha);
            loaded[id] = std::move(slot);
        }
        std::unique_lock lock(map_mu_);
        merchants_ = std::move(loaded);
    }

    Response snapshot_endpoint(const std::string& body) const {
        return guarded([&] {
            auto path = json::parse(body).at("path").get<std::string>();
            snapshot(path);
            return json_response(200, {{"ok", true}, {"path", path}});
        });
    }

    Response restore_endpoint(const std::string& body) {
        return guarded([&] {
            auto path = json::parse(body).at("path").get<std::string>();
            restore(path);
            std::shared_lock lock(map_mu_);
            return json_response(200, {{"ok", true}, {"path", path}, {"merchants", merchants_.size()}});
        });
    }

    std::vector<std::string> merchant_ids() const {
        std::shared_lock lock(map_mu_);
        std::vector<std::string> ids;
        for (const auto& [id, slot] : merchants_) {
            ids.push_back(id);
        }
        return ids;
    }

private:
    struct Slot {
        mutable std::shared_mutex mu;
        std::unique_ptr<policy::RetrievalEngine> engine;
        policy::MerchantConfig config;
        scoring::CalibratedScorer scorer;
    };

    static void check_merchant_id(const std::string& id) {
        if (id.empty()) {
            throw InvalidArgument("empty merchant id");
        }
    }

    std::shared_ptr<Slot> find(const std::string& merchant_id) const {
        std::shared_lock lock(map_mu_);
        auto it = merchants_.find(merchant_id);
        if (it == merchants_.end()) {
            throw NotFound("unknown merchant: " + merchant_id);
        }
        return it->second;
    }

    json describe(const std::string& merchant_id, const Slot& slot) const {
        return {{"merchant_id", merchant_id},
                {"N", slot.engine->catalog().size()},
                {"dim", embedder_->dim()},
                {"preset", std::string(policy::to_string(slot.config.preset))},
                {"tau", slot.config.threshold()},
                {"k", slot.config.k},
                {"slope", slot.scorer.slope()},
                {"intercept", slot.scorer.intercept()}};
    }

    ServiceConfig config_;
    std::shared_ptr<const catalog::Embedder> embedder_;
    mutable std::shared_mutex map_mu_;
    std::map<std::string, std::shared_ptr<Slot>> merchants_;
};

}  // namespace breadth::service
