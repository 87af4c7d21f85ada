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


// breadth: command-line front end for ingestion, indexing, the estimator
// study, threshold calibration, routing, simulation and the HTTP service.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "breadth/breadth.hpp"
#include "breadth/http.hpp"
#include "breadth/synthetic.hpp"

namespace {

using namespace breadth;

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFound("cannot open " + path);
    }
    return in;
}

/// Writes to `path`, or to stdout when the path is empty or "-".
template <typename F>
void with_output(const std::string& path, F&& f) {
    if (path.empty() || path == "-") {
        f(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path);
    }
    f(out);
}

void report_line_errors(const std::string& source, const std::vector<catalog::LineError>& errors) {
    for (const auto& e : errors) {
        std::cerr << source << ":" << e.line << ": " << e.message << "\n";
    }
}

catalog::Catalog load_catalog(const std::string& path, const catalog::Embedder& embedder,
                              const std::string& merchant = {}) {
    auto in = open_in(path);
    auto result = catalog::ingest_catalog(in, embedder, merchant);
    report_line_errors(path, result.errors);
    return std::move(result.catalog);
}

struct ScorerOpts {
    double slope = 60.0;
    double intercept = -50.0;

    void add(CLI::App* app) {
        app->add_option("--slope", slope, "calibrated scorer slope a")->capture_default_str();
        app->add_option("--intercept", intercept, "calibrated scorer intercept b")->capture_default_str();
    }
    std::shared_ptr<scoring::CalibratedScorer> make() const {
        return std::make_shared<scoring::CalibratedScorer>(slope, intercept);
    }
};

struct HnswOpts {
    ann::HnswParams params;

    void add(CLI::App* app) {
        app->add_option("--M", params.M, "max neighbors per layer")->capture_default_str();
        app->add_option("--ef-construction", params.ef_construction)->capture_default_str();
        app->add_option("--ef-search", params.ef_search)->capture_default_str();
        app->add_option("--seed", params.rng_seed, "level draw seed")->capture_default_str();
        app->add_flag("--diversity", params.diversity_heuristic, "diversity neighbor selection");
    }
};

ann::HnswIndex load_index(const std::string& path) {
    auto in = open_in(path);
    return ann::HnswIndex::load(in);
}

void save_index(const ann::HnswIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path);
    }
    index.save(out);
}

std::vector<std::size_t> parse_ks(const std::string& csv) {
    std::vector<std::size_t> ks;
    for (auto part : text::split(csv, ',')) {
        double x;
        if (!text::parse_double(part, x) || x < 1 || x != static_cast<double>(static_cast<std::size_t>(x))) {
            throw InvalidArgument("bad k value: '" + std::string(part) + "'");
        }
        ks.push_back(static_cast<std::size_t>(x));
    }
    return ks;
}

std::vector<std::string> read_lines(const std::string& path) {
    auto in = open_in(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (!t.empty() && t.front() != '#') {
            out.emplace_back(t);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"breadth: broadness-aware product retrieval and dialogue routing"};
    app.require_subcommand(1);

    // ingest -------------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "parse and embed a catalog file");
    std::string ingest_path, ingest_out, ingest_merchant;
    std::size_t dim = catalog::NGramEmbedder::kDefaultDim;
    ingest->add_option("--catalog", ingest_path, "catalog records (TSV)")->required();
    ingest->add_option("--dim", dim, "embedding dimension")->capture_default_str();
    ingest->add_option("--merchant", ingest_merchant, "expected merchant id");
    ingest->add_option("--out", ingest_out, "write the embedded catalog as TSV with embeddings");

    // index --------------------------------------------------------------
    auto* index = app.add_subcommand("index", "HNSW index snapshots");
    index->require_subcommand(1);
    auto* ibuild = index->add_subcommand("build", "build an index from a catalog file");
    auto* iinsert = index->add_subcommand("insert", "upsert catalog records into an index");
    auto* isearch = index->add_subcommand("search", "query an index");
    std::string icatalog, iindex, iout, iquery;
    std::size_t ik = 10, ief = 0;
    HnswOpts hnsw;
    ibuild->add_option("--catalog", icatalog)->required();
    ibuild->add_option("--dim", dim)->capture_default_str();
    ibuild->add_option("--out", iout, "index snapshot path")->required();
    hnsw.add(ibuild);
    iinsert->add_option("--index", iindex)->required();
    iinsert->add_option("--catalog", icatalog, "records to upsert")->required();
    iinsert->add_option("--dim", dim)->capture_default_str();
    iinsert->add_option("--out", iout, "defaults to overwriting --index");
    isearch->add_option("--index", iindex)->required();
    isearch->add_option("--query", iquery)->required();
    isearch->add_option("--k", ik)->capture_default_str();
    isearch->add_option("--ef", ief, "beam width, 0 for the index default");
    isearch->add_option("--dim", dim)->capture_default_str();

    // estimator-study ----------------------------------------------------
    auto* study = app.add_subcommand("estimator-study", "top-k broadness estimator error curve");
    std::string study_catalog, study_queries, study_out, study_ks = "5,10,25,50,100";
    std::size_t study_catalogs = 20, study_nq = 50;
    std::uint64_t study_seed = 1;
    ScorerOpts study_scorer{8.0, -5.0};
    study->add_option("--catalog", study_catalog, "real catalog; synthetic long-tail catalogs when omitted");
    study->add_option("--queries", study_queries, "query texts, one per line (with --catalog)");
    study->add_option("--catalogs", study_catalogs, "synthetic catalogs to average over")->capture_default_str();
    study->add_option("--queries-per-catalog", study_nq)->capture_default_str();
    study->add_option("--ks", study_ks, "comma-separated k values")->capture_default_str();
    study->add_option("--seed", study_seed)->capture_default_str();
    study->add_option("--dim", dim)->capture_default_str();
    study->add_option("--out", study_out, "output file (default stdout)");
    study_scorer.add(study);

    // fit / triplets -----------------------------------------------------
    auto* fit = app.add_subcommand("fit", "fit the calibrated scorer on a labeled click log");
    std::string fit_clicks, fit_catalog;
    scoring::FitOptions fit_opt;
    fit->add_option("--clicks", fit_clicks, "query <TAB> product <TAB> 0|1")->required();
    fit->add_option("--catalog", fit_catalog)->required();
    fit->add_option("--dim", dim)->capture_default_str();
    fit->add_option("--step", fit_opt.step)->capture_default_str();
    fit->add_option("--iterations", fit_opt.iterations)->capture_default_str();

    auto* triplets = app.add_subcommand("triplets", "emit (query, positive, negative) training triplets");
    std::string tr_clicks, tr_catalog, tr_merchant, tr_out;
    std::size_t tr_per = 4;
    std::uint64_t tr_seed = 1;
    triplets->add_option("--clicks", tr_clicks)->required();
    triplets->add_option("--catalog", tr_catalog, "multi-merchant catalog file")->required();
    triplets->add_option("--merchant", tr_merchant)->required();
    triplets->add_option("--per-positive", tr_per)->capture_default_str();
    triplets->add_option("--seed", tr_seed)->capture_default_str();
    triplets->add_option("--dim", dim)->capture_default_str();
    triplets->add_option("--out", tr_out);

    // calibrate ----------------------------------------------------------
    auto* calib = app.add_subcommand("calibrate", "recall@10 per broadness bin and breakpoints");
    std::string cal_log, cal_catalog, cal_out;
    policy::CalibrationOptions cal_opt;
    bool cal_planted = false;
    std::uint64_t cal_seed = 11;
    ScorerOpts cal_scorer;
    calib->add_option("--log", cal_log, "query <TAB> landing_product_id");
    calib->add_option("--catalog", cal_catalog, "catalog the log refers to");
    calib->add_flag("--planted", cal_planted, "use a synthetic three-regime log instead");
    calib->add_option("--seed", cal_seed, "seed for --planted")->capture_default_str();
    calib->add_option("--bin-width", cal_opt.bin_width)->capture_default_str();
    calib->add_option("--k", cal_opt.k)->capture_default_str();
    calib->add_option("--min-drop", cal_opt.min_drop)->capture_default_str();
    calib->add_option("--dim", dim)->capture_default_str();
    calib->add_option("--out", cal_out);
    cal_scorer.add(calib);

    // route --------------------------------------------------------------
    auto* route = app.add_subcommand("route", "route one conversational turn");
    std::string rt_query, rt_catalog, rt_preset = "balanced";
    std::vector<std::string> rt_context;
    std::optional<double> rt_tau;
    std::size_t rt_k = 50;
    ScorerOpts rt_scorer;
    route->add_option("--query", rt_query, "latest shopper utterance")->required();
    route->add_option("--context", rt_context, "earlier utterances, oldest first");
    route->add_option("--catalog", rt_catalog)->required();
    route->add_option("--preset", rt_preset, "educational | balanced | pushy")->capture_default_str();
    route->add_option("--tau", rt_tau, "explicit threshold overriding the preset");
    route->add_option("--k", rt_k)->capture_default_str();
    route->add_option("--dim", dim)->capture_default_str();
    rt_scorer.add(route);

    // simulate -----------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "compare presets on scripted shoppers");
    std::string sim_shoppers, sim_catalog, sim_out, sim_export;
    synthetic::StorefrontSpec sim_spec;
    ScorerOpts sim_scorer;
    sim->add_option("--shoppers", sim_shoppers, "shopper fixture; synthetic storefront when omitted");
    sim->add_option("--catalog", sim_catalog, "catalog for --shoppers");
    sim->add_option("--population", sim_spec.shoppers, "synthetic shoppers")->capture_default_str();
    sim->add_option("--patience", sim_spec.patience)->capture_default_str();
    sim->add_option("--seed", sim_spec.seed)->capture_default_str();
    sim->add_option("--dim", dim)->capture_default_str();
    sim->add_option("--out", sim_out);
    sim->add_option("--export", sim_export, "write the synthetic storefront catalog and shoppers under this prefix");
    sim_scorer.add(sim);

    // serve --------------------------------------------------------------
    auto* serve = app.add_subcommand("serve", "run the HTTP/JSON service");
    std::string srv_config;
    serve->add_option("--config", srv_config, "JSON config file (or BREADTH_CONFIG)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            catalog::NGramEmbedder embedder(dim);
            auto in = open_in(ingest_path);
            auto result = catalog::ingest_catalog(in, embedder, ingest_merchant);
            report_line_errors(ingest_path, result.errors);
            std::cout << "merchant\t" << result.catalog.merchant_id() << "\nN\t" << result.catalog.size() << "\ndim\t"
                      << dim << "\nerrors\t" << result.errors.size() << "\n";
            if (!ingest_out.empty()) {
                with_output(ingest_out, [&](std::ostream& out) {
                    for (std::size_t i = 0; i < result.catalog.size(); ++i) {
                        out << catalog::format_record(result.catalog.products()[i], &result.catalog.embeddings()[i])
                            << "\n";
                    }
                });
            }
        } else if (*ibuild) {
            catalog::NGramEmbedder embedder(dim);
            auto cat = load_catalog(icatalog, embedder);
            auto idx = ann::HnswIndex::build(cat.vectors(), hnsw.params);
            save_index(idx, iout);
            std::cout << "nodes\t" << idx.node_count() << "\nmax_level\t" << idx.max_level() << "\n";
        } else if (*iinsert) {
            catalog::NGramEmbedder embedder(dim);
            auto idx = load_index(iindex);
            auto in = open_in(icatalog);
            std::string line;
            std::size_t lineno = 0, applied = 0;
            while (std::getline(in, line)) {
                ++lineno;
                auto t = text::trim(line);
                if (t.empty() || t.front() == '#') {
                    continue;
                }
                try {
                    auto r = catalog::parse_record(line);
                    idx.upsert(r.product.product_id, catalog::embed_record(r, embedder));
                    ++applied;
                } catch (const InvalidArgument& e) {
                    std::cerr << icatalog << ":" << lineno << ": " << e.what() << "\n";
                }
            }
            save_index(idx, iout.empty() ? iindex : iout);
            std::cout << "upserted\t" << applied << "\nlive\t" << idx.size() << "\n";
        } else if (*isearch) {
            catalog::NGramEmbedder embedder(dim);
            auto idx = load_index(iindex);
            std::cout << "rank\tproduct_id\tsimilarity\n" << std::setprecision(6);
            std::size_t rank = 0;
            for (const auto& h : idx.search(embedder.embed(iquery), ik, ief)) {
                std::cout << ++rank << '\t' << h.product_id << '\t' << h.similarity << '\n';
            }
        } else if (*study) {
            auto ks = parse_ks(study_ks);
            std::vector<entropy::ErrorPoint> total;
            if (!study_catalog.empty()) {
                if (study_queries.empty()) {
                    throw InvalidArgument("--queries is required with --catalog");
                }
                catalog::NGramEmbedder embedder(dim);
                auto cat = load_catalog(study_catalog, embedder);
                std::vector<EmbeddingVector> qs;
                for (const auto& q : read_lines(study_queries)) {
                    qs.push_back(embedder.embed(q));
                }
                total = entropy::estimator_error_curve(cat, *study_scorer.make(), qs, ks);
            } else {
                synthetic::LongTailSpec spec;
                spec.queries = study_nq;
                spec.slope = study_scorer.slope;
                spec.intercept = study_scorer.intercept;
                for (std::size_t c = 0; c < study_catalogs; ++c) {
                    auto fx = synthetic::long_tail_catalog(spec, study_seed + c);
                    auto curve = entropy::estimator_error_curve(fx.catalog, fx.scorer, fx.queries, ks);
                    if (total.empty()) {
                        total = curve;
                        continue;
                    }
                    for (std::size_t i = 0; i < curve.size(); ++i) {
                        total[i].mean_error += curve[i].mean_error;
                    }
                }
                for (auto& p : total) {
                    p.mean_error /= static_cast<double>(study_catalogs);
                }
            }
            with_output(study_out, [&](std::ostream& out) { entropy::write_error_curve(out, total); });
        } else if (*fit) {
            catalog::NGramEmbedder embedder(dim);
            auto cat = load_catalog(fit_catalog, embedder);
            auto in = open_in(fit_clicks);
            std::vector<catalog::LineError> errors;
            auto clicks = scoring::read_click_records(in, &errors);
            report_line_errors(fit_clicks, errors);
            auto data = scoring::to_similarities(clicks, cat, embedder);
            auto result = scoring::fit_calibration(data, fit_opt);
            std::cout << std::setprecision(8) << "slope\t" << result.scorer.slope() << "\nintercept\t"
                      << result.scorer.intercept() << "\ninitial_loss\t" << result.initial_loss << "\nfinal_loss\t"
                      << result.final_loss << "\nexamples\t" << data.size() << "\n";
        } else if (*triplets) {
            catalog::NGramEmbedder embedder(dim);
            auto cin = open_in(tr_catalog);
            auto universe = catalog::ingest_universe(cin, embedder);
            report_line_errors(tr_catalog, universe.errors);
            auto in = open_in(tr_clicks);
            std::vector<catalog::LineError> errors;
            auto clicks = scoring::read_click_records(in, &errors);
            report_line_errors(tr_clicks, errors);
            auto out = scoring::make_triplets(clicks, universe.catalogs, tr_merchant, tr_per, tr_seed);
            with_output(tr_out, [&](std::ostream& o) { scoring::write_triplets(o, out); });
        } else if (*calib) {
            policy::CalibrationResult result;
            if (cal_planted) {
                synthetic::PlantedLogSpec spec;
                spec.bin_width = cal_opt.bin_width;
                spec.k = cal_opt.k;
                auto fx = synthetic::planted_landing_log(spec, cal_seed);
                result = policy::calibrate(fx.log, *fx.engine, cal_opt);
            } else {
                if (cal_log.empty() || cal_catalog.empty()) {
                    throw InvalidArgument("--log and --catalog are required unless --planted is given");
                }
                auto embedder = std::make_shared<catalog::NGramEmbedder>(dim);
                auto engine = policy::RetrievalEngine::build(load_catalog(cal_catalog, *embedder), {}, embedder,
                                                             cal_scorer.make());
                auto in = open_in(cal_log);
                std::vector<catalog::LineError> errors;
                auto log = policy::read_landing_clicks(in, &errors);
                report_line_errors(cal_log, errors);
                result = policy::calibrate(log, engine, cal_opt);
            }
            with_output(cal_out, [&](std::ostream& out) { policy::write_calibration(out, result); });
        } else if (*route) {
            auto embedder = std::make_shared<catalog::NGramEmbedder>(dim);
            auto engine =
                policy::RetrievalEngine::build(load_catalog(rt_catalog, *embedder), {}, embedder, rt_scorer.make());
            policy::MerchantConfig config;
            config.merchant_id = engine.catalog().merchant_id();
            config.preset = policy::parse_preset(rt_preset);
            config.threshold_override = rt_tau;
            config.k = rt_k;
            config.validate();
            auto conversation = rt_context;
            conversation.push_back(rt_query);
            auto bundle = harness::stub_query_generator(conversation, harness::Stopwords::builtin());
            auto decision = policy::route(bundle, engine, config);
            auto record = service::to_json(decision);
            record["focused"] = bundle.focused ? nlohmann::json(*bundle.focused) : nlohmann::json(nullptr);
            record["preset"] = rt_preset;
            std::cout << record.dump(2) << "\n";
        } else if (*sim) {
            auto embedder = std::make_shared<catalog::NGramEmbedder>(dim);
            catalog::Catalog cat;
            std::vector<harness::ScriptedShopper> shoppers;
            if (!sim_shoppers.empty()) {
                if (sim_catalog.empty()) {
                    throw InvalidArgument("--catalog is required with --shoppers");
                }
                cat = load_catalog(sim_catalog, *embedder);
                auto in = open_in(sim_shoppers);
                std::vector<catalog::LineError> errors;
                shoppers = harness::read_shoppers(in, &errors);
                report_line_errors(sim_shoppers, errors);
            } else {
                sim_spec.slope = sim_scorer.slope;
                sim_spec.intercept = sim_scorer.intercept;
                auto fx = synthetic::storefront(*embedder, sim_spec);
                cat = std::move(fx.catalog);
                shoppers = std::move(fx.shoppers);
            }
            if (!sim_export.empty()) {
                with_output(sim_export + "catalog.tsv", [&](std::ostream& out) {
                    for (const auto& p : cat.products()) {
                        out << catalog::format_record(p) << "\n";
                    }
                });
                with_output(sim_export + "shoppers.tsv",
                            [&](std::ostream& out) { harness::write_shoppers(out, shoppers); });
            }
            auto engine = policy::RetrievalEngine::build(std::move(cat), {}, embedder, sim_scorer.make());
            std::vector<policy::MerchantConfig> configs;
            for (auto p : {policy::Preset::educational, policy::Preset::balanced, policy::Preset::pushy}) {
                policy::MerchantConfig c;
                c.preset = p;
                configs.push_back(c);
            }
            auto rows = harness::compare_policies(shoppers, engine, configs);
            with_output(sim_out, [&](std::ostream& out) { harness::write_policy_table(out, rows); });
        } else if (*serve) {
            if (srv_config.empty()) {
                if (const char* env = std::getenv("BREADTH_CONFIG")) {
                    srv_config = env;
                }
            }
            auto config = srv_config.empty() ? service::ServiceConfig{} : service::ServiceConfig::load(srv_config);
            config.apply_env();
            service::Service svc(config);
            httplib::Server server;
            service::bind(server, svc);
            std::cerr << "listening on " << config.host << ":" << config.port << "\n";
            if (!server.listen(config.host, config.port)) {
                throw Error("cannot listen on " + config.host + ":" + std::to_string(config.port));
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
