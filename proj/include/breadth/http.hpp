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

#include <string>

#include "httplib.h"

#include "breadth/service.hpp"

namespace breadth::service {

inline void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
}

/// Registers the JSON endpoints of `svc` on `server`.
inline void bind(httplib::Server& server, Service& svc) {
    const std::string merchant = R"(/merchants/([A-Za-z0-9_.\-]+))";
    server.Post(merchant + "/catalog", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.ingest_catalog(req.matches[1], req.body));
    });
    server.Post(merchant + "/products", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.upsert_product(req.matches[1], req.body));
    });
    server.Post(merchant + "/query", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.query(req.matches[1], req.body));
    });
    server.Post(merchant + "/calibrate", [&svc](const httplib::Request& req, httplib::Response& res) {
        double width = 0.05;
        if (req.has_param("bin_width") && !text::parse_double(req.get_param_value("bin_width"), width)) {
            reply(res, error_response(400, "bin_width must be a number"));
            return;
        }
        reply(res, svc.calibrate(req.matches[1], req.body, width));
    });
    server.Post(merchant + "/config", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.configure(req.matches[1], req.body));
    });
    server.Post(merchant + "/carts", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.load_carts(req.matches[1], req.body));
    });
    server.Get(merchant, [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.summary(req.matches[1]));
    });
    server.Post("/admin/snapshot", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.snapshot_endpoint(req.body));
    });
    server.Post("/admin/restore", [&svc](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc.restore_endpoint(req.body));
    });
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"ok":true})", "application/json");
    });
}

}  // namespace breadth::service
