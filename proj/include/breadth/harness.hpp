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

/// \file harness.hpp
/// Scripted shopper sessions for measuring engagement (rounds per session)
/// under different routing thresholds. A deterministic keyword extractor
/// stands in for the query-generating language model.

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "breadth/common.hpp"
#include "breadth/engine.hpp"
#include "breadth/policy.hpp"

namespace breadth::harness {

class Stopwords {
public:
    Stopwords() = default;
    explicit Stopwords(std::unordered_set<std::string> words) : words_(std::move(words)) {}

    static Stopwords builtin() {
        return Stopwords({"a",     "an",     "the",    "and",  "or",     "of",    "for",   "to",     "in",
                          "on",    "with",   "at",     "by",   "from",   "i",     "me",    "my",     "we",
                          "you",   "your",   "it",     "is",   "are",    "am",    "be",    "this",   "that",
                          "these", "those",  "hi",     "hello", "hey",   "there", "thanks", "thank", "please",
                          "can",   "could",  "would",  "do",   "does",   "have",  "has",   "want",   "need",
                          "looking", "look", "some",   "any",  "something", "show", "find", "just",  "like",
                          "good",  "morning", "evening", "im", "so",     "what",  "about", "ok",    "okay"});
    }

    /// One word per line; '#' starts a comment line.
    static Stopwords read(std::istream& in) {
        std::unordered_set<std::string> words;
        std::string line;
        while (std::getline(in, line)) {
            auto t = text::trim(line);
            if (!t.empty() && t.front() != '#') {
                words.insert(text::lower_ascii(t));
            }
        }
        return Stopwords(std::move(words));
    }

    bool contains(const std::string& w) const { return words_.count(w) != 0; }

private:
    std::unordered_set<std::string> words_;
};

/// Lowercased content words; bytes >= 0x80 count as word characters so
/// UTF-8 text stays intact.
inline std::vector<std::string> content_words(std::string_view utterance, const Stopwords& stop) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && !stop.contains(cur)) {
            out.push_back(cur);
        }
        cur.clear();
    };
    for (char ch : utterance) {
        auto c = static_cast<unsigned char>(ch);
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
            cur.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

inline std::string join(const std::vector<std::string>& words) {
    std::string s;
    for (const auto& w : words) {
        if (!s.empty()) {
            s.push_back(' ');
        }
        s += w;
    }
    return s;
}

/// focused = content words of the latest utterance (absent when none);
/// exploratory = one identification query over the de-duplicated keyword
/// union of all turns, in first-appearance order.
inline policy::QueryBundle stub_query_generator(std::span<const std::string> conversation,
                                                const Stopwords& stop = Stopwords::builtin()) {
    policy::QueryBundle bundle;
    if (conversation.empty()) {
        return bundle;
    }
    auto latest = content_words(conversation.back(), stop);
    if (!latest.empty()) {
        bundle.focused = join(latest);
    }
    std::vector<std::string> all;
    std::unordered_set<std::string> seen;
    for (const auto& turn : conversation) {
        for (auto& w : content_words(turn, stop)) {
            if (seen.insert(w).second) {
                all.push_back(std::move(w));
            }
        }
    }
    if (!all.empty()) {
        bundle.exploratory.push_back({policy::QueryMode::identification, join(all)});
    }
    return bundle;
}

struct ScriptedShopper {
    std::string target_id;
    std::vector<std::string> utterances;  // increasingly specific
    std::size_t patience = 1;             // max rounds
};

enum class Outcome { recommended_target, recommended_other, exhausted };

inline std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::recommended_target:
            return "recommended_target";
        case Outcome::recommended_other:
            return "recommended_other";
        case Outcome::exhausted:
            return "exhausted";
    }
    return "unknown";
}

struct SessionTurn {
    std::string utterance;
    policy::RouteDecision decision;
};

struct SessionLog {
    std::vector<SessionTurn> turns;
    std::size_t rounds = 0;
    Outcome outcome = Outcome::exhausted;
};

/// Plays the shopper's script against the router. A Recommendation ends the
/// session; any other tactic moves to the next utterance. The session is
/// exhausted at `patience` rounds or when the script runs out.
inline SessionLog run_session(const ScriptedShopper& shopper, const policy::RetrievalEngine& engine,
                              const policy::MerchantConfig& config, const Stopwords& stop = Stopwords::builtin()) {
    if (shopper.utterances.empty()) {
        throw InvalidArgument("shopper has no utterances");
    }
    if (shopper.patience == 0) {
        throw InvalidArgument("shopper patience must be >= 1");
    }
    if (!engine.catalog().contains(shopper.target_id)) {
        throw NotFound("target product not in catalog: " + shopper.target_id);
    }
    SessionLog log;
    std::vector<std::string> conversation;
    for (std::size_t r = 0; r < shopper.patience && r < shopper.utterances.size(); ++r) {
        conversation.push_back(shopper.utterances[r]);
        auto bundle = stub_query_generator(conversation, stop);
        auto decision = policy::route(bundle, engine, config);
        const bool done = decision.tactic == policy::Tactic::recommendation;
        log.turns.push_back({shopper.utterances[r], std::move(decision)});
        log.rounds = log.turns.size();
        if (done) {
            const auto& c = log.turns.back().decision.candidates;
            log.outcome = (!c.empty() && c.front().product_id == shopper.target_id) ? Outcome::recommended_target
                                                                                    : Outcome::recommended_other;
            return log;
        }
    }
    log.outcome = Outcome::exhausted;
    return log;
}

struct PolicyStats {
    std::string label;
    double threshold = 0.0;
    std::size_t sessions = 0;
    double mean_rounds = 0.0;
    std::size_t recommended_target = 0;
    std::size_t recommended_other = 0;
    std::size_t exhausted = 0;

    friend bool operator==(const PolicyStats&, const PolicyStats&) = default;
};

inline std::string config_label(const policy::MerchantConfig& c) {
    if (c.threshold_override) {
        std::ostringstream s;
        s << "tau=" << *c.threshold_override;
        return s.str();
    }
    return std::string(policy::to_string(c.preset));
}

/// One row per configuration: mean rounds and outcome counts over the population.
inline std::vector<PolicyStats> compare_policies(std::span<const ScriptedShopper> population,
                                                 const policy::RetrievalEngine& engine,
                                                 std::span<const policy::MerchantConfig> configs,
                                                 const Stopwords& stop = Stopwords::builtin()) {
    if (population.empty()) {
        throw InvalidArgument("compare_policies: empty population");
    }
    std::vector<PolicyStats> out;
    for (const auto& config : configs) {
        PolicyStats st;
        st.label = config_label(config);
        st.threshold = config.threshold();
        std::size_t rounds = 0;
        for (const auto& shopper : population) {
            auto log = run_session(shopper, engine, config, stop);
            rounds += log.rounds;
            ++st.sessions;
            switch (log.outcome) {
                case Outcome::recommended_target:
                    ++st.recommended_target;
                    break;
                case Outcome::recommended_other:
                    ++st.recommended_other;
                    break;
                case Outcome::exhausted:
                    ++st.exhausted;
                    break;
            }
        }
        st.mean_rounds = static_cast<double>(rounds) / static_cast<double>(st.sessions);
        out.push_back(std::move(st));
    }
    return out;
}

inline void write_policy_table(std::ostream& out, std::span<const PolicyStats> rows) {
    out << "policy\ttau\tsessions\tmean_rounds\trecommended_target\trecommended_other\texhausted\n";
    for (const auto& r : rows) {
        out << r.label << '\t' << r.threshold << '\t' << r.sessions << '\t' << r.mean_rounds << '\t'
            << r.recommended_target << '\t' << r.recommended_other << '\t' << r.exhausted << '\n';
    }
}

/// Shopper fixture: target_id <TAB> patience <TAB> utterance | utterance | ...
inline std::vector<ScriptedShopper> read_shoppers(std::istream& in, std::vector<catalog::LineError>* errors = nullptr) {
    std::vector<ScriptedShopper> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        auto f = text::split(t, '\t');
        double patience = 0;
        if (f.size() != 3 || text::trim(f[0]).empty() || !text::parse_double(f[1], patience) || patience < 1 ||
            patience != std::floor(patience)) {
            if (errors) {
                errors->push_back({lineno, "expected target_id, positive integer patience, utterances"});
            }
            continue;
        }
        ScriptedShopper s;
        s.target_id = std::string(text::trim(f[0]));
        s.patience = static_cast<std::size_t>(patience);
        for (auto u : text::split(f[2], '|')) {
            if (!text::trim(u).empty()) {
                s.utterances.emplace_back(text::trim(u));
            }
        }
        if (s.utterances.empty()) {
            if (errors) {
                errors->push_back({lineno, "no utterances"});
            }
            continue;
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_shoppers(std::ostream& out, std::span<const ScriptedShopper> shoppers) {
    for (const auto& s : shoppers) {
        out << s.target_id << '\t' << s.patience << '\t';
        for (std::size_t i = 0; i < s.utterances.size(); ++i) {
            out << (i ? " | " : "") << s.utterances[i];
        }
        out << '\n';
    }
}

}  // namespace breadth::harness
