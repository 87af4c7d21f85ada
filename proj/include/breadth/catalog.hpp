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

#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "breadth/common.hpp"
#include "breadth/hnsw.hpp"
#include "breadth/vector.hpp"

namespace breadth::catalog {

struct Product {
    std::string product_id;
    std::string merchant_id;
    std::string title;
    std::string description;
    std::string collection;  // may be empty
    double price = 0.0;

    /// Text handed to the embedder.
    std::string descriptor() const { return description.empty() ? title : title + " " + description; }

    friend bool operator==(const Product&, const Product&) = default;
};

inline void validate(const Product& p) {
    if (p.product_id.empty()) {
        throw InvalidArgument("product_id is empty");
    }
    if (text::trim(p.title).empty()) {
        throw InvalidArgument("title is empty for product '" + p.product_id + "'");
    }
    if (!(p.price >= 0.0) || !std::isfinite(p.price)) {
        throw InvalidArgument("price must be a non-negative number for product '" + p.product_id + "'");
    }
}

/// Text to unit vector. Implementations must be deterministic and thread-safe.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;
};

/// Signed feature hashing of byte-level character n-grams (n = 3..5).
///
/// Text is ASCII-lowercased, whitespace runs collapse to one space and the
/// result is padded with a space on each side so word boundaries form grams.
/// Each gram hashes (FNV-1a) to a bucket and a sign; the bucket histogram is
/// L2-normalized.
class NGramEmbedder final : public Embedder {
public:
    static constexpr std::size_t kDefaultDim = 256;
    static constexpr std::size_t kMinGram = 3;
    static constexpr std::size_t kMaxGram = 5;

    explicit NGramEmbedder(std::size_t dim = kDefaultDim) : dim_(dim) {
        if (dim_ == 0) {
            throw InvalidArgument("embedder dimension must be positive");
        }
    }

    std::size_t dim() const override { return dim_; }

    EmbeddingVector embed(std::string_view input) const override {
        auto trimmed = text::trim(input);
        if (trimmed.empty()) {
            throw InvalidArgument("empty text");
        }
        std::string padded = " ";
        bool in_space = false;
        for (char c : trimmed) {
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
                in_space = true;
                continue;
            }
            if (in_space) {
                padded.push_back(' ');
                in_space = false;
            }
            padded.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        }
        padded.push_back(' ');

        std::vector<double> values(dim_, 0.0);
        std::string_view view(padded);
        for (std::size_t n = kMinGram; n <= kMaxGram; ++n) {
            for (std::size_t i = 0; i + n <= view.size(); ++i) {
                const std::uint64_t h = fnv1a(view.substr(i, n));
                const double sign = (h >> 63) ? -1.0 : 1.0;
                values[h % dim_] += sign;
            }
        }
        bool any = false;
        for (double v : values) {
            any = any || v != 0.0;
        }
        if (!any) {
            // Every gram cancelled; fall back to a deterministic basis vector.
            values[fnv1a(view) % dim_] = 1.0;
        }
        return EmbeddingVector::normalized(std::move(values));
    }

private:
    std::size_t dim_;
};

/// One merchant's products and their embeddings, in ingestion order.
class Catalog {
public:
    static constexpr std::string_view kMagic = "BRCAT";
    static constexpr std::uint32_t kVersion = 1;

    explicit Catalog(std::string merchant_id = {}, std::size_t dim = 0)
        : merchant_id_(std::move(merchant_id)), dim_(dim) {}

    const std::string& merchant_id() const noexcept { return merchant_id_; }
    std::size_t size() const noexcept { return products_.size(); }
    bool empty() const noexcept { return products_.empty(); }
    /// 0 until the first product is added, unless fixed at construction.
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<Product>& products() const noexcept { return products_; }
    const std::vector<EmbeddingVector>& embeddings() const noexcept { return embeddings_; }

    bool contains(const std::string& id) const { return pos_.count(id) != 0; }

    const Product& product(const std::string& id) const { return products_[position(id)]; }
    const EmbeddingVector& embedding(const std::string& id) const { return embeddings_[position(id)]; }

    /// Appends a product. Throws DuplicateId when the id is already present.
    void add(Product p, EmbeddingVector e) {
        check(p, e);
        if (pos_.count(p.product_id)) {
            throw DuplicateId(p.product_id);
        }
        adopt_merchant(p);
        pos_[p.product_id] = products_.size();
        products_.push_back(std::move(p));
        embeddings_.push_back(std::move(e));
    }

    /// Adds or replaces in place (position kept). Returns true when an entry was replaced.
    bool upsert(Product p, EmbeddingVector e) {
        check(p, e);
        auto it = pos_.find(p.product_id);
        if (it == pos_.end()) {
            add(std::move(p), std::move(e));
            return false;
        }
        products_[it->second] = std::move(p);
        embeddings_[it->second] = std::move(e);
        return true;
    }

    ann::VectorSet vectors() const {
        ann::VectorSet out;
        out.reserve(products_.size());
        for (std::size_t i = 0; i < products_.size(); ++i) {
            out.emplace_back(products_[i].product_id, embeddings_[i]);
        }
        return out;
    }

    void save(std::ostream& out) const {
        io::write_magic(out, kMagic, kVersion);
        io::write_string(out, merchant_id_);
        io::write_u64(out, dim_);
        io::write_u64(out, products_.size());
        for (std::size_t i = 0; i < products_.size(); ++i) {
            const auto& p = products_[i];
            io::write_string(out, p.product_id);
            io::write_string(out, p.merchant_id);
            io::write_string(out, p.title);
            io::write_string(out, p.description);
            io::write_string(out, p.collection);
            io::write_f64(out, p.price);
            for (double x : embeddings_[i].values()) {
                io::write_f64(out, x);
            }
        }
    }

    static Catalog load(std::istream& in) {
        io::read_magic(in, kMagic, kVersion);
        auto merchant = io::read_string(in);
        const auto dim = io::read_u64(in);
        Catalog c(std::move(merchant), dim);
        auto n = io::read_u64(in);
        for (std::uint64_t i = 0; i < n; ++i) {
            Product p;
            p.product_id = io::read_string(in);
            p.merchant_id = io::read_string(in);
            p.title = io::read_string(in);
            p.description = io::read_string(in);
            p.collection = io::read_string(in);
            p.price = io::read_f64(in);
            std::vector<double> v(c.dim_);
            for (auto& x : v) {
                x = io::read_f64(in);
            }
            c.add(std::move(p), EmbeddingVector::from_unit(std::move(v)));
        }
        return c;
    }

private:
    std::size_t position(const std::string& id) const {
        auto it = pos_.find(id);
        if (it == pos_.end()) {
            throw NotFound("unknown product_id: " + id);
        }
        return it->second;
    }

    void check(const Product& p, const EmbeddingVector& e) {
        validate(p);
        if (!merchant_id_.empty() && !p.merchant_id.empty() && p.merchant_id != merchant_id_) {
            throw InvalidArgument("product '" + p.product_id + "' belongs to merchant '" + p.merchant_id +
                                  "', catalog is '" + merchant_id_ + "'");
        }
        if (dim_ == 0) {
            dim_ = e.dim();
        }
        if (e.dim() != dim_) {
            throw DimensionMismatch("product '" + p.product_id + "' embedding has dimension " +
                                    std::to_string(e.dim()) + ", catalog dimension " + std::to_string(dim_));
        }
    }

    void adopt_merchant(const Product& p) {
        if (merchant_id_.empty()) {
            merchant_id_ = p.merchant_id;
        }
    }

    std::string merchant_id_;
    std::size_t dim_ = 0;
    std::vector<Product> products_;
    std::vector<EmbeddingVector> embeddings_;
    std::unordered_map<std::string, std::size_t> pos_;
};

// ---------------------------------------------------------------------------
// Catalog file: one tab-separated record per line
//   product_id  merchant_id  title  description  collection  price  [embedding]
// where `embedding` is a comma-separated list of reals. Blank lines and lines
// starting with '#' are skipped.

struct Record {
    Product product;
    std::optional<std::vector<double>> embedding;
};

struct LineError {
    std::size_t line = 0;  // 1-based
    std::string message;
};

/// Parses one record line. Throws InvalidArgument describing the defect.
inline Record parse_record(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    auto fields = text::split(line, '\t');
    if (fields.size() != 6 && fields.size() != 7) {
        throw InvalidArgument("expected 6 or 7 tab-separated fields, got " + std::to_string(fields.size()));
    }
    Record r;
    r.product.product_id = std::string(text::trim(fields[0]));
    r.product.merchant_id = std::string(text::trim(fields[1]));
    r.product.title = std::string(text::trim(fields[2]));
    r.product.description = std::string(text::trim(fields[3]));
    r.product.collection = std::string(text::trim(fields[4]));
    if (r.product.merchant_id.empty()) {
        throw InvalidArgument("merchant_id is empty");
    }
    if (!text::parse_double(fields[5], r.product.price)) {
        throw InvalidArgument("price is not a number: '" + std::string(fields[5]) + "'");
    }
    validate(r.product);
    if (fields.size() == 7 && !text::trim(fields[6]).empty()) {
        std::vector<double> values;
        for (auto part : text::split(text::trim(fields[6]), ',')) {
            double x;
            if (!text::parse_double(part, x)) {
                throw InvalidArgument("embedding component is not a number: '" + std::string(part) + "'");
            }
            values.push_back(x);
        }
        r.embedding = std::move(values);
    }
    return r;
}

/// Tab-separated rendering of a record (inverse of parse_record).
inline std::string format_record(const Product& p, const EmbeddingVector* embedding = nullptr) {
    std::ostringstream out;
    out.precision(17);
    out << p.product_id << '\t' << p.merchant_id << '\t' << p.title << '\t' << p.description << '\t'
        << p.collection << '\t' << p.price;
    if (embedding) {
        out << '\t';
        for (std::size_t i = 0; i < embedding->dim(); ++i) {
            out << (i ? "," : "") << (*embedding)[i];
        }
    }
    return out.str();
}

/// Embeds a record: the supplied vector when present, otherwise the embedder
/// on the product descriptor.
inline EmbeddingVector embed_record(const Record& r, const Embedder& embedder) {
    if (r.embedding) {
        if (r.embedding->size() != embedder.dim()) {
            throw DimensionMismatch("embedding has " + std::to_string(r.embedding->size()) +
                                    " components, expected " + std::to_string(embedder.dim()));
        }
        return EmbeddingVector::normalized(*r.embedding);
    }
    return embedder.embed(r.product.descriptor());
}

struct IngestResult {
    Catalog catalog;
    std::vector<LineError> errors;
};

/// Reads a single-merchant catalog. Malformed lines are reported and skipped;
/// a duplicate product_id aborts with DuplicateId. When `merchant_id` is empty
/// the first valid record fixes the catalog's merchant.
inline IngestResult ingest_catalog(std::istream& in, const Embedder& embedder, std::string merchant_id = {}) {
    IngestResult result{Catalog(std::move(merchant_id), embedder.dim()), {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        Record r;
        EmbeddingVector e;
        try {
            r = parse_record(line);
            const auto& m = result.catalog.merchant_id();
            if (!m.empty() && r.product.merchant_id != m) {
                throw InvalidArgument("merchant_id '" + r.product.merchant_id + "' does not match catalog merchant '" +
                                      m + "'");
            }
            if (result.catalog.contains(r.product.product_id)) {
                throw DuplicateId(r.product.product_id);
            }
            e = embed_record(r, embedder);
        } catch (const DuplicateId&) {
            throw;
        } catch (const Error& err) {
            result.errors.push_back({lineno, err.what()});
            continue;
        }
        result.catalog.add(std::move(r.product), std::move(e));
    }
    return result;
}

struct UniverseResult {
    std::vector<Catalog> catalogs;  // first-appearance order of merchants
    std::vector<LineError> errors;
};

/// Reads a multi-merchant catalog file, one Catalog per merchant_id.
inline UniverseResult ingest_universe(std::istream& in, const Embedder& embedder) {
    UniverseResult result;
    std::unordered_map<std::string, std::size_t> by_merchant;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        Record r;
        EmbeddingVector e;
        try {
            r = parse_record(line);
            e = embed_record(r, embedder);
        } catch (const Error& err) {
            result.errors.push_back({lineno, err.what()});
            continue;
        }
        auto [it, inserted] = by_merchant.try_emplace(r.product.merchant_id, result.catalogs.size());
        if (inserted) {
            result.catalogs.emplace_back(r.product.merchant_id, embedder.dim());
        }
        result.catalogs[it->second].add(std::move(r.product), std::move(e));
    }
    return result;
}

/// Embeds `product` and writes it into both the catalog and the live index.
/// An existing id is replaced (tombstone + reinsert in the index); re-applying
/// an identical product is a no-op.
inline void upsert_product(Catalog& catalog, ann::HnswIndex& index, Product product, const Embedder& embedder,
                           std::optional<EmbeddingVector> supplied = std::nullopt) {
    validate(product);
    if (product.merchant_id.empty()) {
        product.merchant_id = catalog.merchant_id();
    }
    EmbeddingVector e = supplied ? std::move(*supplied) : embedder.embed(product.descriptor());
    if (e.dim() != embedder.dim()) {
        throw DimensionMismatch("upsert: embedding dimension " + std::to_string(e.dim()) + ", expected " +
                                std::to_string(embedder.dim()));
    }
    if (catalog.contains(product.product_id) && catalog.product(product.product_id) == product &&
        catalog.embedding(product.product_id) == e && index.contains(product.product_id)) {
        return;
    }
    const std::string id = product.product_id;
    catalog.upsert(std::move(product), e);
    index.upsert(id, e);
}

}  // namespace breadth::catalog
