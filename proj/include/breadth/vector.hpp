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

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "breadth/common.hpp"

namespace breadth {

/// Unit-L2-norm embedding. Construction normalizes; a zero vector is rejected.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Normalizes `values` to unit length.
    static EmbeddingVector normalized(std::vector<double> values) {
        if (values.empty()) {
            throw InvalidArgument("embedding must have positive dimension");
        }
        double sq = 0.0;
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw InvalidArgument("embedding contains a non-finite value");
            }
            sq += v * v;
        }
        if (!(sq > 0.0)) {
            throw InvalidArgument("embedding has zero norm");
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : values) {
            v *= inv;
        }
        return EmbeddingVector(std::move(values));
    }

    /// Wraps values that are already unit-norm (e.g. read back from a snapshot).
    static EmbeddingVector from_unit(std::vector<double> values) { return EmbeddingVector(std::move(values)); }

    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double norm() const noexcept {
        double sq = 0.0;
        for (double v : values_) {
            sq += v * v;
        }
        return std::sqrt(sq);
    }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}

    std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw DimensionMismatch("cosine: dimension " + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()));
    }
    double c = dot(a.values(), b.values());
    return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

}  // namespace breadth
