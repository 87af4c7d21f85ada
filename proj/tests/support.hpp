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

// Test-only helpers: independent oracles and scratch files.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/float128.hpp>

namespace breadth::oracle {

using Hp = boost::multiprecision::float128;

/// Normalized entropy of raw non-negative scores evaluated in IEEE quad
/// precision (113-bit significand), straight from the definition.
inline double hp_broadness(const std::vector<double>& raw) {
    const std::size_t k = raw.size();
    if (k <= 1) {
        return 0.0;
    }
    Hp total = 0;
    for (double s : raw) {
        total += Hp(s);
    }
    Hp h = 0;
    for (double s : raw) {
        if (s > 0) {
            Hp p = Hp(s) / total;
            h -= p * log(p);
        }
    }
    Hp b = h / log(Hp(k));
    return b.convert_to<double>();
}

inline std::filesystem::path scratch_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "breadth-tests";
    std::filesystem::create_directories(dir);
    return dir / (name + "-" + std::to_string(std::random_device{}()));
}

}  // namespace breadth::oracle
