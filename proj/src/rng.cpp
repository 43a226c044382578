// Copyright 2026 The qamlz Authors
//
//    Licensed under the Apache License, Version 2.0 (the "License");
//    you may not use this file except in compliance with the License.
//    You may obtain a copy of the License at
//
//        http://www.apache.org/licenses/LICENSE-2.0
//
//    Unless required by applicable law or agreed to in writing, software
//    distributed under the License is distributed on an "AS IS" BASIS,
//    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//    See the License for the specific language governing permissions and
//    limitations under the License.

#include "qamlz/rng.hpp"

#include <cmath>

namespace qamlz {

namespace {

std::mt19937_64 seeded_engine(const std::uint64_t* first, const std::uint64_t* last) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * static_cast<std::size_t>(last - first) + 1);
    for (auto it = first; it != last; ++it) {
        words.push_back(static_cast<std::uint32_t>(*it & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(*it >> 32));
    }
    // Length word keeps keys like {1} and {1, 0} distinct.
    words.push_back(static_cast<std::uint32_t>(last - first));
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::initializer_list<std::uint64_t> key) : engine_(seeded_engine(key.begin(), key.end())) {}

Rng::Rng(const std::vector<std::uint64_t>& key)
    : engine_(seeded_engine(key.data(), key.data() + key.size())) {}

std::uint64_t Rng::below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

}  // namespace qamlz
