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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace qamlz {

/// Purpose tags mixed into stream keys so independent consumers never share
/// a random stream.
enum class Stream : std::uint64_t {
    Generate = 1,
    Split = 2,
    Gauge = 3,
    Anneal = 4,
    Flip = 5,
    Vote = 6,
    Training = 7,
};

/// Deterministic random source keyed by a tuple of integers.
///
/// The engine (mt19937_64) and the seeding procedure (seed_seq) are fully
/// specified by the standard, and the variate conversions below are written
/// out explicitly, so a given key yields the same stream on every platform.
/// Standard distributions are avoided because their algorithms are
/// implementation-defined.
class Rng {
public:
    explicit Rng(std::initializer_list<std::uint64_t> key);
    explicit Rng(const std::vector<std::uint64_t>& key);

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Unbiased integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal variate (Marsaglia polar method).
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform choice from {-1, +1}.
    int spin() { return (engine_() >> 63) ? 1 : -1; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline std::uint64_t stream_key(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace qamlz
