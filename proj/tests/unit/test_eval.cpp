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

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "qamlz/error.hpp"
#include "qamlz/eval.hpp"
#include "qamlz/rng.hpp"

using namespace qamlz;

namespace {

ScoredEvents random_scores(std::size_t n, double shift, Rng& rng) {
    ScoredEvents ev;
    for (std::size_t k = 0; k < n; ++k) {
        ev.scores.push_back(std::round((rng.normal() + shift) * 100) / 100);
        ev.weights.push_back(0.2 + rng.uniform());
    }
    return ev;
}

GeneratorConfig gaussian_generator(std::size_t dim, double separation) {
    GeneratorConfig desc;
    for (std::size_t v = 0; v < dim; ++v) desc.schema.push_back("x" + std::to_string(v));
    std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
    for (std::size_t v = 0; v < dim; ++v) cov[v][v] = 1.0;
    desc.signal = {Process::Signal, 1.0, std::vector<double>(dim, separation / 2), cov};
    desc.backgrounds = {{Process::WJets, 0.5, std::vector<double>(dim, -separation / 2), cov},
                        {Process::TTbar, 0.5, std::vector<double>(dim, -separation / 2), cov}};
    desc.signal_fraction = 0.5;
    desc.signal_yield = 100.0;
    desc.background_yield = 1000.0;
    return desc;
}

FeatureSet all_columns(const GeneratorConfig& desc, std::size_t bins = 10) {
    FeatureSet fs;
    fs.variables = desc.schema;
    fs.n_bins = bins;
    return fs;
}

TrainedModel zero_model(const Dataset& train, const FeatureSet& fs, double delta, int offset_range) {
    TrainedModel m;
    m.pipeline = FeaturePipeline::fit(train, fs);
    m.augmentation = AugmentedClassifierSet(m.pipeline.size(), delta, offset_range);
    m.mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.augmentation.size()));
    return m;
}

}  // namespace

TEST_SUITE("strong classifier") {
    TEST_CASE("cancellation example") {
        const AugmentedClassifierSet aug(2, 0.0, 0);
        Eigen::VectorXd mu(2);
        mu << 1, -1;
        CHECK(strong_score(aug, mu, std::vector<double>{0.3, 0.7}) == 0.0);
        mu << 1, 1;
        CHECK(strong_score(aug, mu, std::vector<double>{0.3, -0.7}) == 0.0);
        CHECK(strong_score(aug, mu, std::vector<double>{0.3, 0.7}) == 1.0);
    }

    TEST_CASE("zero weights score every event at zero") {
        const GeneratorConfig desc = gaussian_generator(3, 1.0);
        const Dataset d = generate_synthetic(desc, 200, 1);
        const TrainedModel m = zero_model(d, all_columns(desc), 0.1, 1);
        for (double s : strong_scores(m, d)) CHECK(s == 0.0);
    }

    TEST_CASE("batch scores match a naive per-event sum") {
        const GeneratorConfig desc = gaussian_generator(3, 1.0);
        const Dataset d = generate_synthetic(desc, 100, 2);
        TrainedModel m = zero_model(d, all_columns(desc), 0.1, 2);
        Rng rng{3};
        for (Eigen::Index k = 0; k < m.mu.size(); ++k) m.mu(k) = 2 * rng.uniform() - 1;
        const auto batch = strong_scores(m, d);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto h = m.pipeline.transform(d, d.events()[i]);
            const auto c = oracle::classifier_outputs(h, 0.1, 2);
            double r = 0.0;
            for (std::size_t k = 0; k < c.size(); ++k) r += m.mu(static_cast<Eigen::Index>(k)) * c[k];
            CHECK(std::abs(batch[i] - r) < 1e-12);
            CHECK(std::abs(strong_score(m, d, d.events()[i]) - r) < 1e-12);
        }
    }

    TEST_CASE("schema mismatch") {
        const GeneratorConfig desc = gaussian_generator(2, 1.0);
        const Dataset d = generate_synthetic(desc, 50, 4);
        const TrainedModel m = zero_model(d, all_columns(desc), 0.1, 0);
        Dataset other({"y0", "y1"});
        CHECK_THROWS_AS(strong_scores(m, other), DataError);
    }
}

TEST_SUITE("figure of merit") {
    TEST_CASE("reference values") {
        CHECK(fom(0.0, 1000.0, 0.2) == 0.0);
        CHECK(fom(0.0, 3.0, 0.0) == 0.0);
        const double v = fom(100, 1000, 0.2);
        CHECK(std::abs(v - static_cast<double>(oracle::fom_direct(100, 1000, 0.2))) < 1e-9);
        CHECK(std::abs(v - 0.4784) < 5e-4);
        const double limit = std::sqrt(2 * (1100 * std::log(1.1) - 100));
        CHECK(std::abs(limit - 3.1117) < 1e-4);
        CHECK(std::abs(fom(100, 1000, 1e-9) - limit) / limit < 1e-3);
        CHECK(asimov(100, 1000) == doctest::Approx(limit).epsilon(1e-12));
        CHECK(fom(100, 1000, 0.0) == asimov(100, 1000));
    }

    TEST_CASE("agrees with the direct form over a grid") {
        for (double s : {0.5, 3.0, 40.0, 700.0})
            for (double b : {0.1, 5.0, 300.0, 2e5})
                for (double f : {0.01, 0.2, 0.5}) {
                    const double want = static_cast<double>(oracle::fom_direct(s, b, f));
                    CHECK(fom(s, b, f) == doctest::Approx(want).epsilon(1e-8));
                }
    }

    TEST_CASE("monotone in S, decreasing in f") {
        double prev = 0.0;
        for (double s = 1; s < 500; s *= 1.5) {
            const double v = fom(s, 2000, 0.2);
            CHECK(v > prev);
            prev = v;
        }
        CHECK(fom(50, 200, 0.1) > fom(50, 200, 0.3));
    }

    TEST_CASE("limit form for tiny f") {
        Rng rng{5};
        for (int k = 0; k < 50; ++k) {
            const double s = 1 + 500 * rng.uniform(), b = 1 + 5000 * rng.uniform();
            CHECK(std::abs(fom(s, b, 1e-9) - asimov(s, b)) / asimov(s, b) < 1e-3);
        }
    }

    TEST_CASE("domain errors and clamping flag") {
        CHECK_THROWS_AS(fom(1, 0, 0.2), DataError);
        CHECK_THROWS_AS(fom(-1, 5, 0.2), DataError);
        CHECK_THROWS_AS(fom(1, -5, 0.2), DataError);
        CHECK_THROWS_AS(FomParams{-0.1}.validate(), ConfigError);
        bool clamped = true;
        fom(10, 100, 0.2, &clamped);
        CHECK_FALSE(clamped);
    }
}

TEST_SUITE("cut scan") {
    TEST_CASE("every grid value matches a per-cut recomputation") {
        Rng rng{6};
        const ScoredEvents sig = random_scores(400, 1.0, rng), bkg = random_scores(600, -0.5, rng);
        ScanOptions opts;
        opts.n_points = 101;
        const FomCurve c = fom_scan(sig, bkg, {}, opts);
        REQUIRE(c.cuts.size() == 101);
        bool any_invalid = false;
        for (std::size_t k = 0; k < 101; ++k) {
            const double s = oracle::yield_above(sig.scores, sig.weights, c.cuts[k]);
            const double b = oracle::yield_above(bkg.scores, bkg.weights, c.cuts[k]);
            const auto ns = oracle::count_above(sig.scores, c.cuts[k]);
            const auto nb = oracle::count_above(bkg.scores, c.cuts[k]);
            CHECK(c.signal_yield[k] == doctest::Approx(s).epsilon(1e-12));
            CHECK(c.background_yield[k] == doctest::Approx(b).epsilon(1e-12));
            CHECK(c.n_signal[k] == ns);
            CHECK(c.n_background[k] == nb);
            const bool valid = ns >= 20 && nb >= 20 && b > 0;
            CHECK(c.valid[k] == valid);
            any_invalid = any_invalid || !valid;
            if (valid)
                CHECK(c.fom_values[k] == doctest::Approx(static_cast<double>(oracle::fom_direct(s, b, 0.2))).epsilon(1e-8));
        }
        CHECK(any_invalid);
        // The first cut keeps everything.
        CHECK(c.n_signal[0] == 400);
        CHECK(c.n_background[0] == 600);
        REQUIRE(c.has_valid_cut());
        for (std::size_t k = 0; k < 101; ++k)
            if (c.valid[k]) CHECK(c.fom_values[k] <= c.best_fom);
        CHECK(c.S_at_best == c.signal_yield[*c.best_index]);
    }

    TEST_CASE("identical distributions give the no-cut value") {
        Rng rng{7};
        ScoredEvents sig = random_scores(3000, 0.0, rng);
        ScoredEvents bkg = random_scores(3000, 0.0, rng);
        for (auto& w : sig.weights) w *= 0.1;
        double s_tot = 0, b_tot = 0;
        for (double w : sig.weights) s_tot += w;
        for (double w : bkg.weights) b_tot += w;
        const FomCurve c = fom_scan(sig, bkg, {});
        const double base = fom(s_tot, b_tot, 0.2);
        CHECK(c.fom_values[0] == doctest::Approx(base));
        CHECK(c.best_fom < 1.5 * base);
    }

    TEST_CASE("separated classes") {
        ScoredEvents sig, bkg;
        for (int k = 0; k < 100; ++k) {
            sig.scores.push_back(1 + k * 0.01);
            sig.weights.push_back(1.0);
            bkg.scores.push_back(-1 - k * 0.01);
            bkg.weights.push_back(10.0);
        }
        const FomCurve c = fom_scan(sig, bkg, {});
        REQUIRE(c.has_valid_cut());
        CHECK(c.best_cut < 0.0);
        CHECK(c.best_fom > fom(100, 1000, 0.2));
        // Above the gap no background survives, so those cuts are undefined.
        for (std::size_t k = 0; k < c.cuts.size(); ++k)
            if (c.cuts[k] >= -1.0) {
                CHECK_FALSE(c.valid[k]);
                CHECK(std::isnan(c.fom_values[k]));
            }
    }

    TEST_CASE("no valid cut is distinguished") {
        const ScoredEvents sig{{0.1, 0.2}, {1, 1}}, bkg{{0.0, 0.3}, {1, 1}};
        const FomCurve c = fom_scan(sig, bkg, {});
        CHECK_FALSE(c.has_valid_cut());
        CHECK(std::isnan(c.best_fom));
        const nlohmann::json j = c;
        CHECK(j.at("best_fom").is_null());
        ScanOptions loose;
        loose.min_events = 1;
        CHECK(fom_scan(sig, bkg, {}, loose).has_valid_cut());
    }

    TEST_CASE("constant scores give a flat curve") {
        const ScoredEvents sig{std::vector<double>(50, 0.0), std::vector<double>(50, 1.0)};
        const ScoredEvents bkg{std::vector<double>(50, 0.0), std::vector<double>(50, 4.0)};
        const FomCurve c = fom_scan(sig, bkg, {});
        for (std::size_t k = 0; k < c.cuts.size(); ++k) CHECK(c.fom_values[k] == fom(50, 200, 0.2));
        CHECK(c.best_fom == fom(50, 200, 0.2));
    }

    TEST_CASE("explicit grids") {
        Rng rng{8};
        const ScoredEvents sig = random_scores(100, 1, rng), bkg = random_scores(100, 0, rng);
        ScanOptions opts;
        opts.grid = std::vector<double>{-0.5, 0.0, 0.5};
        CHECK(fom_scan(sig, bkg, {}, opts).cuts == *opts.grid);
        opts.grid = std::vector<double>{0.5, 0.0};
        CHECK_THROWS_AS(fom_scan(sig, bkg, {}, opts), ConfigError);
        CHECK_THROWS_AS(fom_scan(ScoredEvents{}, bkg, {}), DataError);
    }

    TEST_CASE("CSV output re-reads to the same values") {
        Rng rng{9};
        const ScoredEvents sig = random_scores(200, 1, rng), bkg = random_scores(300, 0, rng);
        ScanOptions opts;
        opts.n_points = 21;
        const FomCurve c = fom_scan(sig, bkg, {}, opts);
        std::ostringstream out;
        write_fom_curve(out, c);
        std::istringstream in(out.str());
        std::string line;
        std::getline(in, line);
        CHECK(line == "cut,fom,S,B,n_S,n_B,valid");
        std::size_t k = 0;
        while (std::getline(in, line)) {
            std::vector<std::string> f;
            std::stringstream ss(line);
            for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
            REQUIRE(f.size() == 7);
            if (f[6] == "1") {
                const double v = std::stod(f[1]);
                CHECK(v == c.fom_values[k]);
                CHECK(v == doctest::Approx(fom(std::stod(f[2]), std::stod(f[3]), 0.2)).epsilon(1e-12));
            } else {
                CHECK(f[6] == "0");
            }
            ++k;
        }
        CHECK(k == 21);
    }

    TEST_CASE("dataset overload splits by tag") {
        const GeneratorConfig desc = gaussian_generator(1, 2.0);
        const Dataset d = generate_synthetic(desc, 500, 10);
        const auto x = d.column("x0");
        const FomCurve c = fom_scan(d, x, {});
        CHECK(c.signal_yield[0] == doctest::Approx(d.signal_weight()));
        CHECK(c.background_yield[0] == doctest::Approx(d.background_weight()));
        CHECK(c.fom_values[0] == doctest::Approx(baseline_fom(d, {})));
        CHECK(c.best_fom > baseline_fom(d, {}));
        CHECK_THROWS_AS(fom_scan(d, std::vector<double>(3, 0.0), {}), DataError);
    }
}

TEST_SUITE("run spread") {
    TEST_CASE("needs at least two runs") {
        const Dataset d = generate_synthetic(gaussian_generator(2, 1.0), 200, 11);
        const SampleSplit split = split_samples(d, 1);
        const FeaturePipeline p = FeaturePipeline::fit(split.train, all_columns(gaussian_generator(2, 1.0)));
        CHECK_THROWS_AS(run_uncertainty(ZoomConfig{}, 1, split, p), ConfigError);
    }

    TEST_CASE("deterministic pipeline has zero spread") {
        const GeneratorConfig desc = gaussian_generator(3, 1.0);
        const SampleSplit split = split_samples(generate_synthetic(desc, 1200, 12), 2);
        const FeaturePipeline p = FeaturePipeline::fit(split.train, all_columns(desc));
        ZoomConfig cfg;
        cfg.iterations = 3;
        cfg.offset_range = 1;
        cfg.delta = 0.05;
        cfg.p_flip = cfg.q_flip = {0.0};
        cfg.solver.kind = SolverKind::Exact;
        cfg.solver.schedule.n_gauges = {1};
        const UncertaintyReport r = run_uncertainty(cfg, 3, split, p);
        CHECK(r.best_foms.size() == 3);
        CHECK(r.std == 0.0);
        CHECK(r.mean == r.best_foms[0]);
        CHECK(r.seeds[0] != r.seeds[1]);
    }

    TEST_CASE("annealing runs spread and report mean and deviation") {
        const GeneratorConfig desc = gaussian_generator(4, 0.6);
        const SampleSplit split = split_samples(generate_synthetic(desc, 3000, 13), 3);
        const FeaturePipeline p = FeaturePipeline::fit(split.train, all_columns(desc));
        ZoomConfig cfg;
        cfg.iterations = 4;
        cfg.solver.schedule.n_reads = 5;
        cfg.solver.schedule.sweeps = 20;
        cfg.solver.schedule.n_gauges = {3, 2};
        cfg.seed = 5;
        const UncertaintyReport r = run_uncertainty(cfg, 10, split, p, {}, {}, 2);
        CHECK(r.std > 0.0);
        double mean = 0.0;
        for (double v : r.best_foms) mean += v / 10;
        CHECK(r.mean == doctest::Approx(mean));
        std::ostringstream out;
        write_uncertainty(out, r);
        const std::string text = out.str();
        CHECK(text.rfind("run,seed,best_fom,best_cut\n", 0) == 0);
        CHECK(std::count(text.begin(), text.end(), '\n') == 11);
        const UncertaintyReport again = run_uncertainty(cfg, 10, split, p, {}, {}, 1);
        CHECK(again.best_foms == r.best_foms);
    }
}

TEST_SUITE("over-training") {
    TEST_CASE("identical and disjoint samples") {
        const std::vector<double> a = {1, 2, 3, 4, 5};
        const auto same = ks_test(a, a);
        CHECK(same.statistic == 0.0);
        CHECK(same.p_value == doctest::Approx(1.0));
        const auto apart = ks_test(a, std::vector<double>{10, 11, 12});
        CHECK(apart.statistic == 1.0);
        CHECK(apart.p_value < 0.05);
        CHECK_THROWS_AS(ks_test(a, std::vector<double>{}), DataError);
    }

    TEST_CASE("statistic matches a naive ECDF scan with ties") {
        Rng rng{14};
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> a, b;
            for (int k = 0; k < 200; ++k) a.push_back(std::round(rng.normal() * 5));
            for (int k = 0; k < 150; ++k) b.push_back(std::round(rng.normal() * 5 + 0.5));
            CHECK(ks_test(a, b).statistic == doctest::Approx(oracle::ks_statistic(a, b)).epsilon(1e-12));
        }
    }

    TEST_CASE("same-distribution draws rarely reject") {
        int accepted = 0;
        for (std::uint64_t trial = 0; trial < 100; ++trial) {
            Rng rng{15, trial};
            std::vector<double> a(5000), b(5000);
            for (auto& x : a) x = rng.normal();
            for (auto& x : b) x = rng.normal();
            accepted += ks_test(a, b).p_value > 0.01;
        }
        CHECK(accepted >= 95);
    }

    TEST_CASE("per-process rows") {
        const GeneratorConfig desc = gaussian_generator(1, 1.0);
        const Dataset train = generate_synthetic(desc, 600, 16), test = generate_synthetic(desc, 600, 17);
        const auto rows = overtraining_check(train, train.column("x0"), test, test.column("x0"));
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].process == Process::Signal);
        CHECK(rows[1].process == Process::WJets);
        CHECK(rows[2].process == Process::TTbar);
        std::size_t n = 0;
        for (const auto& r : rows) n += r.n_train;
        CHECK(n == 600);
        std::ostringstream out;
        write_overtraining(out, rows);
        CHECK(out.str().rfind("process,n_train,n_test,ks_statistic,p_value\n", 0) == 0);
        CHECK_THROWS_AS(overtraining_check(train, std::vector<double>(2), test, test.column("x0")), DataError);
    }
}

TEST_SUITE("diagnostics") {
    TEST_CASE("variable ranking") {
        GeneratorConfig desc = gaussian_generator(3, 0.0);
        desc.signal.mean = {1.5, 0.0, -0.8};
        const Dataset d = generate_synthetic(desc, 4000, 18);
        const auto ranks = rank_variables(d, desc.schema, {});
        REQUIRE(ranks.size() == 3);
        CHECK(ranks[0].variable == "x0");
        CHECK(ranks[0].direction == 1);
        CHECK(ranks[1].variable == "x2");
        CHECK(ranks[1].direction == -1);
        CHECK(ranks[2].variable == "x1");
        const double base = baseline_fom(d, {});
        CHECK(ranks[2].best_fom < 1.3 * base);
    }

    TEST_CASE("a perfect discriminant reaches the best achievable value") {
        const GeneratorConfig desc = gaussian_generator(1, 1.0);
        const Dataset raw = generate_synthetic(desc, 2000, 19);
        std::vector<Event> events = raw.events();
        for (auto& e : events) e.values[0] = e.tag;
        const Dataset d(raw.schema(), events);
        // Keeping all the signal and no background is undefined, so the best
        // valid cut is the one that keeps everything.
        const auto r = rank_variables(d, {"x0"}, {});
        CHECK(r[0].best_fom == doctest::Approx(baseline_fom(d, {})));
    }

    TEST_CASE("weighted AUC") {
        const ScoredEvents sig{{1, 2, 3}, {1, 1, 1}}, bkg{{-1, 0}, {1, 1}};
        CHECK(weighted_auc(sig, bkg) == 1.0);
        CHECK(weighted_auc(bkg, sig) == 0.0);
        const ScoredEvents same{{0, 0}, {1, 3}};
        CHECK(weighted_auc(same, same) == 0.5);
        Rng rng{20};
        const ScoredEvents a = random_scores(500, 0.0, rng), b = random_scores(500, 0.0, rng);
        CHECK(std::abs(weighted_auc(a, b) - 0.5) < 0.06);
    }
}
