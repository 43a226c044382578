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

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "qamlz/error.hpp"
#include "qamlz/rng.hpp"
#include "qamlz/zoom.hpp"

using namespace qamlz;

namespace {

struct Toy {
    std::vector<std::vector<double>> rows;
    std::vector<int> tags;
    std::vector<double> weights;
    CouplingMatrices cm;
};

Toy random_toy(std::size_t events, std::size_t n_var, double delta, int offset_range, Rng& rng) {
    Toy toy;
    Eigen::MatrixXd h(static_cast<Eigen::Index>(events), static_cast<Eigen::Index>(n_var));
    for (std::size_t t = 0; t < events; ++t) {
        const int tag = rng.spin();
        std::vector<double> row;
        for (std::size_t v = 0; v < n_var; ++v) {
            // Informative but noisy responses.
            const double x = std::clamp(0.3 * tag + 0.8 * (2 * rng.uniform() - 1), -1.0, 1.0);
            h(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(v)) = x;
            row.push_back(x);
        }
        toy.rows.push_back(row);
        toy.tags.push_back(tag);
        toy.weights.push_back(0.5 + rng.uniform());
    }
    toy.cm = build_couplings(AugmentedClassifierSet(n_var, delta, offset_range), h, toy.tags, toy.weights);
    return toy;
}

ZoomConfig exact_config(std::size_t iterations) {
    ZoomConfig cfg;
    cfg.iterations = iterations;
    cfg.p_flip = {0.0};
    cfg.q_flip = {0.0};
    cfg.offset_range = 0;
    cfg.solver.kind = SolverKind::Exact;
    cfg.solver.schedule.n_gauges = {1};
    return cfg;
}

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Dataset separable_toy(std::size_t n) {
    Dataset d({"x"});
    for (std::size_t k = 0; k < n; ++k) {
        Event e;
        e.id = k;
        e.tag = k % 2 ? 1 : -1;
        e.values = {static_cast<double>(e.tag)};
        e.weight = 1.0;
        e.process = e.tag > 0 ? Process::Signal : Process::Other;
        d.add(e);
    }
    return d;
}

FeatureSet plain_x() {
    FeatureSet desc;
    desc.variables = {"x"};
    desc.mode = WeakMode::NormalizedOnly;
    return desc;
}

}  // namespace

TEST_SUITE("zoom update") {
    TEST_CASE("arithmetic") {
        CHECK(zoom_update(Eigen::VectorXd::Zero(1), Spins{1}, 1.0)(0) == 1.0);
        CHECK(zoom_update(Eigen::VectorXd::Constant(1, 0.5), Spins{-1}, 0.25)(0) == 0.25);
        CHECK_THROWS_AS(zoom_update(Eigen::VectorXd::Zero(2), Spins{1}, 1.0), DataError);
    }

    TEST_CASE("eight halving steps stay within the geometric bound") {
        Rng rng{1};
        ZoomConfig cfg;
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(30);
        for (std::size_t t = 0; t < 8; ++t) {
            Spins s(30);
            for (auto& x : s) x = static_cast<std::int8_t>(rng.spin());
            mu = zoom_update(mu, s, cfg.sigma(t));
        }
        CHECK(mu.cwiseAbs().maxCoeff() <= 1.9921875);
        CHECK(zoom_update(Eigen::VectorXd::Zero(1), Spins{1}, 0.0)(0) == 0.0);
    }

    TEST_CASE("contraction ratio") {
        ZoomConfig cfg;
        for (std::size_t t = 0; t < 20; ++t) CHECK(cfg.sigma(t + 1) / cfg.sigma(t) == 0.5);
        cfg.zoom_base = 0.3;
        for (std::size_t t = 0; t < 20; ++t) CHECK(cfg.sigma(t + 1) / cfg.sigma(t) == doctest::Approx(0.3).epsilon(1e-14));
        CHECK(cfg.sigma(0) == 1.0);
    }
}

TEST_SUITE("flip step") {
    IsingProblem chain20(Spins& s) {
        Rng setup{2024};
        std::vector<double> h(20);
        std::vector<Coupler> c;
        for (auto& x : h) x = 2 * setup.uniform() - 1;
        for (std::size_t i = 0; i + 1 < 20; ++i) c.push_back({i, i + 1, setup.uniform() - 0.5});
        s.assign(20, 1);
        for (auto& x : s) x = static_cast<std::int8_t>(setup.spin());
        return IsingProblem(h, c);
    }

    TEST_CASE("zero probabilities leave the state unchanged") {
        Spins s;
        const IsingProblem p = chain20(s);
        Rng rng{3};
        CHECK(flip_step(p, s, 0.0, 0.0, rng) == s);
    }

    TEST_CASE("ground states are never flipped without uniform noise") {
        Spins s;
        const IsingProblem p = chain20(s);
        Spins local = s;
        // Greedy descent to a state where no single flip lowers the energy.
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t i = 0; i < 20; ++i) {
                Spins t = local;
                t[i] = static_cast<std::int8_t>(-t[i]);
                if (energy(p, t) < energy(p, local)) {
                    local = t;
                    changed = true;
                }
            }
        }
        Rng rng{4};
        CHECK(flip_step(p, local, 0.99, 0.0, rng) == local);
    }

    TEST_CASE("recorded mask for 20 qubits") {
        Spins s;
        const IsingProblem p = chain20(s);
        Rng rng{7, stream_key(Stream::Flip)};
        const Spins out = flip_step(p, s, 0.3, 0.1, rng);
        std::string mask;
        for (std::size_t i = 0; i < 20; ++i) mask += out[i] != s[i] ? '1' : '0';
        CHECK(mask == "00010011011000000000");
    }

    TEST_CASE("agrees with a sequential energy-difference recomputation") {
        Rng gen{5};
        for (int trial = 0; trial < 30; ++trial) {
            Spins s;
            std::vector<double> h(12);
            for (auto& x : h) x = 2 * gen.uniform() - 1;
            std::vector<Coupler> c;
            for (std::size_t i = 0; i < 12; ++i)
                for (std::size_t j = i + 1; j < 12; ++j)
                    if (gen.uniform() < 0.4) c.push_back({i, j, gen.uniform() - 0.5});
            const IsingProblem p(h, c);
            s.resize(12);
            for (auto& x : s) x = static_cast<std::int8_t>(gen.spin());

            Rng a{100, static_cast<std::uint64_t>(trial)}, b{100, static_cast<std::uint64_t>(trial)};
            const Spins got = flip_step(p, s, 0.4, 0.05, a);
            Spins want = s;
            for (std::size_t i = 0; i < 12; ++i) {
                const double u = b.uniform();
                Spins t = want;
                t[i] = static_cast<std::int8_t>(-t[i]);
                if (energy(p, t) < energy(p, want) && u < 0.4) want = t;
            }
            for (std::size_t i = 0; i < 12; ++i)
                if (b.uniform() < 0.05) want[i] = static_cast<std::int8_t>(-want[i]);
            CHECK(got == want);
        }
    }

    TEST_CASE("default probability schedules") {
        const auto p = default_flip_probabilities(8);
        const auto q = default_uniform_flip_probabilities(8);
        REQUIRE(p.size() == 8);
        CHECK(p[0] == 0.16);
        for (std::size_t t = 1; t < 8; ++t) {
            CHECK(p[t] == p[t - 1] / 2);
            CHECK(q[t] < p[t]);
        }
    }
}

TEST_SUITE("configuration") {
    TEST_CASE("validation") {
        ZoomConfig cfg;
        CHECK_NOTHROW(cfg.validate());
        auto bad = [](auto mutate) {
            ZoomConfig c;
            mutate(c);
            CHECK_THROWS_AS(c.validate(), ConfigError);
        };
        bad([](ZoomConfig& c) { c.iterations = 0; });
        bad([](ZoomConfig& c) { c.zoom_base = 1.0; });
        bad([](ZoomConfig& c) { c.zoom_base = 0.0; });
        bad([](ZoomConfig& c) { c.p_flip = {0.1}, c.q_flip = {0.2}; });
        bad([](ZoomConfig& c) { c.p_flip = {1.0}; });
        bad([](ZoomConfig& c) { c.offset_range = -1; });
        bad([](ZoomConfig& c) { c.delta = 0.0; });
        bad([](ZoomConfig& c) { c.cutoff = 101; });
        bad([](ZoomConfig& c) { c.solver.schedule.n_excited = {0}; });
        ZoomConfig ok;
        ok.p_flip = ok.q_flip = {0.0};
        CHECK_NOTHROW(ok.validate());
    }

    TEST_CASE("defaults follow the retained protocol") {
        const ZoomConfig cfg;
        CHECK(cfg.solver.schedule.n_gauges == std::vector<std::size_t>{50, 10});
        CHECK(cfg.solver.schedule.n_excited == std::vector<std::size_t>{1});
        CHECK(cfg.iterations == 8);
        CHECK(cfg.zoom_base == 0.5);
    }

    TEST_CASE("JSON round trip") {
        ZoomConfig cfg;
        cfg.iterations = 5;
        cfg.cutoff = 85;
        cfg.fixing = true;
        cfg.solver.kind = SolverKind::ChainEmulated;
        cfg.solver.chain = {3, {1.0, 2.0}};
        cfg.solver.schedule.t_cold = 0.01;
        cfg.weighting = EventWeighting::Unit;
        cfg.seed = 99;
        const nlohmann::json j = cfg;
        const ZoomConfig back = j.get<ZoomConfig>();
        CHECK(nlohmann::json(back) == j);
        CHECK_THROWS_AS(nlohmann::json({{"solver", "bogus"}}).get<ZoomConfig>(), ConfigError);
        CHECK_THROWS_AS(nlohmann::json({{"weighting", "bogus"}}).get<ZoomConfig>(), ConfigError);
        CHECK_THROWS_AS(nlohmann::json({{"iterations", "x"}}).get<ZoomConfig>(), ConfigError);
    }
}

TEST_SUITE("zoom loop") {
    TEST_CASE("training energy never increases with exact solves") {
        Rng rng{6};
        for (int trial = 0; trial < 5; ++trial) {
            const Toy toy = random_toy(300, 4, 0.1, 1, rng);
            ZoomConfig cfg = exact_config(6);
            cfg.offset_range = 1;
            cfg.delta = 0.1;
            const ZoomResult r = run_zoom(toy.cm, nullptr, cfg);
            REQUIRE(r.history.size() == 6);
            double prev = oracle::distance(toy.rows, 0.1, 1, toy.tags, toy.weights, std::vector<double>(12, 0.0));
            for (const auto& mu : r.history) {
                const double d = oracle::distance(toy.rows, 0.1, 1, toy.tags, toy.weights, as_vector(mu));
                CHECK(d <= prev + 1e-9);
                prev = d;
            }
            for (std::size_t t = 1; t < r.trajectory.size(); ++t)
                CHECK(r.trajectory[t].train_energy <= r.trajectory[t - 1].train_energy + 1e-12);
        }
    }

    TEST_CASE("the first iteration takes the exact ground state") {
        Rng rng{7};
        const Toy toy = random_toy(200, 5, 0.0, 0, rng);
        const ZoomResult r = run_zoom(toy.cm, nullptr, exact_config(1));
        const auto best = oracle::minimize(5, [&](const oracle::SpinVec& s) {
            return oracle::distance(toy.rows, 0.0, 0, toy.tags, toy.weights, std::vector<double>(s.begin(), s.end()));
        });
        REQUIRE(best.argmin.size() == 1);
        CHECK(as_vector(r.mu) == std::vector<double>(best.argmin[0].begin(), best.argmin[0].end()));
    }

    TEST_CASE("records per-iteration diagnostics") {
        Rng rng{8};
        const Toy train = random_toy(200, 3, 0.05, 1, rng);
        const Toy test = random_toy(200, 3, 0.05, 1, rng);
        ZoomConfig cfg = exact_config(3);
        cfg.offset_range = 1;
        cfg.delta = 0.05;
        cfg.cutoff = 50;
        const ZoomResult r = run_zoom(train.cm, &test.cm, cfg);
        REQUIRE(r.trajectory.size() == 3);
        for (std::size_t t = 0; t < 3; ++t) {
            CHECK(r.trajectory[t].t == t);
            CHECK(r.trajectory[t].sigma == cfg.sigma(t));
            CHECK(r.trajectory[t].couplers == retained_couplers(36, 50));
            CHECK(r.trajectory[t].candidates == 1);
            const double want = quadratic_objective(test.cm, r.history[t]) / test.cm.total_weight;
            CHECK(r.trajectory[t].test_energy == doctest::Approx(want));
        }
        Toy other = random_toy(10, 2, 0.0, 0, rng);
        CHECK_THROWS_AS(run_zoom(train.cm, &other.cm, cfg), DataError);
    }

    TEST_CASE("thread count does not change results") {
        Rng rng{9};
        const Toy toy = random_toy(300, 4, 0.1, 2, rng);
        ZoomConfig cfg;
        cfg.iterations = 3;
        cfg.delta = 0.1;
        cfg.offset_range = 2;
        cfg.solver.schedule.n_reads = 10;
        cfg.solver.schedule.sweeps = 50;
        cfg.solver.schedule.n_gauges = {6, 3};
        cfg.solver.schedule.n_excited = {2};
        cfg.seed = 17;
        const ZoomResult a = run_zoom(toy.cm, nullptr, cfg);
        cfg.jobs = 4;
        const ZoomResult b = run_zoom(toy.cm, nullptr, cfg);
        CHECK(a.mu == b.mu);
        CHECK(a.history == b.history);
        cfg.seed = 18;
        cfg.jobs = 1;
        CHECK(run_zoom(toy.cm, nullptr, cfg).trajectory.size() == 3);
    }

    TEST_CASE("custom flip rule is used") {
        Rng rng{10};
        const Toy toy = random_toy(100, 3, 0.0, 0, rng);
        ZoomConfig cfg = exact_config(2);
        cfg.solver.schedule.n_gauges = {2};
        std::size_t calls = 0;
        const FlipRule count = [&](const IsingProblem&, Spins s, double, double, Rng&) {
            ++calls;
            return s;
        };
        run_zoom(toy.cm, nullptr, cfg, count);
        CHECK(calls == 4);
    }

    TEST_CASE("fixing and chain backends run through the loop") {
        Rng rng{11};
        const Toy toy = random_toy(300, 3, 0.1, 1, rng);
        ZoomConfig cfg = exact_config(3);
        cfg.offset_range = 1;
        cfg.delta = 0.1;
        cfg.fixing = true;
        const ZoomResult fixed = run_zoom(toy.cm, nullptr, cfg);
        cfg.fixing = false;
        const ZoomResult plain = run_zoom(toy.cm, nullptr, cfg);
        cfg.fixing = true;
        // Fixed spins agree with every ground state, so both paths reach the same energy.
        CHECK(fixed.trajectory.back().train_energy == doctest::Approx(plain.trajectory.back().train_energy));
        CHECK(fixed.trajectory.front().mean_fixed_spins >= 0.0);

        ZoomConfig chain = cfg;
        chain.fixing = false;
        chain.solver.kind = SolverKind::ChainEmulated;
        chain.solver.chain = {2, {0.1}};
        chain.solver.schedule.n_reads = 20;
        chain.solver.schedule.sweeps = 20;
        const ZoomResult r = run_zoom(toy.cm, nullptr, chain);
        double broken = 0.0;
        for (const auto& rec : r.trajectory) {
            CHECK(rec.broken_chain_fraction >= 0.0);
            CHECK(rec.broken_chain_fraction <= 1.0);
            broken += rec.broken_chain_fraction;
        }
        CHECK(broken > 0.0);
    }
}

TEST_SUITE("training") {
    TEST_CASE("separable toy learns a positive weight") {
        const Dataset train = separable_toy(100);
        const FeaturePipeline pipeline = FeaturePipeline::fit(train, plain_x());
        const TrainedModel m = run_qamlz(train, Dataset({"x"}), pipeline, exact_config(2));
        REQUIRE(m.mu.size() == 1);
        CHECK(m.mu(0) > 0.0);
        std::vector<std::vector<double>> rows;
        std::vector<int> tags;
        std::vector<double> weights;
        for (const auto& e : train.events()) {
            rows.push_back(pipeline.transform(train, e));
            tags.push_back(e.tag);
            weights.push_back(e.weight);
        }
        CHECK(oracle::distance(rows, 0, 0, tags, weights, {m.mu(0)}) < oracle::distance(rows, 0, 0, tags, weights, {0.0}));
        CHECK(m.trajectory.size() == 2);
        CHECK(m.trajectory.back().test_energy == 0.0);
    }

    TEST_CASE("identical seeds give byte-identical models") {
        const GeneratorConfig desc = gaussian_toy_generator(0.5, -0.5, 1.0);
        const Dataset train = generate_synthetic(desc, 400, 1);
        const Dataset test = generate_synthetic(desc, 400, 2);
        FeatureSet fs = plain_x();
        fs.mode = WeakMode::DensityRatio;
        fs.n_bins = 10;
        const FeaturePipeline pipeline = FeaturePipeline::fit(train, fs);
        ZoomConfig cfg;
        cfg.iterations = 3;
        cfg.solver.schedule.n_reads = 10;
        cfg.solver.schedule.sweeps = 50;
        cfg.solver.schedule.n_gauges = {4, 2};
        cfg.seed = 3;
        const auto a = nlohmann::json(run_qamlz(train, test, pipeline, cfg)).dump();
        const auto b = nlohmann::json(run_qamlz(train, test, pipeline, cfg)).dump();
        CHECK(a == b);

        const TrainedModel back = nlohmann::json::parse(a).get<TrainedModel>();
        CHECK(nlohmann::json(back).dump() == a);
        CHECK(back.settings.at("seed") == 3);
    }

    TEST_CASE("unit weighting ignores event weights") {
        Dataset d = separable_toy(40);
        std::vector<Event> events = d.events();
        for (auto& e : events) e.weight = 3.5;
        const Dataset heavy({"x"}, events);
        const FeaturePipeline pipeline = FeaturePipeline::fit(d, plain_x());
        const AugmentedClassifierSet aug(1, 0.0, 0);
        const auto unit = dataset_couplings(heavy, pipeline, aug, EventWeighting::Unit);
        const auto event = dataset_couplings(heavy, pipeline, aug, EventWeighting::Event);
        CHECK(unit.total_weight == doctest::Approx(40.0));
        CHECK(event.total_weight == doctest::Approx(140.0));
        CHECK(parse_weighting(weighting_name(EventWeighting::Unit)) == EventWeighting::Unit);
    }

    TEST_CASE("refusals") {
        const Dataset train = separable_toy(10);
        const FeaturePipeline pipeline = FeaturePipeline::fit(train, plain_x());
        CHECK_THROWS_AS(run_qamlz(train, Dataset({"y"}), pipeline, exact_config(1)), DataError);
        CHECK_THROWS_AS(run_qamlz(Dataset({"x"}), Dataset({"x"}), pipeline, exact_config(1)), DataError);
        ZoomConfig big = exact_config(1);
        big.offset_range = 12;
        big.delta = 0.01;
        CHECK_THROWS_AS(run_qamlz(train, Dataset({"x"}), pipeline, big), ConfigError);
        CHECK_THROWS_AS(nlohmann::json({{"format", "other"}}).get<TrainedModel>(), DataError);
    }
}
