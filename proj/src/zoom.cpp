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

#include "qamlz/zoom.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"
#include "qamlz/error.hpp"
#include "qamlz/rng.hpp"

namespace qamlz {

Eigen::VectorXd zoom_update(const Eigen::VectorXd& mu, std::span<const std::int8_t> s, double sigma) {
    if (static_cast<std::size_t>(mu.size()) != s.size())
        throw DataError("zoom update: mu has length " + std::to_string(mu.size()) + ", spins have " +
                        std::to_string(s.size()));
    Eigen::VectorXd out = mu;
    for (std::size_t i = 0; i < s.size(); ++i) out(static_cast<Eigen::Index>(i)) += s[i] * sigma;
    return out;
}

Spins flip_step(const IsingProblem& hamiltonian, Spins s, double p_flip, double q_flip, Rng& rng) {
    const std::size_t n = hamiltonian.size();
    if (s.size() != n) throw DataError("flip step: spin vector has wrong length");
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (const auto& c : hamiltonian.couplers()) {
        adj[c.i].emplace_back(c.j, c.value);
        adj[c.j].emplace_back(c.i, c.value);
    }
    std::vector<double> field(hamiltonian.h());
    for (const auto& c : hamiltonian.couplers()) {
        field[c.i] += c.value * s[c.j];
        field[c.j] += c.value * s[c.i];
    }
    auto flip = [&](std::size_t i) {
        s[i] = static_cast<std::int8_t>(-s[i]);
        for (const auto& [j, v] : adj[i]) field[j] += 2.0 * v * s[i];
    };
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        const bool worsens = s[i] * field[i] > 0.0;
        if (worsens && u < p_flip) flip(i);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (rng.uniform() < q_flip) flip(i);
    return s;
}

std::vector<double> default_flip_probabilities(std::size_t iterations) {
    std::vector<double> p(std::max<std::size_t>(iterations, 1));
    for (std::size_t t = 0; t < p.size(); ++t) p[t] = 0.16 * std::ldexp(1.0, -static_cast<int>(t));
    return p;
}

std::vector<double> default_uniform_flip_probabilities(std::size_t iterations) {
    auto q = default_flip_probabilities(iterations);
    for (auto& x : q) x /= 4.0;
    return q;
}

std::string_view weighting_name(EventWeighting w) { return w == EventWeighting::Event ? "event" : "unit"; }

EventWeighting parse_weighting(std::string_view s) {
    if (s == "event") return EventWeighting::Event;
    if (s == "unit") return EventWeighting::Unit;
    throw ConfigError("unknown weighting '" + std::string(s) + "' (expected event or unit)");
}

void ZoomConfig::validate() const {
    if (iterations < 1) throw ConfigError("iteration count T must be at least 1");
    if (!(zoom_base > 0.0 && zoom_base < 1.0)) throw ConfigError("zoom base b must lie in (0, 1)");
    if (p_flip.empty() || q_flip.empty()) throw ConfigError("flip probability schedules must be non-empty");
    for (std::size_t t = 0; t < iterations; ++t) {
        const double p = schedule_at(p_flip, t), q = schedule_at(q_flip, t);
        if (!(p >= 0.0 && p < 1.0) || !(q >= 0.0 && q < 1.0))
            throw ConfigError("flip probabilities must lie in [0, 1)");
        if (!(q < p) && !(p == 0.0 && q == 0.0))
            throw ConfigError("q_f(t) must be smaller than p_f(t) at t = " + std::to_string(t));
    }
    if (offset_range < 0) throw ConfigError("offset range A must be non-negative");
    if (offset_range > 0 && !(delta > 0.0)) throw ConfigError("delta must be positive when A > 0");
    if (!(cutoff >= 0.0 && cutoff <= 100.0)) throw ConfigError("cutoff must lie in [0, 100]");
    solver.schedule.validate();
    solver.chain.validate();
}

double ZoomConfig::sigma(std::size_t t) const { return std::pow(zoom_base, static_cast<double>(t)); }

// ---------------------------------------------------------------------------

namespace {

struct Candidate {
    Eigen::VectorXd mu;
    double energy = 0.0;
};

double per_weight(double value, const CouplingMatrices& cm) {
    return cm.total_weight > 0.0 ? value / cm.total_weight : value;
}

}  // namespace

ZoomResult run_zoom(const CouplingMatrices& train, const CouplingMatrices* test, const ZoomConfig& cfg,
                    const FlipRule& rule) {
    cfg.validate();
    const auto nv = static_cast<Eigen::Index>(train.size());
    if (test && test->size() != train.size()) throw DataError("train/test couplings differ in size");

    std::vector<Candidate> candidates{{Eigen::VectorXd::Zero(nv), 0.0}};
    candidates[0].energy = quadratic_objective(train, candidates[0].mu);

    ZoomResult result;
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const double sigma = cfg.sigma(t);
        const auto& sched = cfg.solver.schedule;
        const std::size_t n_gauges = schedule_at(sched.n_gauges, t);
        const std::size_t n_excited = schedule_at(sched.n_excited, t);
        const double window = schedule_at(sched.window, t);
        const double p_f = schedule_at(cfg.p_flip, t);
        const double q_f = schedule_at(cfg.q_flip, t);

        std::vector<Candidate> pool;
        if (cfg.keep_previous) pool = candidates;
        double broken = 0.0;
        double fixed = 0.0;
        std::size_t solves = 0;
        std::size_t couplers = 0;

        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const Candidate& cand = candidates[c];
            const IsingProblem hamiltonian =
                effective_problem(train, std::span<const double>(cand.mu.data(), cand.mu.size()), sigma, cfg.effective);
            const IsingProblem pruned = prune(hamiltonian, cfg.cutoff);
            couplers = pruned.couplers().size();
            std::optional<FixResult> fix;
            if (cfg.fixing) fix = fix_variables(pruned);
            const IsingProblem& target = fix ? fix->reduced : pruned;

            struct GaugeOutcome {
                std::vector<Spins> states;
                double broken = 0.0;
            };
            std::vector<GaugeOutcome> outcomes(n_gauges);
            detail::parallel_for(n_gauges, cfg.jobs, [&](std::size_t g) {
                auto& out = outcomes[g];
                if (target.size() == 0) {
                    out.states.push_back(fix->expand(Spins{}));
                    return;
                }
                Rng gauge_rng{cfg.seed, stream_key(Stream::Gauge), t, c, g};
                const GaugeVector gauge = GaugeVector::random(target.size(), gauge_rng);
                const std::uint64_t solve_seed = Rng{cfg.seed, stream_key(Stream::Anneal), t, c, g}.next();
                const SolverResult res = solve(apply_gauge(target, gauge), cfg.solver, solve_seed, t);
                out.broken = res.broken_chain_fraction;
                for (const auto& s : select_states(res, n_excited, window * std::abs(res.best().energy))) {
                    Spins spins = ungauge(s, gauge);
                    out.states.push_back(fix ? fix->expand(spins) : std::move(spins));
                }
            });
            for (std::size_t g = 0; g < n_gauges; ++g) {
                const auto& states = outcomes[g].states;
                broken += outcomes[g].broken;
                ++solves;
                if (fix) fixed += static_cast<double>(fix->fixed.size());
                for (std::size_t k = 0; k < states.size(); ++k) {
                    Rng flip_rng{cfg.seed, stream_key(Stream::Flip), t, c, g, k};
                    const Spins flipped = rule(hamiltonian, states[k], p_f, q_f, flip_rng);
                    Candidate next{zoom_update(cand.mu, flipped, sigma), 0.0};
                    next.energy = quadratic_objective(train, next.mu);
                    pool.push_back(std::move(next));
                }
            }
        }

        std::stable_sort(pool.begin(), pool.end(),
                         [](const Candidate& a, const Candidate& b) { return a.energy < b.energy; });
        std::vector<Candidate> kept;
        const double limit = pool.front().energy + window * std::abs(pool.front().energy);
        for (auto& cand : pool) {
            if (kept.size() >= n_excited || cand.energy > limit) break;
            const bool seen = std::any_of(kept.begin(), kept.end(), [&](const Candidate& k) { return k.mu == cand.mu; });
            if (!seen) kept.push_back(std::move(cand));
        }
        candidates = std::move(kept);

        IterationRecord rec;
        rec.t = t;
        rec.sigma = sigma;
        rec.train_energy = per_weight(candidates.front().energy, train);
        rec.test_energy = test ? per_weight(quadratic_objective(*test, candidates.front().mu), *test) : 0.0;
        rec.candidates = candidates.size();
        rec.broken_chain_fraction = solves ? broken / static_cast<double>(solves) : 0.0;
        rec.mean_fixed_spins = solves ? fixed / static_cast<double>(solves) : 0.0;
        rec.couplers = couplers;
        result.trajectory.push_back(rec);
        result.history.push_back(candidates.front().mu);
    }
    result.mu = candidates.front().mu;
    return result;
}

CouplingMatrices dataset_couplings(const Dataset& d, const FeaturePipeline& pipeline,
                                   const AugmentedClassifierSet& aug, EventWeighting weighting) {
    const Eigen::MatrixXd h = pipeline.transform(d);
    std::vector<int> tags;
    std::vector<double> weights;
    for (const auto& e : d.events()) {
        tags.push_back(e.tag);
        weights.push_back(weighting == EventWeighting::Event ? e.weight : 1.0);
    }
    return build_couplings(aug, h, tags, weights);
}

TrainedModel run_qamlz(const Dataset& train, const Dataset& test, const FeaturePipeline& pipeline,
                       const ZoomConfig& cfg, const FlipRule& rule) {
    cfg.validate();
    if (train.schema() != test.schema()) throw DataError("train and test samples have different schemas");
    if (train.empty()) throw DataError("training sample is empty");
    const AugmentedClassifierSet aug(pipeline.size(), cfg.delta, cfg.offset_range);
    if (cfg.solver.kind == SolverKind::Exact && aug.size() > kMaxExactSpins && !cfg.fixing)
        throw ConfigError("exact solver cannot handle " + std::to_string(aug.size()) + " spins");
    const CouplingMatrices cm_train = dataset_couplings(train, pipeline, aug, cfg.weighting);
    std::optional<CouplingMatrices> cm_test;
    if (!test.empty()) cm_test = dataset_couplings(test, pipeline, aug, cfg.weighting);

    ZoomResult zr = run_zoom(cm_train, cm_test ? &*cm_test : nullptr, cfg, rule);
    TrainedModel model;
    model.mu = std::move(zr.mu);
    model.augmentation = aug;
    model.pipeline = pipeline;
    model.trajectory = std::move(zr.trajectory);
    model.settings = cfg;
    return model;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const ZoomConfig& c) {
    const auto& s = c.solver.schedule;
    j = {{"iterations", c.iterations},
         {"zoom_base", c.zoom_base},
         {"p_flip", c.p_flip},
         {"q_flip", c.q_flip},
         {"delta", c.delta},
         {"offset_range", c.offset_range},
         {"cutoff", c.cutoff},
         {"fixing", c.fixing},
         {"solver", std::string(solver_name(c.solver.kind))},
         {"reads", s.n_reads},
         {"sweeps", s.sweeps},
         {"hot_factor", s.hot_factor},
         {"cold_factor", s.cold_factor},
         {"n_gauges", s.n_gauges},
         {"n_excited", s.n_excited},
         {"window", s.window},
         {"chain", {{"length", c.solver.chain.length}, {"strength", c.solver.chain.strength}}},
         {"exact_max_states", c.solver.exact.max_states},
         {"include_self_term", c.effective.include_self_term},
         {"lambda", c.effective.lambda},
         {"keep_previous", c.keep_previous},
         {"weighting", std::string(weighting_name(c.weighting))},
         {"seed", c.seed}};
    if (s.t_cold) j["t_cold"] = *s.t_cold;
    if (!c.solver.external_command.empty()) j["external_command"] = c.solver.external_command;
}

void from_json(const nlohmann::json& j, ZoomConfig& c) {
    try {
        c = ZoomConfig{};
        c.iterations = j.value("iterations", c.iterations);
        c.p_flip = j.contains("p_flip") ? j.at("p_flip").get<std::vector<double>>()
                                        : default_flip_probabilities(c.iterations);
        c.q_flip = j.contains("q_flip") ? j.at("q_flip").get<std::vector<double>>()
                                        : default_uniform_flip_probabilities(c.iterations);
        c.zoom_base = j.value("zoom_base", c.zoom_base);
        c.delta = j.value("delta", c.delta);
        c.offset_range = j.value("offset_range", c.offset_range);
        c.cutoff = j.value("cutoff", c.cutoff);
        c.fixing = j.value("fixing", c.fixing);
        c.solver.kind = parse_solver(j.value("solver", std::string("sa")));
        auto& s = c.solver.schedule;
        s.n_reads = j.value("reads", s.n_reads);
        s.sweeps = j.value("sweeps", s.sweeps);
        s.hot_factor = j.value("hot_factor", s.hot_factor);
        s.cold_factor = j.value("cold_factor", s.cold_factor);
        if (j.contains("t_cold")) s.t_cold = j.at("t_cold").get<double>();
        s.n_gauges = j.value("n_gauges", s.n_gauges);
        s.n_excited = j.value("n_excited", s.n_excited);
        s.window = j.value("window", s.window);
        if (j.contains("chain")) {
            const auto& ch = j.at("chain");
            c.solver.chain.length = ch.value("length", c.solver.chain.length);
            c.solver.chain.strength = ch.value("strength", c.solver.chain.strength);
        }
        c.solver.exact.max_states = j.value("exact_max_states", c.solver.exact.max_states);
        c.solver.external_command = j.value("external_command", std::string{});
        c.effective.include_self_term = j.value("include_self_term", true);
        c.effective.lambda = j.value("lambda", 0.0);
        c.keep_previous = j.value("keep_previous", true);
        c.weighting = parse_weighting(j.value("weighting", std::string("event")));
        c.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid zoom configuration: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
    j = {{"t", r.t},
         {"sigma", r.sigma},
         {"train_energy", r.train_energy},
         {"test_energy", r.test_energy},
         {"candidates", r.candidates},
         {"broken_chain_fraction", r.broken_chain_fraction},
         {"mean_fixed_spins", r.mean_fixed_spins},
         {"couplers", r.couplers}};
}

void to_json(nlohmann::json& j, const TrainedModel& m) {
    j = {{"format", "qamlz-model"},
         {"version", 1},
         {"mu", std::vector<double>(m.mu.data(), m.mu.data() + m.mu.size())},
         {"augmentation",
          {{"n_var", m.augmentation.n_var()},
           {"delta", m.augmentation.delta()},
           {"offset_range", m.augmentation.offset_range()}}},
         {"pipeline", m.pipeline},
         {"trajectory", m.trajectory},
         {"settings", m.settings}};
}

void from_json(const nlohmann::json& j, TrainedModel& m) {
    try {
        if (j.value("format", std::string{}) != "qamlz-model") throw DataError("not a qamlz model document");
        const auto mu = j.at("mu").get<std::vector<double>>();
        m.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
        const auto& a = j.at("augmentation");
        m.augmentation = AugmentedClassifierSet(a.at("n_var").get<std::size_t>(), a.at("delta").get<double>(),
                                                a.at("offset_range").get<int>());
        if (m.augmentation.size() != mu.size()) throw DataError("model mu length does not match augmentation");
        m.pipeline = j.at("pipeline").get<FeaturePipeline>();
        if (m.pipeline.size() != m.augmentation.n_var())
            throw DataError("model pipeline width does not match augmentation");
        m.trajectory.clear();
        for (const auto& r : j.value("trajectory", nlohmann::json::array())) {
            IterationRecord rec;
            rec.t = r.at("t").get<std::size_t>();
            rec.sigma = r.at("sigma").get<double>();
            rec.train_energy = r.at("train_energy").get<double>();
            rec.test_energy = r.at("test_energy").get<double>();
            rec.candidates = r.value("candidates", std::size_t{0});
            rec.broken_chain_fraction = r.value("broken_chain_fraction", 0.0);
            rec.mean_fixed_spins = r.value("mean_fixed_spins", 0.0);
            rec.couplers = r.value("couplers", std::size_t{0});
            m.trajectory.push_back(rec);
        }
        m.settings = j.value("settings", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid model document: ") + e.what());
    }
}

}  // namespace qamlz
