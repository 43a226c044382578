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

#include "qamlz/solver.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "qamlz/error.hpp"
#include "qamlz/rng.hpp"

namespace qamlz {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Compressed adjacency for the annealing inner loop.
struct Adjacency {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> neighbors;
    std::vector<double> values;

    explicit Adjacency(const IsingProblem& p) : offsets(p.size() + 1, 0) {
        for (const auto& c : p.couplers()) {
            ++offsets[c.i + 1];
            ++offsets[c.j + 1];
        }
        for (std::size_t i = 0; i < p.size(); ++i) offsets[i + 1] += offsets[i];
        neighbors.resize(offsets.back());
        values.resize(offsets.back());
        std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
        for (const auto& c : p.couplers()) {
            neighbors[fill[c.i]] = c.j;
            values[fill[c.i]++] = c.value;
            neighbors[fill[c.j]] = c.i;
            values[fill[c.j]++] = c.value;
        }
    }
};

/// Final spins of every read, in read order.
std::vector<Spins> anneal_reads(const IsingProblem& p, const AnnealSchedule& schedule) {
    schedule.validate();
    const std::size_t n = p.size();
    const Adjacency adj(p);
    const std::vector<double> temps = schedule.ladder(p);
    std::vector<Spins> reads(schedule.n_reads);
    std::vector<double> field(n);
    for (std::size_t r = 0; r < schedule.n_reads; ++r) {
        Rng rng{schedule.seed, stream_key(Stream::Anneal), r};
        Spins s(n);
        for (auto& x : s) x = static_cast<std::int8_t>(rng.spin());
        for (std::size_t i = 0; i < n; ++i) {
            double f = p.h()[i];
            for (std::size_t k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) f += adj.values[k] * s[adj.neighbors[k]];
            field[i] = f;
        }
        auto flip = [&](std::size_t i) {
            s[i] = static_cast<std::int8_t>(-s[i]);
            const double d = 2.0 * s[i];
            for (std::size_t k = adj.offsets[i]; k < adj.offsets[i + 1]; ++k) field[adj.neighbors[k]] += adj.values[k] * d;
        };
        for (double t : temps) {
            const double beta = 1.0 / t;
            for (std::size_t i = 0; i < n; ++i) {
                const double delta = -2.0 * s[i] * field[i];
                if (delta <= 0.0 || rng.uniform() < std::exp(-delta * beta)) flip(i);
            }
        }
        // Zero-temperature descent so every read ends in a local minimum.
        for (std::size_t pass = 0; pass < 1000; ++pass) {
            bool improved = false;
            for (std::size_t i = 0; i < n; ++i)
                if (-2.0 * s[i] * field[i] < 0.0) {
                    flip(i);
                    improved = true;
                }
            if (!improved) break;
        }
        reads[r] = std::move(s);
    }
    return reads;
}

void sort_samples(std::vector<Sample>& samples) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const Sample& a, const Sample& b) { return a.energy < b.energy; });
}

}  // namespace

void AnnealSchedule::validate() const {
    if (n_reads < 1) throw ConfigError("n_reads must be at least 1");
    if (sweeps < 1) throw ConfigError("sweeps must be at least 1");
    if (!(hot_factor > 0.0) || !(cold_factor > 0.0)) throw ConfigError("temperature factors must be positive");
    if (t_cold && !(*t_cold > 0.0)) throw ConfigError("t_cold must be positive");
    if (n_gauges.empty() || n_excited.empty() || window.empty())
        throw ConfigError("per-iteration schedules must be non-empty");
    for (auto g : n_gauges)
        if (g < 1) throw ConfigError("n_g must be at least 1 at every iteration");
    for (auto e : n_excited)
        if (e < 1) throw ConfigError("n_e must be at least 1 at every iteration");
    for (auto d : window)
        if (!(d >= 0.0)) throw ConfigError("energy window must be non-negative");
}

std::vector<double> AnnealSchedule::ladder(const IsingProblem& p) const {
    double scale = p.energy_scale();
    if (!(scale > 0.0)) scale = 1.0;
    const double hot = hot_factor * scale;
    double cold = t_cold ? *t_cold : cold_factor * scale;
    if (!(cold < hot)) cold = hot * 1e-3;
    std::vector<double> temps(sweeps);
    if (sweeps == 1) {
        temps[0] = cold;
        return temps;
    }
    const double ratio = std::pow(cold / hot, 1.0 / static_cast<double>(sweeps - 1));
    double t = hot;
    for (std::size_t k = 0; k < sweeps; ++k, t *= ratio) temps[k] = t;
    temps.back() = cold;
    return temps;
}

SolverResult solve_exact(const IsingProblem& p, const ExactOptions& options) {
    const auto start = Clock::now();
    const std::size_t n = p.size();
    if (n > kMaxExactSpins)
        throw ConfigError("exact solver refuses " + std::to_string(n) + " spins (limit " +
                          std::to_string(kMaxExactSpins) + ")");
    const std::size_t keep = std::max<std::size_t>(options.max_states, 1);

    std::vector<double> dense(n * n, 0.0);
    for (const auto& c : p.couplers()) dense[c.i * n + c.j] = dense[c.j * n + c.i] = c.value;

    // Gray-code walk from all spins down (bit clear = -1).
    Spins s(n, -1);
    std::vector<double> field(n);
    for (std::size_t i = 0; i < n; ++i) {
        double f = p.h()[i];
        for (std::size_t j = 0; j < n; ++j) f -= dense[i * n + j];
        field[i] = f;
    }
    double e = energy(p, s);
    std::uint64_t bits = 0;
    using Entry = std::pair<double, std::uint64_t>;
    std::priority_queue<Entry> heap;  // max-heap on energy holds the lowest `keep`
    auto offer = [&](double energy_value, std::uint64_t config) {
        if (heap.size() < keep) heap.emplace(energy_value, config);
        else if (energy_value < heap.top().first) {
            heap.pop();
            heap.emplace(energy_value, config);
        }
    };
    offer(e, bits);
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t k = 1; k < total; ++k) {
        const auto i = static_cast<std::size_t>(std::countr_zero(k));
        e += -2.0 * s[i] * field[i];
        s[i] = static_cast<std::int8_t>(-s[i]);
        bits ^= std::uint64_t{1} << i;
        const double d = 2.0 * s[i];
        const double* row = &dense[i * n];
        for (std::size_t j = 0; j < n; ++j) field[j] += row[j] * d;
        offer(e, bits);
    }

    SolverResult out;
    out.solver = "exact";
    while (!heap.empty()) {
        Sample smp;
        smp.spins.resize(n);
        for (std::size_t i = 0; i < n; ++i) smp.spins[i] = (heap.top().second >> i) & 1 ? 1 : -1;
        smp.energy = energy(p, smp.spins);
        out.samples.push_back(std::move(smp));
        heap.pop();
    }
    std::reverse(out.samples.begin(), out.samples.end());
    std::stable_sort(out.samples.begin(), out.samples.end(), [](const Sample& a, const Sample& b) {
        if (a.energy != b.energy) return a.energy < b.energy;
        return a.spins < b.spins;
    });
    out.elapsed_seconds = seconds_since(start);
    return out;
}

SolverResult solve_sa(const IsingProblem& p, const AnnealSchedule& schedule) {
    const auto start = Clock::now();
    SolverResult out;
    out.solver = "sa";
    for (auto& s : anneal_reads(p, schedule)) {
        const double e = energy(p, s);
        out.samples.push_back({std::move(s), e});
    }
    sort_samples(out.samples);
    out.elapsed_seconds = seconds_since(start);
    return out;
}

void ChainConfig::validate() const {
    if (length < 1) throw ConfigError("chain length must be at least 1");
    if (strength.empty()) throw ConfigError("chain strength schedule is empty");
    for (double r : strength)
        if (!(r > 0.0)) throw ConfigError("chain strength must be positive");
}

int majority_vote(std::span<const std::int8_t> chain, Rng& rng) {
    int sum = 0;
    for (auto x : chain) sum += x;
    if (sum > 0) return 1;
    if (sum < 0) return -1;
    return rng.spin();
}

SolverResult solve_chain_emulated(const IsingProblem& p, const ChainConfig& chain, const AnnealSchedule& schedule,
                                  std::size_t iteration) {
    chain.validate();
    const auto start = Clock::now();
    const std::size_t n = p.size();
    const std::size_t len = chain.length;
    double unit = p.max_abs_coupling();
    if (!(unit > 0.0)) {
        for (double h : p.h()) unit = std::max(unit, std::abs(h));
        if (!(unit > 0.0)) unit = 1.0;
    }
    const double lock = -schedule_at(chain.strength, iteration) * unit;

    std::vector<double> h(n * len);
    std::vector<Coupler> couplers;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t m = 0; m < len; ++m) h[k * len + m] = p.h()[k] / static_cast<double>(len);
        for (std::size_t m = 0; m + 1 < len; ++m) couplers.push_back({k * len + m, k * len + m + 1, lock});
    }
    for (const auto& c : p.couplers()) couplers.push_back({c.i * len + len - 1, c.j * len, c.value});
    const IsingProblem physical(std::move(h), std::move(couplers), p.lambda());

    const auto reads = anneal_reads(physical, schedule);
    SolverResult out;
    out.solver = "chain";
    out.vote_seed = schedule.seed;
    std::size_t broken = 0;
    for (std::size_t r = 0; r < reads.size(); ++r) {
        Rng vote{schedule.seed, stream_key(Stream::Vote), r};
        Spins logical(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::span<const std::int8_t> ch(reads[r].data() + k * len, len);
            logical[k] = static_cast<std::int8_t>(majority_vote(ch, vote));
            if (std::any_of(ch.begin(), ch.end(), [&](std::int8_t x) { return x != ch[0]; })) ++broken;
        }
        const double e = energy(p, logical);
        out.samples.push_back({std::move(logical), e});
    }
    sort_samples(out.samples);
    const std::size_t chains = n * reads.size();
    out.broken_chain_fraction = chains ? static_cast<double>(broken) / static_cast<double>(chains) : 0.0;
    out.elapsed_seconds = seconds_since(start);
    return out;
}

std::vector<Spins> select_states(const SolverResult& result, std::size_t n_excited, double window) {
    if (result.samples.empty()) throw DataError("solver returned no samples");
    std::vector<Spins> out;
    const double limit = result.samples.front().energy + window;
    for (const auto& s : result.samples) {
        if (out.size() >= n_excited || s.energy > limit) break;
        if (std::find(out.begin(), out.end(), s.spins) == out.end()) out.push_back(s.spins);
    }
    return out;
}

// ---------------------------------------------------------------------------

SolverResult parse_solver_reply(const nlohmann::json& reply, const IsingProblem& p, const std::string& solver) {
    SolverResult out;
    out.solver = solver;
    try {
        for (const auto& sj : reply.at("samples")) {
            Sample s;
            for (const auto& v : sj.at("spins")) {
                const int x = v.get<int>();
                if (x != 1 && x != -1) throw DataError("solver reply contains a spin that is not +-1");
                s.spins.push_back(static_cast<std::int8_t>(x));
            }
            s.energy = energy(p, s.spins);
            if (sj.contains("energy")) {
                const double claimed = sj.at("energy").get<double>();
                if (std::abs(claimed - s.energy) > 1e-9 * std::max(1.0, std::abs(s.energy)))
                    throw DataError("solver reply energy " + std::to_string(claimed) +
                                    " does not match the problem (" + std::to_string(s.energy) + ")");
            }
            out.samples.push_back(std::move(s));
        }
        if (reply.contains("broken_chain_fraction"))
            out.broken_chain_fraction = reply.at("broken_chain_fraction").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid solver reply: ") + e.what());
    }
    if (out.samples.empty()) throw DataError("solver reply has no samples");
    sort_samples(out.samples);
    return out;
}

void to_json(nlohmann::json& j, const SolverResult& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples) {
        std::vector<int> spins(s.spins.begin(), s.spins.end());
        samples.push_back({{"spins", spins}, {"energy", s.energy}});
    }
    j = {{"samples", samples}, {"broken_chain_fraction", r.broken_chain_fraction}, {"solver", r.solver}};
}

SolverResult solve_external(const IsingProblem& p, const std::string& command) {
    if (command.empty()) throw ConfigError("external solver command is empty");
    const auto start = Clock::now();
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();
    fs::path path;
    for (std::uint64_t k = 0;; ++k) {
        path = dir / ("qamlz_problem_" + std::to_string(::getpid()) + "_" + std::to_string(k) + ".json");
        if (!fs::exists(path)) break;
    }
    {
        std::ofstream out(path);
        if (!out) throw ConfigError("cannot write problem file for external solver");
        out << nlohmann::json(p).dump();
    }
    const std::string cmd = command + " '" + path.string() + "'";
    std::string reply;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(path);
        throw ConfigError("cannot start external solver '" + command + "'");
    }
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) reply.append(buf, got);
    const int status = ::pclose(pipe);
    fs::remove(path);
    if (status != 0) throw ConfigError("external solver exited with status " + std::to_string(status));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("external solver reply is not JSON: ") + e.what());
    }
    auto out = parse_solver_reply(j, p, "external");
    out.elapsed_seconds = seconds_since(start);
    return out;
}

// ---------------------------------------------------------------------------

std::string_view solver_name(SolverKind k) {
    switch (k) {
        case SolverKind::Exact: return "exact";
        case SolverKind::SimulatedAnnealing: return "sa";
        case SolverKind::ChainEmulated: return "chain";
        case SolverKind::External: return "external";
    }
    return "sa";
}

SolverKind parse_solver(std::string_view name) {
    if (name == "exact") return SolverKind::Exact;
    if (name == "sa") return SolverKind::SimulatedAnnealing;
    if (name == "chain") return SolverKind::ChainEmulated;
    if (name == "external") return SolverKind::External;
    throw ConfigError("unknown solver '" + std::string(name) + "' (expected exact, sa, chain or external)");
}

SolverResult solve(const IsingProblem& p, const SolverConfig& cfg, std::uint64_t seed, std::size_t iteration) {
    switch (cfg.kind) {
        case SolverKind::Exact: return solve_exact(p, cfg.exact);
        case SolverKind::SimulatedAnnealing: {
            AnnealSchedule s = cfg.schedule;
            s.seed = seed;
            return solve_sa(p, s);
        }
        case SolverKind::ChainEmulated: {
            AnnealSchedule s = cfg.schedule;
            s.seed = seed;
            return solve_chain_emulated(p, cfg.chain, s, iteration);
        }
        case SolverKind::External: return solve_external(p, cfg.external_command);
    }
    throw ConfigError("unknown solver kind");
}

}  // namespace qamlz
