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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qamlz/ising.hpp"

namespace qamlz {

/// Value of a per-iteration schedule at iteration t; the last entry repeats.
template <class T>
T schedule_at(const std::vector<T>& schedule, std::size_t t) {
    return schedule.at(std::min(t, schedule.size() - 1));
}

/// Sampling protocol of one annealing call plus the per-iteration knobs the
/// zoom loop reads (gauges, excited states, energy window).
struct AnnealSchedule {
    std::size_t n_reads = 200;
    std::size_t sweeps = 1000;
    /// T_hot = hot_factor * max_i(|h_i| + sum_j |J_ij|).
    double hot_factor = 2.0;
    /// T_cold = cold_factor * the same scale, unless t_cold is set.
    double cold_factor = 1e-3;
    std::optional<double> t_cold;
    std::uint64_t seed = 0;

    std::vector<std::size_t> n_gauges = {50, 10};
    std::vector<std::size_t> n_excited = {1};
    /// Window above the best energy, as a fraction of |E_best|.
    std::vector<double> window = {0.05};

    /// Throws ConfigError on an invalid schedule.
    void validate() const;
    /// Geometric temperatures, strictly decreasing, one per sweep.
    std::vector<double> ladder(const IsingProblem& p) const;
};

struct Sample {
    Spins spins;
    double energy = 0.0;
};

struct SolverResult {
    std::vector<Sample> samples;  // ascending energy
    double broken_chain_fraction = 0.0;
    std::string solver;
    double elapsed_seconds = 0.0;
    /// Seed of the majority-vote tie-break stream (chain backend only).
    std::optional<std::uint64_t> vote_seed;

    const Sample& best() const { return samples.front(); }
};

struct ExactOptions {
    std::size_t max_states = 64;
};

constexpr std::size_t kMaxExactSpins = 24;

/// Full enumeration; refuses problems above kMaxExactSpins spins.
SolverResult solve_exact(const IsingProblem& p, const ExactOptions& options = {});

/// Independent single-spin-flip Metropolis anneals, one per read, each with
/// its own stream keyed by (seed, read).
SolverResult solve_sa(const IsingProblem& p, const AnnealSchedule& schedule);

struct ChainConfig {
    std::size_t length = 4;
    /// Intra-chain coupling over the largest logical coupling, per iteration.
    std::vector<double> strength = {2.0};

    void validate() const;
};

/// Anneals a chain-expanded copy of `p` and decodes chains by majority vote.
SolverResult solve_chain_emulated(const IsingProblem& p, const ChainConfig& chain, const AnnealSchedule& schedule,
                                  std::size_t iteration = 0);

/// Majority value of a chain; ties use `rng`.
int majority_vote(std::span<const std::int8_t> chain, Rng& rng);

/// At most n_excited distinct configurations with E <= E_min + window.
std::vector<Spins> select_states(const SolverResult& result, std::size_t n_excited, double window);

// ---------------------------------------------------------------------------
// External solvers

/// Parses {"samples": [{"spins": [...], "energy": f}, ...]}; energies are
/// re-evaluated and a mismatch beyond 1e-9 is a DataError.
SolverResult parse_solver_reply(const nlohmann::json& reply, const IsingProblem& p,
                                const std::string& solver = "external");
void to_json(nlohmann::json& j, const SolverResult& r);

/// Runs `command <problem.json>` and reads the reply from its stdout.
SolverResult solve_external(const IsingProblem& p, const std::string& command);

// ---------------------------------------------------------------------------

enum class SolverKind { Exact, SimulatedAnnealing, ChainEmulated, External };

std::string_view solver_name(SolverKind k);
SolverKind parse_solver(std::string_view name);

struct SolverConfig {
    SolverKind kind = SolverKind::SimulatedAnnealing;
    AnnealSchedule schedule;
    ChainConfig chain;
    ExactOptions exact;
    std::string external_command;
};

/// Dispatches on cfg.kind with `seed` replacing the schedule seed.
SolverResult solve(const IsingProblem& p, const SolverConfig& cfg, std::uint64_t seed, std::size_t iteration = 0);

}  // namespace qamlz
