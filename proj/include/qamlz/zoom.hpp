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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qamlz/dataset.hpp"
#include "qamlz/features.hpp"
#include "qamlz/ising.hpp"
#include "qamlz/solver.hpp"

namespace qamlz {

class Rng;

/// mu_I(t+1) = mu_I(t) + s_I * sigma(t).
Eigen::VectorXd zoom_update(const Eigen::VectorXd& mu, std::span<const std::int8_t> s, double sigma);

/// Randomization applied to each solver state before the update.
using FlipRule = std::function<Spins(const IsingProblem& hamiltonian, Spins s, double p_flip, double q_flip, Rng& rng)>;

/// Default rule. Pass 1 visits qubits in index order; a qubit whose current
/// orientation raises H(t) given all other (already updated) spins is flipped
/// with probability p_flip. Pass 2 flips every qubit with probability q_flip.
/// One uniform is drawn per qubit per pass.
Spins flip_step(const IsingProblem& hamiltonian, Spins s, double p_flip, double q_flip, Rng& rng);

/// p_f(t) = 0.16 * 2^-t.
std::vector<double> default_flip_probabilities(std::size_t iterations);
/// q_f(t) = p_f(t) / 4.
std::vector<double> default_uniform_flip_probabilities(std::size_t iterations);

enum class EventWeighting {
    Event,  // expected-yield weights as stored on each event
    Unit,   // every training event counts once
};

std::string_view weighting_name(EventWeighting w);
EventWeighting parse_weighting(std::string_view s);

struct ZoomConfig {
    std::size_t iterations = 8;
    double zoom_base = 0.5;
    std::vector<double> p_flip = default_flip_probabilities(8);
    std::vector<double> q_flip = default_uniform_flip_probabilities(8);
    double delta = 0.025;
    int offset_range = 3;
    double cutoff = 0.0;  // percent of couplers pruned
    bool fixing = false;
    SolverConfig solver;
    EffectiveOptions effective;
    /// Previously retained candidates compete with the new ones, so the best
    /// training energy never increases.
    bool keep_previous = true;
    EventWeighting weighting = EventWeighting::Event;
    std::uint64_t seed = 0;
    /// Threads for the gauge solves of one candidate; results do not depend on it.
    std::size_t jobs = 1;

    /// Throws ConfigError on the first violated invariant.
    void validate() const;
    double sigma(std::size_t t) const;
};

struct IterationRecord {
    std::size_t t = 0;
    double sigma = 0.0;
    /// Spin-dependent distance per unit weight for the best candidate.
    double train_energy = 0.0;
    double test_energy = 0.0;
    std::size_t candidates = 0;
    double broken_chain_fraction = 0.0;
    double mean_fixed_spins = 0.0;
    std::size_t couplers = 0;
};

struct ZoomResult {
    Eigen::VectorXd mu;
    std::vector<IterationRecord> trajectory;
    /// Best candidate after each iteration.
    std::vector<Eigen::VectorXd> history;
};

/// The zoom loop on precomputed couplings; `test` is monitoring only.
ZoomResult run_zoom(const CouplingMatrices& train, const CouplingMatrices* test, const ZoomConfig& cfg,
                    const FlipRule& rule = flip_step);

struct TrainedModel {
    Eigen::VectorXd mu;
    AugmentedClassifierSet augmentation;
    FeaturePipeline pipeline;
    std::vector<IterationRecord> trajectory;
    nlohmann::json settings;
};

/// Couplings of `d` under the pipeline and augmentation.
CouplingMatrices dataset_couplings(const Dataset& d, const FeaturePipeline& pipeline,
                                   const AugmentedClassifierSet& aug, EventWeighting weighting);

TrainedModel run_qamlz(const Dataset& train, const Dataset& test, const FeaturePipeline& pipeline,
                       const ZoomConfig& cfg, const FlipRule& rule = flip_step);

void to_json(nlohmann::json& j, const ZoomConfig& c);
void from_json(const nlohmann::json& j, ZoomConfig& c);
void to_json(nlohmann::json& j, const IterationRecord& r);
void to_json(nlohmann::json& j, const TrainedModel& m);
void from_json(const nlohmann::json& j, TrainedModel& m);

}  // namespace qamlz
