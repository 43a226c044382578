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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "qamlz/dataset.hpp"
#include "qamlz/ising.hpp"
#include "qamlz/zoom.hpp"

namespace qamlz {

// ---------------------------------------------------------------------------
// Strong classifier

/// R = sum_I mu_I c_I(h) for one row of weak outputs.
double strong_score(const AugmentedClassifierSet& aug, const Eigen::VectorXd& mu, std::span<const double> h);
/// Throws DataError if `e` does not match the schema of `d`.
double strong_score(const TrainedModel& model, const Dataset& d, const Event& e);
std::vector<double> strong_scores(const TrainedModel& model, const Dataset& d);

// ---------------------------------------------------------------------------
// Figure of merit

struct FomParams {
    double f = 0.2;            // relative background systematic
    double luminosity = 35.9;  // fb^-1, metadata only

    void validate() const;
};

/// Significance with background systematic sigma_B = f*B; for f = 0 the
/// Asimov form sqrt(2((S+B)ln(1+S/B) - S)). Throws DataError for B <= 0 or
/// S < 0. A negative radicand from rounding is clamped to 0 and reported
/// through `clamped`.
double fom(double s, double b, double f, bool* clamped = nullptr);
inline double fom(double s, double b, const FomParams& p, bool* clamped = nullptr) { return fom(s, b, p.f, clamped); }

/// sqrt(2((S+B)ln(1+S/B) - S)).
double asimov(double s, double b);

struct ScoredEvents {
    std::vector<double> scores;
    std::vector<double> weights;
};

struct ScanOptions {
    /// Explicit ascending cut grid; otherwise n_points from just below the
    /// smallest pooled score up to the largest.
    std::optional<std::vector<double>> grid;
    std::size_t n_points = 201;
    /// Unweighted events required per class above the cut.
    std::size_t min_events = 20;
};

struct FomCurve {
    std::vector<double> cuts;
    std::vector<double> fom_values;  // NaN where invalid
    std::vector<double> signal_yield;
    std::vector<double> background_yield;
    std::vector<std::size_t> n_signal;
    std::vector<std::size_t> n_background;
    std::vector<bool> valid;

    /// Empty when every cut fails the validity floor.
    std::optional<std::size_t> best_index;
    double best_cut = 0.0;
    double best_fom = 0.0;
    double S_at_best = 0.0;
    double B_at_best = 0.0;

    bool has_valid_cut() const { return best_index.has_value(); }
};

/// Events with score > cut are selected.
FomCurve fom_scan(const ScoredEvents& signal, const ScoredEvents& background, const FomParams& params,
                  const ScanOptions& options = {});
/// Splits `scores` (aligned with d.events()) by tag.
FomCurve fom_scan(const Dataset& d, std::span<const double> scores, const FomParams& params,
                  const ScanOptions& options = {});

/// FOM with every event selected.
double baseline_fom(const Dataset& d, const FomParams& params);

void write_fom_curve(std::ostream& out, const FomCurve& curve);
void to_json(nlohmann::json& j, const FomCurve& c);

// ---------------------------------------------------------------------------
// Run-to-run spread

struct UncertaintyReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> best_foms;
    std::vector<double> best_cuts;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
};

/// Seed of run `r` derived from `base`.
std::uint64_t run_seed(std::uint64_t base, std::size_t r);

/// Trains n_runs models differing only in seed and scans each on the assess
/// sample. Runs without a valid cut contribute NaN.
UncertaintyReport run_uncertainty(const ZoomConfig& cfg, std::size_t n_runs, const SampleSplit& data,
                                  const FeaturePipeline& pipeline, const FomParams& params = {},
                                  const ScanOptions& scan = {}, std::size_t jobs = 1);

void write_uncertainty(std::ostream& out, const UncertaintyReport& r);
void to_json(nlohmann::json& j, const UncertaintyReport& r);

// ---------------------------------------------------------------------------
// Over-training and diagnostics

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov statistic with its asymptotic p-value.
/// Throws DataError on an empty sample.
KsResult ks_test(std::span<const double> a, std::span<const double> b);

struct ClassKs {
    Process process = Process::Signal;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    KsResult ks;
};

/// Train-vs-test comparison of score distributions for every process with
/// events in both samples.
std::vector<ClassKs> overtraining_check(const Dataset& train, std::span<const double> train_scores,
                                        const Dataset& test, std::span<const double> test_scores);

void write_overtraining(std::ostream& out, const std::vector<ClassKs>& rows);

struct VariableRank {
    std::string variable;
    double best_fom = 0.0;  // NaN if no valid cut in either direction
    int direction = 1;      // +1: select above the cut, -1: below
    double best_cut = 0.0;
};

/// Per-variable FOM scan on the raw value, descending by best FOM.
std::vector<VariableRank> rank_variables(const Dataset& d, const std::vector<std::string>& variables,
                                         const FomParams& params, const ScanOptions& options = {});

/// Weighted area under the ROC curve; ties count one half.
double weighted_auc(const ScoredEvents& signal, const ScoredEvents& background);

}  // namespace qamlz
