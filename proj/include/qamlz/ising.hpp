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
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace qamlz {

class Rng;

using Spins = std::vector<std::int8_t>;

/// sgn with sgn(0) = +1.
inline int sign_of(double x) { return x >= 0.0 ? 1 : -1; }

// ---------------------------------------------------------------------------
// Augmented classifier bank

/// Offset copies c_il(x) = sgn(h_i(x) + delta*l) / N_var, l in [-A, A].
/// Spin index layout is variable-major with offsets ascending.
class AugmentedClassifierSet {
public:
    AugmentedClassifierSet() = default;
    AugmentedClassifierSet(std::size_t n_var, double delta, int offset_range);

    std::size_t n_var() const { return n_var_; }
    double delta() const { return delta_; }
    int offset_range() const { return offset_range_; }
    std::size_t copies() const { return 2 * static_cast<std::size_t>(offset_range_) + 1; }
    std::size_t size() const { return n_var_ * copies(); }

    std::size_t index(std::size_t var, int offset) const;
    std::pair<std::size_t, int> decode(std::size_t index) const;
    double offset_value(int offset) const { return delta_ * offset; }

    /// sgn(h_i + delta*l) for all spins, as +-1.
    void signs(std::span<const double> h, std::span<std::int8_t> out) const;
    /// c values (+-1/N_var) for one event.
    std::vector<double> classify(std::span<const double> h) const;
    /// Rows are events; returns events x size() matrix of +-1 (unscaled).
    Eigen::MatrixXd sign_matrix(const Eigen::MatrixXd& h) const;

private:
    std::size_t n_var_ = 0;
    double delta_ = 0.0;
    int offset_range_ = 0;
};

AugmentedClassifierSet augment(std::size_t n_var, double delta, int offset_range);

// ---------------------------------------------------------------------------
// Coupling matrices

struct CouplingMatrices {
    Eigen::VectorXd linear;     // C_I = sum_t w_t c_I(x_t) y_t
    Eigen::MatrixXd quadratic;  // C_IJ = sum_t w_t c_I(x_t) c_J(x_t), symmetric
    std::size_t n_events = 0;
    double total_weight = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(linear.size()); }
};

/// `h` holds one row of weak-classifier outputs per event.
CouplingMatrices build_couplings(const AugmentedClassifierSet& aug, const Eigen::MatrixXd& h,
                                 std::span<const int> tags, std::span<const double> weights);

/// Spin-dependent part of the weighted squared distance at real-valued
/// weights mu: -mu.C + 1/2 mu^T C mu. Equals (||y - R||^2_w - sum w y^2) / 2.
double quadratic_objective(const CouplingMatrices& cm, const Eigen::VectorXd& mu);

// ---------------------------------------------------------------------------
// Ising problems

struct Coupler {
    std::size_t i = 0;
    std::size_t j = 0;
    double value = 0.0;

    friend bool operator==(const Coupler&, const Coupler&) = default;
};

/// H(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j over s in {-1, +1}^n.
class IsingProblem {
public:
    IsingProblem() = default;
    explicit IsingProblem(std::size_t n) : h_(n, 0.0) {}
    /// Couplers are canonicalized to i < j and sorted; duplicates are summed.
    IsingProblem(std::vector<double> h, std::vector<Coupler> couplers, double lambda = 0.0);

    std::size_t size() const { return h_.size(); }
    const std::vector<double>& h() const { return h_; }
    const std::vector<Coupler>& couplers() const { return couplers_; }
    double lambda() const { return lambda_; }

    double max_abs_coupling() const;
    /// max_i (|h_i| + sum_j |J_ij|).
    double energy_scale() const;

    friend bool operator==(const IsingProblem&, const IsingProblem&) = default;

private:
    std::vector<double> h_;
    std::vector<Coupler> couplers_;
    double lambda_ = 0.0;
};

/// Throws DataError for a wrong length or an entry outside {-1, +1}.
double energy(const IsingProblem& p, std::span<const std::int8_t> s);

struct EffectiveOptions {
    /// Keep the J = I term in the field sum.
    bool include_self_term = true;
    /// Additive field term; 0 reproduces the derived Hamiltonian.
    double lambda = 0.0;
};

/// Problem over s for the zoomed weights mu + sigma*s:
/// h_I = sigma (-C_I + sum_J mu_J C_IJ) + lambda, J_IJ = sigma^2 C_IJ (I < J).
IsingProblem effective_problem(const CouplingMatrices& cm, std::span<const double> mu, double sigma,
                               const EffectiveOptions& options = {});

/// Couplers kept at cutoff `cutoff_pct`: ceil((1 - C/100) * M).
std::size_t retained_couplers(std::size_t total, double cutoff_pct);
/// Keeps the largest-|J| couplers (ties by index order); fields untouched.
IsingProblem prune(const IsingProblem& p, double cutoff_pct);

struct FixResult {
    std::vector<std::pair<std::size_t, int>> fixed;  // (spin, value), in fixing order
    IsingProblem reduced;
    std::vector<std::size_t> free_spins;  // reduced index -> original index
    double offset = 0.0;                  // energy of the fixed part

    /// Original-length spins from a solution of the reduced problem.
    Spins expand(std::span<const std::int8_t> reduced_spins) const;
};

/// Repeatedly fixes spins whose effective field dominates the summed
/// magnitude of their remaining couplers; every fixing holds in all ground
/// states.
FixResult fix_variables(const IsingProblem& p);

// ---------------------------------------------------------------------------
// Gauges

struct GaugeVector {
    std::vector<std::int8_t> g;

    static GaugeVector identity(std::size_t n) { return {std::vector<std::int8_t>(n, 1)}; }
    static GaugeVector random(std::size_t n, Rng& rng);
};

IsingProblem apply_gauge(const IsingProblem& p, const GaugeVector& g);
Spins ungauge(std::span<const std::int8_t> s, const GaugeVector& g);

void to_json(nlohmann::json& j, const IsingProblem& p);
void from_json(const nlohmann::json& j, IsingProblem& p);

}  // namespace qamlz
