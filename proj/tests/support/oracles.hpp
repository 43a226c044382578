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

// Reference implementations used only by tests. Each is written directly
// from the defining formula, with no calls into the library.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using SpinVec = std::vector<int>;

/// sum_i h_i s_i + sum_{i<j} J[i][j] s_i s_j; only the upper triangle of J is read.
double ising_energy(const std::vector<double>& h, const std::vector<std::vector<double>>& J, const SpinVec& s);

struct Minimum {
    double value = 0.0;
    std::vector<SpinVec> argmin;  // every configuration within tol of value
};

/// Exhaustive minimization of f over {-1,+1}^n, configurations in counting order.
Minimum minimize(std::size_t n, const std::function<double(const SpinVec&)>& f, double tol = 1e-9);

/// sgn(x) with sgn(0) = +1.
int sgn(double x);

/// All augmented outputs sgn(h_i + delta*l)/N for one event, variable-major.
std::vector<double> classifier_outputs(const std::vector<double>& h, double delta, int offset_range);

struct Couplings {
    std::vector<double> linear;
    std::vector<std::vector<double>> quadratic;
};

/// Per-event double loop over classifier pairs.
Couplings couplings(const std::vector<std::vector<double>>& h, double delta, int offset_range,
                    const std::vector<int>& tags, const std::vector<double>& weights);

/// sum_t w_t (y_t - sum_I w_I c_I(x_t))^2.
double distance(const std::vector<std::vector<double>>& h, double delta, int offset_range,
                const std::vector<int>& tags, const std::vector<double>& weights, const std::vector<double>& mu);

/// Significance with background systematic, written as the unsimplified
/// closed form in extended precision.
long double fom_direct(long double s, long double b, long double f);
long double asimov_direct(long double s, long double b);

/// Weighted yield and raw count of entries strictly above `cut`.
double yield_above(const std::vector<double>& scores, const std::vector<double>& weights, double cut);
std::size_t count_above(const std::vector<double>& scores, double cut);

/// max |F_a(x) - F_b(x)| over every sample point x.
double ks_statistic(const std::vector<double>& a, const std::vector<double>& b);

/// Eigen-decomposition of [[a, b], [b, d]]: descending eigenvalues and unit
/// eigenvectors.
struct Eigen2 {
    double l1, l2;
    double v1[2], v2[2];
};
Eigen2 symmetric_2x2(double a, double b, double d);

/// Density-ratio response per bin from raw values: range-normalize to
/// [-1, 1], bin with half-open bins (last closed), ratio of weighted
/// per-class densities.
std::vector<double> histogram_response(const std::vector<double>& x, const std::vector<int>& tags,
                                       const std::vector<double>& weights, std::size_t n_bins);

/// The single-lepton preselection evaluated on one event.
bool passes_preselection(const std::map<std::string, double>& v);

}  // namespace oracle
