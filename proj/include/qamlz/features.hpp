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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "qamlz/dataset.hpp"

namespace qamlz {

// ---------------------------------------------------------------------------
// Weak classifiers

enum class WeakMode {
    NormalizedOnly,  // affine map of the training range onto [-1, 1]
    DensityRatio,    // per-bin (pS - pB) / (pS + pB) on the normalized value
};

std::string_view weak_mode_name(WeakMode m);
WeakMode parse_weak_mode(std::string_view s);

/// Transform of one variable onto [-1, 1].
struct WeakTransform {
    std::string variable;
    double lo = 0.0;
    double hi = 0.0;
    bool constant = false;
    std::vector<double> edges;     // over the normalized range, strictly increasing
    std::vector<double> response;  // one entry per bin, |r| <= 1

    /// Training-range normalization, clamped to [-1, 1]; 0 for constant inputs.
    double normalize(double x) const;
    /// Bins are half-open [lo, hi) with the last bin closed.
    std::size_t bin(double normalized) const;
    double operator()(double x, WeakMode mode) const;
};

class WeakClassifierSet {
public:
    WeakClassifierSet() = default;
    WeakClassifierSet(WeakMode mode, std::vector<WeakTransform> transforms);

    WeakMode mode() const { return mode_; }
    std::size_t size() const { return transforms_.size(); }
    const std::vector<WeakTransform>& transforms() const { return transforms_; }
    std::vector<std::string> variables() const;
    /// Fit report: variables whose training range was degenerate.
    std::vector<std::string> constant_variables() const;

    /// h values for one row of raw inputs ordered as variables().
    std::vector<double> evaluate(std::span<const double> row) const;
    /// h values for an event of `d`; throws DataError on schema mismatch.
    std::vector<double> evaluate(const Dataset& d, const Event& e) const;
    /// events x size() matrix of h values for a raw feature matrix.
    Eigen::MatrixXd evaluate(const Eigen::MatrixXd& raw) const;

private:
    WeakMode mode_ = WeakMode::NormalizedOnly;
    std::vector<WeakTransform> transforms_;
};

WeakClassifierSet normalize_fit(const Eigen::MatrixXd& raw, const std::vector<std::string>& names);
WeakClassifierSet normalize_fit(const Dataset& train);

WeakClassifierSet weak_fit(const Eigen::MatrixXd& raw, const std::vector<std::string>& names,
                           std::span<const int> tags, std::span<const double> weights,
                           std::size_t n_bins = 50);
WeakClassifierSet weak_fit(const Dataset& train, std::size_t n_bins = 50);

// ---------------------------------------------------------------------------
// Derived variables

enum class FormulaKind {
    Ratio,               // a / b
    ShiftedProduct,      // (a - ca) * (b - cb)
    AbsShiftedProduct,   // |(a - ca) * (b - cb)|
    LinearCombination,   // a + k * b
    SquareRatio,         // a^2 / b
    PlusScaledSquare,    // a + k * b^2
};

struct DerivedFormula {
    std::string name;
    FormulaKind kind = FormulaKind::Ratio;
    std::string a;
    std::string b;
    double ca = 0.0;
    double cb = 0.0;
    double k = 0.0;
    /// Best single-variable FOM quoted for the original search; metadata only.
    std::optional<double> reference_fom;

    /// Division by |denominator| < 1e-9 yields 0 and bumps `guarded`.
    double evaluate(double a_value, double b_value, std::size_t* guarded = nullptr) const;
};

/// The five high-FOM combinations added in variable set A.
std::vector<DerivedFormula> set_a_formulas();
/// The four lower-FOM combinations added on top of set A in set B.
/// `lepton_pt` names the p_T entering the last two (configurable reading).
std::vector<DerivedFormula> set_b_extra_formulas(const std::string& lepton_pt = "pt_l");

struct DerivedStats {
    std::size_t guarded_divisions = 0;
};

Dataset compute_derived(const Dataset& d, const std::vector<DerivedFormula>& formulas,
                        DerivedStats* stats = nullptr);

// ---------------------------------------------------------------------------
// PCA

struct PcaTransform {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;  // rows are components, descending eigenvalue
    Eigen::VectorXd eigenvalues;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& projected) const;
};

PcaTransform fit_pca(const Eigen::MatrixXd& x);
inline Eigen::MatrixXd apply_pca(const PcaTransform& t, const Eigen::MatrixXd& x) { return t.apply(x); }

// ---------------------------------------------------------------------------
// Feature pipeline: derived variables -> selection -> optional PCA -> weak set

/// The twelve analysis variables of the single-lepton search.
const std::vector<std::string>& analysis_variables();

struct FeatureSet {
    std::string name = "custom";
    std::vector<std::string> variables;  // ordered inputs, may include derived names
    std::vector<DerivedFormula> derived;
    bool pca = false;
    WeakMode mode = WeakMode::DensityRatio;
    std::size_t n_bins = 50;
};

/// Presets: "alpha", "beta", "A", "B". Throws ConfigError otherwise.
FeatureSet variable_set(std::string_view name, const std::string& lepton_pt = "pt_l");

Eigen::MatrixXd feature_matrix(const Dataset& d, const std::vector<std::string>& variables);

class FeaturePipeline {
public:
    FeaturePipeline() = default;
    FeaturePipeline(FeatureSet desc, std::optional<PcaTransform> pca, WeakClassifierSet weak);

    /// All stages are fit on `train` only.
    static FeaturePipeline fit(const Dataset& train, const FeatureSet& desc);

    const FeatureSet& features() const { return features_; }
    const std::optional<PcaTransform>& pca() const { return pca_; }
    const WeakClassifierSet& weak() const { return weak_; }
    std::size_t size() const { return weak_.size(); }

    /// Pre-weak inputs (after derived variables, selection and PCA).
    Eigen::MatrixXd inputs(const Dataset& d) const;
    /// events x size() matrix of h values.
    Eigen::MatrixXd transform(const Dataset& d) const;
    std::vector<double> transform(const Dataset& d, const Event& e) const;

private:
    FeatureSet features_;
    std::optional<PcaTransform> pca_;
    WeakClassifierSet weak_;
};

void to_json(nlohmann::json& j, const WeakClassifierSet& w);
void from_json(const nlohmann::json& j, WeakClassifierSet& w);
void to_json(nlohmann::json& j, const DerivedFormula& f);
void from_json(const nlohmann::json& j, DerivedFormula& f);
void to_json(nlohmann::json& j, const PcaTransform& p);
void from_json(const nlohmann::json& j, PcaTransform& p);
void to_json(nlohmann::json& j, const FeatureSet& s);
void from_json(const nlohmann::json& j, FeatureSet& s);
void to_json(nlohmann::json& j, const FeaturePipeline& p);
void from_json(const nlohmann::json& j, FeaturePipeline& p);

}  // namespace qamlz
