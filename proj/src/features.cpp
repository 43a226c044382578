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

#include "qamlz/features.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "qamlz/error.hpp"

namespace qamlz {

std::string_view weak_mode_name(WeakMode m) {
    return m == WeakMode::NormalizedOnly ? "normalized" : "density_ratio";
}

WeakMode parse_weak_mode(std::string_view s) {
    if (s == "normalized") return WeakMode::NormalizedOnly;
    if (s == "density_ratio") return WeakMode::DensityRatio;
    throw ConfigError("unknown weak-classifier mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

double WeakTransform::normalize(double x) const {
    if (constant) return 0.0;
    const double u = 2.0 * (x - lo) / (hi - lo) - 1.0;
    return std::clamp(u, -1.0, 1.0);
}

std::size_t WeakTransform::bin(double normalized) const {
    const std::size_t n_bins = response.size();
    const auto it = std::upper_bound(edges.begin(), edges.end(), normalized);
    if (it == edges.begin()) return 0;
    const auto b = static_cast<std::size_t>(it - edges.begin()) - 1;
    return std::min(b, n_bins - 1);
}

double WeakTransform::operator()(double x, WeakMode mode) const {
    const double u = normalize(x);
    if (mode == WeakMode::NormalizedOnly) return u;
    return response[bin(u)];
}

WeakClassifierSet::WeakClassifierSet(WeakMode mode, std::vector<WeakTransform> transforms)
    : mode_(mode), transforms_(std::move(transforms)) {
    for (const auto& t : transforms_) {
        if (mode_ == WeakMode::DensityRatio) {
            if (t.response.empty() || t.edges.size() != t.response.size() + 1)
                throw DataError("weak transform '" + t.variable + "' has inconsistent bins");
            for (std::size_t k = 1; k < t.edges.size(); ++k)
                if (!(t.edges[k] > t.edges[k - 1]))
                    throw DataError("weak transform '" + t.variable + "' has non-increasing edges");
            for (double r : t.response)
                if (!(std::abs(r) <= 1.0))
                    throw DataError("weak transform '" + t.variable + "' has response outside [-1, 1]");
        }
        if (!t.constant && !(t.hi > t.lo))
            throw DataError("weak transform '" + t.variable + "' has an empty range");
    }
}

std::vector<std::string> WeakClassifierSet::variables() const {
    std::vector<std::string> out;
    for (const auto& t : transforms_) out.push_back(t.variable);
    return out;
}

std::vector<std::string> WeakClassifierSet::constant_variables() const {
    std::vector<std::string> out;
    for (const auto& t : transforms_)
        if (t.constant) out.push_back(t.variable);
    return out;
}

std::vector<double> WeakClassifierSet::evaluate(std::span<const double> row) const {
    if (row.size() != transforms_.size())
        throw DataError("expected " + std::to_string(transforms_.size()) + " inputs, got " +
                        std::to_string(row.size()));
    std::vector<double> out(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) out[k] = transforms_[k](row[k], mode_);
    return out;
}

std::vector<double> WeakClassifierSet::evaluate(const Dataset& d, const Event& e) const {
    std::vector<double> row;
    row.reserve(transforms_.size());
    for (const auto& t : transforms_) row.push_back(e.values.at(d.index_of(t.variable)));
    return evaluate(row);
}

Eigen::MatrixXd WeakClassifierSet::evaluate(const Eigen::MatrixXd& raw) const {
    if (static_cast<std::size_t>(raw.cols()) != transforms_.size())
        throw DataError("feature matrix has " + std::to_string(raw.cols()) + " columns, expected " +
                        std::to_string(transforms_.size()));
    Eigen::MatrixXd out(raw.rows(), raw.cols());
    for (Eigen::Index c = 0; c < raw.cols(); ++c)
        for (Eigen::Index r = 0; r < raw.rows(); ++r)
            out(r, c) = transforms_[static_cast<std::size_t>(c)](raw(r, c), mode_);
    return out;
}

namespace {

WeakTransform range_transform(const Eigen::MatrixXd& raw, Eigen::Index c, const std::string& name) {
    if (raw.rows() == 0) throw DataError("cannot fit a weak classifier on an empty sample");
    WeakTransform t;
    t.variable = name;
    t.lo = raw.col(c).minCoeff();
    t.hi = raw.col(c).maxCoeff();
    t.constant = !(t.hi > t.lo);
    return t;
}

}  // namespace

WeakClassifierSet normalize_fit(const Eigen::MatrixXd& raw, const std::vector<std::string>& names) {
    if (static_cast<std::size_t>(raw.cols()) != names.size())
        throw DataError("column/name count mismatch");
    std::vector<WeakTransform> ts;
    for (Eigen::Index c = 0; c < raw.cols(); ++c)
        ts.push_back(range_transform(raw, c, names[static_cast<std::size_t>(c)]));
    return WeakClassifierSet(WeakMode::NormalizedOnly, std::move(ts));
}

WeakClassifierSet normalize_fit(const Dataset& train) {
    return normalize_fit(feature_matrix(train, train.schema()), train.schema());
}

WeakClassifierSet weak_fit(const Eigen::MatrixXd& raw, const std::vector<std::string>& names,
                           std::span<const int> tags, std::span<const double> weights,
                           std::size_t n_bins) {
    if (n_bins < 2) throw ConfigError("n_bins must be at least 2");
    if (static_cast<std::size_t>(raw.cols()) != names.size())
        throw DataError("column/name count mismatch");
    const auto rows = static_cast<std::size_t>(raw.rows());
    if (tags.size() != rows || weights.size() != rows) throw DataError("tag/weight length mismatch");
    double w_signal = 0.0, w_background = 0.0;
    for (std::size_t r = 0; r < rows; ++r) (tags[r] > 0 ? w_signal : w_background) += weights[r];
    if (!(w_signal > 0.0) || !(w_background > 0.0))
        throw DataError("weak_fit needs weighted events of both classes");

    std::vector<double> edges(n_bins + 1);
    for (std::size_t k = 0; k <= n_bins; ++k)
        edges[k] = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n_bins);

    std::vector<WeakTransform> ts;
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        WeakTransform t = range_transform(raw, c, names[static_cast<std::size_t>(c)]);
        t.edges = edges;
        t.response.assign(n_bins, 0.0);
        std::vector<double> ps(n_bins, 0.0), pb(n_bins, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t b = t.bin(t.normalize(raw(static_cast<Eigen::Index>(r), c)));
            (tags[r] > 0 ? ps : pb)[b] += weights[r];
        }
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double s = ps[b] / w_signal;
            const double bg = pb[b] / w_background;
            t.response[b] = (s + bg > 0.0) ? (s - bg) / (s + bg) : 0.0;
        }
        ts.push_back(std::move(t));
    }
    return WeakClassifierSet(WeakMode::DensityRatio, std::move(ts));
}

WeakClassifierSet weak_fit(const Dataset& train, std::size_t n_bins) {
    std::vector<int> tags;
    std::vector<double> weights;
    for (const auto& e : train.events()) {
        tags.push_back(e.tag);
        weights.push_back(e.weight);
    }
    return weak_fit(feature_matrix(train, train.schema()), train.schema(), tags, weights, n_bins);
}

// ---------------------------------------------------------------------------
// Derived variables

namespace {

double guarded_divide(double num, double den, std::size_t* guarded) {
    if (std::abs(den) < 1e-9) {
        if (guarded) ++*guarded;
        return 0.0;
    }
    return num / den;
}

}  // namespace

double DerivedFormula::evaluate(double x, double y, std::size_t* guarded) const {
    switch (kind) {
        case FormulaKind::Ratio: return guarded_divide(x, y, guarded);
        case FormulaKind::ShiftedProduct: return (x - ca) * (y - cb);
        case FormulaKind::AbsShiftedProduct: return std::abs((x - ca) * (y - cb));
        case FormulaKind::LinearCombination: return x + k * y;
        case FormulaKind::SquareRatio: return guarded_divide(x * x, y, guarded);
        case FormulaKind::PlusScaledSquare: return x + k * y * y;
    }
    return 0.0;
}

std::vector<DerivedFormula> set_a_formulas() {
    using K = FormulaKind;
    return {
        {"pt_l/met", K::Ratio, "pt_l", "met", 0, 0, 0, 0.35},
        {"pt_l/pt_j1", K::Ratio, "pt_l", "pt_j1", 0, 0, 0, 0.22},
        {"(disc_b-1)*pt_b", K::ShiftedProduct, "disc_b", "pt_b", 1, 0, 0, 0.20},
        {"|(met-280)*(mt-80)|", K::AbsShiftedProduct, "met", "mt", 280, 80, 0, 0.20},
        {"|(met-280)*(ht-400)|", K::AbsShiftedProduct, "met", "ht", 280, 400, 0, 0.18},
    };
}

std::vector<DerivedFormula> set_b_extra_formulas(const std::string& lepton_pt) {
    using K = FormulaKind;
    return {
        {"dr_lb-mt/40", K::LinearCombination, "dr_lb", "mt", 0, 0, -1.0 / 40.0, 0.12},
        {"ht^2/njets", K::SquareRatio, "ht", "njets", 0, 0, 0, 0.09},
        {lepton_pt + "+3.5*eta_l^2", K::PlusScaledSquare, lepton_pt, "eta_l", 0, 0, 3.5, 0.08},
        {lepton_pt + "/ht", K::Ratio, lepton_pt, "ht", 0, 0, 0, 0.03},
    };
}

Dataset compute_derived(const Dataset& d, const std::vector<DerivedFormula>& formulas,
                        DerivedStats* stats) {
    std::vector<std::string> schema = d.schema();
    std::vector<std::pair<std::size_t, std::size_t>> inputs;
    for (const auto& f : formulas) {
        if (d.find(f.name)) throw ConfigError("derived variable '" + f.name + "' already in schema");
        inputs.emplace_back(d.index_of(f.a), d.index_of(f.b));
        schema.push_back(f.name);
    }
    std::size_t guarded = 0;
    Dataset out(schema);
    for (const auto& e : d.events()) {
        Event x = e;
        for (std::size_t k = 0; k < formulas.size(); ++k)
            x.values.push_back(formulas[k].evaluate(e.values[inputs[k].first], e.values[inputs[k].second], &guarded));
        out.add(std::move(x));
    }
    if (stats) stats->guarded_divisions += guarded;
    return out;
}

// ---------------------------------------------------------------------------
// PCA

Eigen::MatrixXd PcaTransform::apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) throw DataError("PCA input has wrong column count");
    return (x.rowwise() - mean.transpose()) * components.transpose();
}

Eigen::MatrixXd PcaTransform::reconstruct(const Eigen::MatrixXd& projected) const {
    if (projected.cols() != components.rows()) throw DataError("PCA projection has wrong column count");
    return (projected * components).rowwise() + mean.transpose();
}

PcaTransform fit_pca(const Eigen::MatrixXd& x) {
    if (x.rows() < 2) throw DataError("PCA needs at least 2 rows");
    if (!x.allFinite()) throw DataError("PCA input contains non-finite values");
    PcaTransform t;
    // Extended precision keeps the projected off-diagonals near zero even when
    // variances span many decades.
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const MatL xl = x.cast<long double>();
    const Eigen::Matrix<long double, 1, Eigen::Dynamic> mean = xl.colwise().mean();
    const MatL centered = xl.rowwise() - mean;
    const MatL cov = (centered.transpose() * centered) / static_cast<long double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<MatL> es(cov);
    if (es.info() != Eigen::Success) throw DataError("PCA eigendecomposition failed");
    t.mean = mean.transpose().cast<double>();
    const Eigen::Index n = cov.rows();
    t.eigenvalues.resize(n);
    t.components.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = n - 1 - k;  // solver returns ascending order
        t.eigenvalues(k) = static_cast<double>(es.eigenvalues()(src));
        Eigen::Matrix<long double, Eigen::Dynamic, 1> v = es.eigenvectors().col(src);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0) v = -v;  // fix the sign for reproducible output
        t.components.row(k) = v.cast<double>().transpose();
    }
    return t;
}

// ---------------------------------------------------------------------------
// Pipeline

const std::vector<std::string>& analysis_variables() {
    static const std::vector<std::string> vars = {"pt_l",  "eta_l",  "q_l", "met",  "mt",   "njets",
                                                  "pt_j1", "ht",     "disc_b", "nb", "pt_b", "dr_lb"};
    return vars;
}

FeatureSet variable_set(std::string_view name, const std::string& lepton_pt) {
    FeatureSet desc;
    desc.name = std::string(name);
    desc.variables = analysis_variables();
    if (name == "alpha") {
        desc.mode = WeakMode::NormalizedOnly;
        return desc;
    }
    desc.mode = WeakMode::DensityRatio;
    if (name == "beta") return desc;
    if (name == "A" || name == "B") {
        desc.derived = set_a_formulas();
        if (name == "B")
            for (auto& f : set_b_extra_formulas(lepton_pt)) desc.derived.push_back(std::move(f));
        for (const auto& f : desc.derived) desc.variables.push_back(f.name);
        return desc;
    }
    throw ConfigError("unknown variable set '" + std::string(name) + "' (expected alpha, beta, A or B)");
}

Eigen::MatrixXd feature_matrix(const Dataset& d, const std::vector<std::string>& variables) {
    std::vector<std::size_t> cols;
    for (const auto& v : variables) cols.push_back(d.index_of(v));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < d.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d.events()[r].values[cols[c]];
    return m;
}

FeaturePipeline::FeaturePipeline(FeatureSet desc, std::optional<PcaTransform> pca, WeakClassifierSet weak)
    : features_(std::move(desc)), pca_(std::move(pca)), weak_(std::move(weak)) {}

namespace {

std::vector<std::string> stage_names(const FeatureSet& desc) {
    if (!desc.pca) return desc.variables;
    std::vector<std::string> out;
    for (std::size_t k = 0; k < desc.variables.size(); ++k) out.push_back("pc" + std::to_string(k));
    return out;
}

}  // namespace

FeaturePipeline FeaturePipeline::fit(const Dataset& train, const FeatureSet& desc) {
    if (train.empty()) throw DataError("cannot fit features on an empty training sample");
    if (desc.variables.empty()) throw ConfigError("feature set selects no variables");
    FeaturePipeline p(desc, std::nullopt, {});
    const Dataset extended = desc.derived.empty() ? train : compute_derived(train, desc.derived);
    Eigen::MatrixXd x = feature_matrix(extended, desc.variables);
    if (desc.pca) {
        p.pca_ = fit_pca(x);
        x = p.pca_->apply(x);
    }
    const auto names = stage_names(desc);
    if (desc.mode == WeakMode::NormalizedOnly) {
        p.weak_ = normalize_fit(x, names);
    } else {
        std::vector<int> tags;
        std::vector<double> weights;
        for (const auto& e : train.events()) {
            tags.push_back(e.tag);
            weights.push_back(e.weight);
        }
        p.weak_ = weak_fit(x, names, tags, weights, desc.n_bins);
    }
    return p;
}

Eigen::MatrixXd FeaturePipeline::inputs(const Dataset& d) const {
    const Dataset extended = features_.derived.empty() ? d : compute_derived(d, features_.derived);
    Eigen::MatrixXd x = feature_matrix(extended, features_.variables);
    if (pca_) x = pca_->apply(x);
    return x;
}

Eigen::MatrixXd FeaturePipeline::transform(const Dataset& d) const { return weak_.evaluate(inputs(d)); }

std::vector<double> FeaturePipeline::transform(const Dataset& d, const Event& e) const {
    Dataset one(d.schema());
    one.add(e);
    const Eigen::MatrixXd h = transform(one);
    return std::vector<double>(h.data(), h.data() + h.size());
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const auto n_rows = static_cast<Eigen::Index>(rows.size());
    const auto n_cols = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size());
    Eigen::MatrixXd m(n_rows, n_cols);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n_cols)
            throw DataError("ragged matrix in JSON");
        for (Eigen::Index c = 0; c < n_cols; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    return m;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string_view formula_kind_name(FormulaKind k) {
    switch (k) {
        case FormulaKind::Ratio: return "ratio";
        case FormulaKind::ShiftedProduct: return "shifted_product";
        case FormulaKind::AbsShiftedProduct: return "abs_shifted_product";
        case FormulaKind::LinearCombination: return "linear_combination";
        case FormulaKind::SquareRatio: return "square_ratio";
        case FormulaKind::PlusScaledSquare: return "plus_scaled_square";
    }
    return "ratio";
}

FormulaKind parse_formula_kind(const std::string& s) {
    for (auto k : {FormulaKind::Ratio, FormulaKind::ShiftedProduct, FormulaKind::AbsShiftedProduct,
                   FormulaKind::LinearCombination, FormulaKind::SquareRatio, FormulaKind::PlusScaledSquare})
        if (formula_kind_name(k) == s) return k;
    throw ConfigError("unknown formula kind '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const WeakClassifierSet& w) {
    j = nlohmann::json::object();
    j["mode"] = std::string(weak_mode_name(w.mode()));
    j["transforms"] = nlohmann::json::array();
    for (const auto& t : w.transforms()) {
        nlohmann::json tj = {{"variable", t.variable}, {"lo", t.lo}, {"hi", t.hi}, {"constant", t.constant}};
        if (w.mode() == WeakMode::DensityRatio) {
            tj["edges"] = t.edges;
            tj["response"] = t.response;
        }
        j["transforms"].push_back(std::move(tj));
    }
}

void from_json(const nlohmann::json& j, WeakClassifierSet& w) {
    const WeakMode mode = parse_weak_mode(j.at("mode").get<std::string>());
    std::vector<WeakTransform> ts;
    for (const auto& tj : j.at("transforms")) {
        WeakTransform t;
        t.variable = tj.at("variable").get<std::string>();
        t.lo = tj.at("lo").get<double>();
        t.hi = tj.at("hi").get<double>();
        t.constant = tj.value("constant", false);
        if (tj.contains("edges")) t.edges = tj.at("edges").get<std::vector<double>>();
        if (tj.contains("response")) t.response = tj.at("response").get<std::vector<double>>();
        ts.push_back(std::move(t));
    }
    w = WeakClassifierSet(mode, std::move(ts));
}

void to_json(nlohmann::json& j, const DerivedFormula& f) {
    j = {{"name", f.name}, {"kind", std::string(formula_kind_name(f.kind))}, {"a", f.a}, {"b", f.b},
         {"ca", f.ca}, {"cb", f.cb}, {"k", f.k}};
    if (f.reference_fom) j["reference_fom"] = *f.reference_fom;
}

void from_json(const nlohmann::json& j, DerivedFormula& f) {
    f.name = j.at("name").get<std::string>();
    f.kind = parse_formula_kind(j.at("kind").get<std::string>());
    f.a = j.at("a").get<std::string>();
    f.b = j.at("b").get<std::string>();
    f.ca = j.value("ca", 0.0);
    f.cb = j.value("cb", 0.0);
    f.k = j.value("k", 0.0);
    if (j.contains("reference_fom")) f.reference_fom = j.at("reference_fom").get<double>();
    else f.reference_fom.reset();
}

void to_json(nlohmann::json& j, const PcaTransform& p) {
    j = {{"mean", vector_json(p.mean)},
         {"components", matrix_json(p.components)},
         {"eigenvalues", vector_json(p.eigenvalues)}};
}

void from_json(const nlohmann::json& j, PcaTransform& p) {
    p.mean = vector_from_json(j.at("mean"));
    p.components = matrix_from_json(j.at("components"));
    p.eigenvalues = vector_from_json(j.at("eigenvalues"));
}

void to_json(nlohmann::json& j, const FeatureSet& s) {
    j = {{"name", s.name},   {"variables", s.variables}, {"derived", s.derived},
         {"pca", s.pca},     {"mode", std::string(weak_mode_name(s.mode))}, {"n_bins", s.n_bins}};
}

void from_json(const nlohmann::json& j, FeatureSet& s) {
    s.name = j.value("name", std::string("custom"));
    s.variables = j.at("variables").get<std::vector<std::string>>();
    s.derived = j.value("derived", std::vector<DerivedFormula>{});
    s.pca = j.value("pca", false);
    s.mode = parse_weak_mode(j.value("mode", std::string("density_ratio")));
    s.n_bins = j.value("n_bins", std::size_t{50});
}

void to_json(nlohmann::json& j, const FeaturePipeline& p) {
    j = {{"features", p.features()}, {"weak", p.weak()}};
    if (p.pca()) j["pca"] = *p.pca();
}

void from_json(const nlohmann::json& j, FeaturePipeline& p) {
    std::optional<PcaTransform> pca;
    if (j.contains("pca")) pca = j.at("pca").get<PcaTransform>();
    p = FeaturePipeline(j.at("features").get<FeatureSet>(), std::move(pca), j.at("weak").get<WeakClassifierSet>());
}

}  // namespace qamlz
