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

#include "qamlz/ising.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "qamlz/error.hpp"
#include "qamlz/rng.hpp"

namespace qamlz {

AugmentedClassifierSet::AugmentedClassifierSet(std::size_t n_var, double delta, int offset_range)
    : n_var_(n_var), delta_(delta), offset_range_(offset_range) {
    if (n_var == 0) throw ConfigError("augmentation needs at least one variable");
    if (offset_range < 0) throw ConfigError("offset range A must be non-negative");
    if (offset_range > 0 && !(delta > 0.0)) throw ConfigError("step size delta must be positive when A > 0");
}

AugmentedClassifierSet augment(std::size_t n_var, double delta, int offset_range) {
    return AugmentedClassifierSet(n_var, delta, offset_range);
}

std::size_t AugmentedClassifierSet::index(std::size_t var, int offset) const {
    return var * copies() + static_cast<std::size_t>(offset + offset_range_);
}

std::pair<std::size_t, int> AugmentedClassifierSet::decode(std::size_t index) const {
    return {index / copies(), static_cast<int>(index % copies()) - offset_range_};
}

void AugmentedClassifierSet::signs(std::span<const double> h, std::span<std::int8_t> out) const {
    if (h.size() != n_var_ || out.size() != size()) throw DataError("augmentation input size mismatch");
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_var_; ++i)
        for (int l = -offset_range_; l <= offset_range_; ++l)
            out[k++] = static_cast<std::int8_t>(sign_of(h[i] + delta_ * l));
}

std::vector<double> AugmentedClassifierSet::classify(std::span<const double> h) const {
    Spins s(size());
    signs(h, s);
    std::vector<double> c(size());
    const double inv = 1.0 / static_cast<double>(n_var_);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = s[k] * inv;
    return c;
}

Eigen::MatrixXd AugmentedClassifierSet::sign_matrix(const Eigen::MatrixXd& h) const {
    if (static_cast<std::size_t>(h.cols()) != n_var_) throw DataError("weak-output matrix has wrong width");
    Eigen::MatrixXd out(h.rows(), static_cast<Eigen::Index>(size()));
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < h.cols(); ++i)
            for (int l = -offset_range_; l <= offset_range_; ++l) out(r, k++) = sign_of(h(r, i) + delta_ * l);
    }
    return out;
}

// ---------------------------------------------------------------------------

CouplingMatrices build_couplings(const AugmentedClassifierSet& aug, const Eigen::MatrixXd& h,
                                 std::span<const int> tags, std::span<const double> weights) {
    const auto rows = static_cast<std::size_t>(h.rows());
    if (tags.size() != rows || weights.size() != rows) throw DataError("tag/weight length mismatch");
    if (rows == 0) throw DataError("cannot build couplings from an empty sample");
    const auto nv = static_cast<Eigen::Index>(aug.size());
    // Accumulate in sign units and rescale by 1/N once at the end; chunks are
    // reduced in a fixed order so the result is reproducible.
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(nv);
    Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(nv, nv);
    constexpr Eigen::Index kChunk = 8192;
    double total = 0.0;
    for (Eigen::Index start = 0; start < h.rows(); start += kChunk) {
        const Eigen::Index len = std::min(kChunk, h.rows() - start);
        const Eigen::MatrixXd s = aug.sign_matrix(h.middleRows(start, len));
        Eigen::VectorXd w(len), wy(len);
        for (Eigen::Index r = 0; r < len; ++r) {
            const auto k = static_cast<std::size_t>(start + r);
            w(r) = weights[k];
            wy(r) = weights[k] * tags[k];
            total += weights[k];
        }
        lin.noalias() += s.transpose() * wy;
        quad.noalias() += s.transpose() * (s.array().colwise() * w.array()).matrix();
    }
    const double inv = 1.0 / static_cast<double>(aug.n_var());
    CouplingMatrices cm;
    cm.linear = lin * inv;
    cm.quadratic = quad * (inv * inv);
    for (Eigen::Index i = 0; i < nv; ++i)
        for (Eigen::Index j = i + 1; j < nv; ++j) cm.quadratic(j, i) = cm.quadratic(i, j);
    cm.n_events = rows;
    cm.total_weight = total;
    return cm;
}

double quadratic_objective(const CouplingMatrices& cm, const Eigen::VectorXd& mu) {
    if (mu.size() != cm.linear.size()) throw DataError("mu has wrong length");
    return -mu.dot(cm.linear) + 0.5 * mu.dot(cm.quadratic * mu);
}

// ---------------------------------------------------------------------------

IsingProblem::IsingProblem(std::vector<double> h, std::vector<Coupler> couplers, double lambda)
    : h_(std::move(h)), lambda_(lambda) {
    for (double v : h_)
        if (!std::isfinite(v)) throw DataError("non-finite field");
    for (auto& c : couplers) {
        if (c.i == c.j) throw DataError("self-coupler on spin " + std::to_string(c.i));
        if (c.i > c.j) std::swap(c.i, c.j);
        if (c.j >= h_.size()) throw DataError("coupler index out of range");
        if (!std::isfinite(c.value)) throw DataError("non-finite coupler");
    }
    std::stable_sort(couplers.begin(), couplers.end(),
                     [](const Coupler& a, const Coupler& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
    for (const auto& c : couplers) {
        if (!couplers_.empty() && couplers_.back().i == c.i && couplers_.back().j == c.j)
            couplers_.back().value += c.value;
        else
            couplers_.push_back(c);
    }
}

double IsingProblem::max_abs_coupling() const {
    double m = 0.0;
    for (const auto& c : couplers_) m = std::max(m, std::abs(c.value));
    return m;
}

double IsingProblem::energy_scale() const {
    std::vector<double> s(h_.size());
    for (std::size_t i = 0; i < h_.size(); ++i) s[i] = std::abs(h_[i]);
    for (const auto& c : couplers_) {
        s[c.i] += std::abs(c.value);
        s[c.j] += std::abs(c.value);
    }
    return s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
}

double energy(const IsingProblem& p, std::span<const std::int8_t> s) {
    if (s.size() != p.size())
        throw DataError("spin vector has length " + std::to_string(s.size()) + ", problem has " +
                        std::to_string(p.size()));
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != 1 && s[i] != -1) throw DataError("spin " + std::to_string(i) + " is not +-1");
        e += p.h()[i] * s[i];
    }
    for (const auto& c : p.couplers()) e += c.value * s[c.i] * s[c.j];
    return e;
}

IsingProblem effective_problem(const CouplingMatrices& cm, std::span<const double> mu, double sigma,
                               const EffectiveOptions& options) {
    const std::size_t n = cm.size();
    if (mu.size() != n)
        throw DataError("mu has length " + std::to_string(mu.size()) + ", couplings have " + std::to_string(n));
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        double field = -cm.linear(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i && !options.include_self_term) continue;
            field += mu[j] * cm.quadratic(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        h[i] = field * sigma + options.lambda;
    }
    std::vector<Coupler> couplers;
    couplers.reserve(n * (n - 1) / 2);
    const double s2 = sigma * sigma;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            couplers.push_back({i, j, cm.quadratic(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * s2});
    return IsingProblem(std::move(h), std::move(couplers), options.lambda);
}

std::size_t retained_couplers(std::size_t total, double cutoff_pct) {
    if (!(cutoff_pct >= 0.0 && cutoff_pct <= 100.0)) throw ConfigError("cutoff must lie in [0, 100]");
    // The epsilon absorbs representation error such as (1 - 0.85) * M.
    const double keep = (100.0 - cutoff_pct) * static_cast<double>(total) / 100.0;
    const auto k = static_cast<std::size_t>(std::ceil(keep - 1e-9));
    return std::min(k, total);
}

IsingProblem prune(const IsingProblem& p, double cutoff_pct) {
    const auto& cs = p.couplers();
    const std::size_t keep = retained_couplers(cs.size(), cutoff_pct);
    if (keep == cs.size()) return p;
    std::vector<std::size_t> order(cs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(cs[a].value) > std::abs(cs[b].value); });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<Coupler> kept;
    kept.reserve(keep);
    for (std::size_t k : order) kept.push_back(cs[k]);
    return IsingProblem(p.h(), std::move(kept), p.lambda());
}

Spins FixResult::expand(std::span<const std::int8_t> reduced_spins) const {
    if (reduced_spins.size() != free_spins.size()) throw DataError("reduced solution has wrong length");
    Spins s(free_spins.size() + fixed.size(), 0);
    for (const auto& [i, v] : fixed) s[i] = static_cast<std::int8_t>(v);
    for (std::size_t k = 0; k < free_spins.size(); ++k) s[free_spins[k]] = reduced_spins[k];
    return s;
}

FixResult fix_variables(const IsingProblem& p) {
    const std::size_t n = p.size();
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (const auto& c : p.couplers()) {
        adj[c.i].emplace_back(c.j, c.value);
        adj[c.j].emplace_back(c.i, c.value);
    }
    std::vector<int> value(n, 0);
    FixResult out;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (value[i] != 0) continue;
            double field = p.h()[i];
            double slack = 0.0;
            for (const auto& [j, v] : adj[i]) {
                if (value[j] != 0) field += v * value[j];
                else slack += std::abs(v);
            }
            if (std::abs(field) > slack) {
                value[i] = -sign_of(field);
                out.fixed.emplace_back(i, value[i]);
                changed = true;
            }
        }
    }

    std::vector<std::size_t> reduced_index(n, n);
    for (std::size_t i = 0; i < n; ++i)
        if (value[i] == 0) {
            reduced_index[i] = out.free_spins.size();
            out.free_spins.push_back(i);
        }
    std::vector<double> h;
    for (std::size_t i : out.free_spins) h.push_back(p.h()[i]);
    for (const auto& [i, v] : out.fixed) out.offset += p.h()[i] * v;
    std::vector<Coupler> couplers;
    for (const auto& c : p.couplers()) {
        const bool fi = value[c.i] != 0, fj = value[c.j] != 0;
        if (fi && fj) out.offset += c.value * value[c.i] * value[c.j];
        else if (fi) h[reduced_index[c.j]] += c.value * value[c.i];
        else if (fj) h[reduced_index[c.i]] += c.value * value[c.j];
        else couplers.push_back({reduced_index[c.i], reduced_index[c.j], c.value});
    }
    out.reduced = IsingProblem(std::move(h), std::move(couplers), p.lambda());
    return out;
}

// ---------------------------------------------------------------------------

GaugeVector GaugeVector::random(std::size_t n, Rng& rng) {
    GaugeVector g;
    g.g.resize(n);
    for (auto& x : g.g) x = static_cast<std::int8_t>(rng.spin());
    return g;
}

namespace {

void check_gauge(const GaugeVector& g, std::size_t n) {
    if (g.g.size() != n)
        throw DataError("gauge has length " + std::to_string(g.g.size()) + ", expected " + std::to_string(n));
    for (auto x : g.g)
        if (x != 1 && x != -1) throw DataError("gauge entries must be +-1");
}

}  // namespace

IsingProblem apply_gauge(const IsingProblem& p, const GaugeVector& g) {
    check_gauge(g, p.size());
    std::vector<double> h(p.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = g.g[i] * p.h()[i];
    std::vector<Coupler> cs = p.couplers();
    for (auto& c : cs) c.value *= g.g[c.i] * g.g[c.j];
    return IsingProblem(std::move(h), std::move(cs), p.lambda());
}

Spins ungauge(std::span<const std::int8_t> s, const GaugeVector& g) {
    check_gauge(g, s.size());
    Spins out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<std::int8_t>(g.g[i] * s[i]);
    return out;
}

void to_json(nlohmann::json& j, const IsingProblem& p) {
    nlohmann::json couplers = nlohmann::json::array();
    for (const auto& c : p.couplers()) couplers.push_back(nlohmann::json::array({c.i, c.j, c.value}));
    j = {{"n", p.size()}, {"h", p.h()}, {"J", couplers}, {"lambda", p.lambda()}};
}

void from_json(const nlohmann::json& j, IsingProblem& p) {
    try {
        const auto n = j.at("n").get<std::size_t>();
        auto h = j.at("h").get<std::vector<double>>();
        if (h.size() != n) throw DataError("field vector length differs from n");
        std::vector<Coupler> cs;
        for (const auto& c : j.at("J")) {
            if (!c.is_array() || c.size() != 3) throw DataError("couplers must be [i, j, value] triples");
            cs.push_back({c[0].get<std::size_t>(), c[1].get<std::size_t>(), c[2].get<double>()});
        }
        p = IsingProblem(std::move(h), std::move(cs), j.value("lambda", 0.0));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid Ising problem JSON: ") + e.what());
    }
}

}  // namespace qamlz
