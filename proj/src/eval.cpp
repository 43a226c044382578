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

#include "qamlz/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "qamlz/error.hpp"
#include "qamlz/rng.hpp"
#include "text_util.hpp"

namespace qamlz {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------
// Strong classifier

double strong_score(const AugmentedClassifierSet& aug, const Eigen::VectorXd& mu, std::span<const double> h) {
    if (h.size() != aug.n_var()) throw DataError("strong score: expected " + std::to_string(aug.n_var()) +
                                                 " weak outputs, got " + std::to_string(h.size()));
    if (static_cast<std::size_t>(mu.size()) != aug.size()) throw DataError("strong score: mu length mismatch");
    const auto c = aug.classify(h);
    double r = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) r += mu(static_cast<Eigen::Index>(i)) * c[i];
    return r;
}

double strong_score(const TrainedModel& model, const Dataset& d, const Event& e) {
    if (e.values.size() != d.schema().size())
        throw DataError("event " + std::to_string(e.id) + " has " + std::to_string(e.values.size()) +
                        " values but the schema has " + std::to_string(d.schema().size()));
    const auto h = model.pipeline.transform(d, e);
    return strong_score(model.augmentation, model.mu, h);
}

std::vector<double> strong_scores(const TrainedModel& model, const Dataset& d) {
    if (static_cast<std::size_t>(model.mu.size()) != model.augmentation.size())
        throw DataError("model mu length does not match its augmentation");
    const Eigen::MatrixXd h = model.pipeline.transform(d);
    const Eigen::VectorXd r =
        model.augmentation.sign_matrix(h) * model.mu / static_cast<double>(model.augmentation.n_var());
    return {r.data(), r.data() + r.size()};
}

// ---------------------------------------------------------------------------
// Figure of merit

void FomParams::validate() const {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("background systematic f must be finite and >= 0");
}

double asimov(double s, double b) {
    if (!(b > 0.0)) throw DataError("figure of merit needs B > 0");
    if (!(s >= 0.0)) throw DataError("figure of merit needs S >= 0");
    return std::sqrt(std::max(0.0, 2.0 * ((s + b) * std::log1p(s / b) - s)));
}

double fom(double s, double b, double f, bool* clamped) {
    if (!(b > 0.0)) throw DataError("figure of merit needs B > 0");
    if (!(s >= 0.0)) throw DataError("figure of merit needs S >= 0");
    if (!(f >= 0.0)) throw DataError("figure of merit needs f >= 0");
    if (clamped) *clamped = false;
    double radicand;
    if (f == 0.0) {
        radicand = 2.0 * ((s + b) * std::log1p(s / b) - s);
    } else {
        const double var = (f * b) * (f * b);
        // ln[(S+B)(B+v) / (B^2+(S+B)v)] = ln(1 + S*B / (B^2+(S+B)v))
        const double t1 = (s + b) * std::log1p(s * b / (b * b + (s + b) * var));
        const double t2 = (b * b / var) * std::log1p(var * s / (b * (b + var)));
        radicand = 2.0 * (t1 - t2);
    }
    if (radicand < 0.0) {
        if (clamped) *clamped = true;
        return 0.0;
    }
    return std::sqrt(radicand);
}

namespace {

struct SortedClass {
    std::vector<double> scores;    // ascending
    std::vector<double> tail_sum;  // tail_sum[k] = sum of weights at positions >= k
};

SortedClass sort_class(const ScoredEvents& ev, const char* name) {
    if (ev.scores.size() != ev.weights.size())
        throw DataError(std::string(name) + " scores and weights differ in length");
    std::vector<std::size_t> order(ev.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ev.scores[a] < ev.scores[b]; });
    SortedClass out;
    out.scores.reserve(order.size());
    out.tail_sum.assign(order.size() + 1, 0.0);
    for (std::size_t k : order) out.scores.push_back(ev.scores[k]);
    for (std::size_t k = order.size(); k-- > 0;) out.tail_sum[k] = out.tail_sum[k + 1] + ev.weights[order[k]];
    return out;
}

}  // namespace

FomCurve fom_scan(const ScoredEvents& signal, const ScoredEvents& background, const FomParams& params,
                  const ScanOptions& options) {
    params.validate();
    if (signal.scores.empty() || background.scores.empty())
        throw DataError("cut scan needs events of both classes");
    const SortedClass sig = sort_class(signal, "signal");
    const SortedClass bkg = sort_class(background, "background");

    FomCurve c;
    if (options.grid) {
        c.cuts = *options.grid;
        if (c.cuts.empty()) throw ConfigError("cut grid is empty");
        if (!std::is_sorted(c.cuts.begin(), c.cuts.end())) throw ConfigError("cut grid must be ascending");
    } else {
        if (options.n_points < 1) throw ConfigError("cut grid needs at least one point");
        // The lowest cut sits just below the smallest score, so it keeps every event.
        const double smallest = std::min(sig.scores.front(), bkg.scores.front());
        const double hi = std::max(sig.scores.back(), bkg.scores.back());
        const double lo = std::nextafter(smallest, -std::numeric_limits<double>::infinity());
        c.cuts.resize(options.n_points);
        for (std::size_t k = 0; k < options.n_points; ++k)
            c.cuts[k] = options.n_points == 1 || !(hi > smallest)
                            ? lo
                            : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(options.n_points - 1);
    }

    const std::size_t n = c.cuts.size();
    c.fom_values.resize(n);
    c.signal_yield.resize(n);
    c.background_yield.resize(n);
    c.n_signal.resize(n);
    c.n_background.resize(n);
    c.valid.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double cut = c.cuts[k];
        const auto is = static_cast<std::size_t>(std::upper_bound(sig.scores.begin(), sig.scores.end(), cut) -
                                                 sig.scores.begin());
        const auto ib = static_cast<std::size_t>(std::upper_bound(bkg.scores.begin(), bkg.scores.end(), cut) -
                                                 bkg.scores.begin());
        c.n_signal[k] = sig.scores.size() - is;
        c.n_background[k] = bkg.scores.size() - ib;
        c.signal_yield[k] = sig.tail_sum[is];
        c.background_yield[k] = bkg.tail_sum[ib];
        const bool enough = c.n_signal[k] >= options.min_events && c.n_background[k] >= options.min_events;
        const bool defined = c.background_yield[k] > 0.0 && c.signal_yield[k] >= 0.0;
        c.valid[k] = enough && defined;
        c.fom_values[k] = defined ? fom(c.signal_yield[k], c.background_yield[k], params) : kNaN;
        if (c.valid[k] && (!c.best_index || c.fom_values[k] > c.fom_values[*c.best_index])) c.best_index = k;
    }
    if (c.best_index) {
        const std::size_t k = *c.best_index;
        c.best_cut = c.cuts[k];
        c.best_fom = c.fom_values[k];
        c.S_at_best = c.signal_yield[k];
        c.B_at_best = c.background_yield[k];
    } else {
        c.best_cut = kNaN;
        c.best_fom = kNaN;
    }
    return c;
}

FomCurve fom_scan(const Dataset& d, std::span<const double> scores, const FomParams& params,
                  const ScanOptions& options) {
    if (scores.size() != d.size())
        throw DataError("cut scan: " + std::to_string(scores.size()) + " scores for " + std::to_string(d.size()) +
                        " events");
    ScoredEvents sig, bkg;
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto& dst = d.events()[i].is_signal() ? sig : bkg;
        dst.scores.push_back(scores[i]);
        dst.weights.push_back(d.events()[i].weight);
    }
    return fom_scan(sig, bkg, params, options);
}

double baseline_fom(const Dataset& d, const FomParams& params) {
    return fom(d.signal_weight(), d.background_weight(), params);
}

void write_fom_curve(std::ostream& out, const FomCurve& c) {
    using detail::format_double;
    out << "cut,fom,S,B,n_S,n_B,valid\n";
    for (std::size_t k = 0; k < c.cuts.size(); ++k) {
        out << format_double(c.cuts[k]) << ',' << (std::isnan(c.fom_values[k]) ? "nan" : format_double(c.fom_values[k]))
            << ',' << format_double(c.signal_yield[k]) << ',' << format_double(c.background_yield[k]) << ','
            << c.n_signal[k] << ',' << c.n_background[k] << ',' << (c.valid[k] ? 1 : 0) << '\n';
    }
}

namespace {

nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

void to_json(nlohmann::json& j, const FomCurve& c) {
    nlohmann::json values = nlohmann::json::array();
    for (double v : c.fom_values) values.push_back(number_or_null(v));
    j = {{"cuts", c.cuts},
         {"fom", values},
         {"S", c.signal_yield},
         {"B", c.background_yield},
         {"n_S", c.n_signal},
         {"n_B", c.n_background},
         {"valid", c.valid},
         {"best_cut", number_or_null(c.best_cut)},
         {"best_fom", number_or_null(c.best_fom)},
         {"S_at_best", c.S_at_best},
         {"B_at_best", c.B_at_best}};
}

// ---------------------------------------------------------------------------
// Run-to-run spread

std::uint64_t run_seed(std::uint64_t base, std::size_t r) {
    return Rng{base, stream_key(Stream::Training), static_cast<std::uint64_t>(r)}.next();
}

UncertaintyReport run_uncertainty(const ZoomConfig& cfg, std::size_t n_runs, const SampleSplit& data,
                                  const FeaturePipeline& pipeline, const FomParams& params,
                                  const ScanOptions& scan, std::size_t jobs) {
    if (n_runs < 2) throw ConfigError("run-to-run spread needs at least two runs");
    cfg.validate();
    params.validate();
    UncertaintyReport rep;
    rep.seeds.resize(n_runs);
    rep.best_foms.resize(n_runs);
    rep.best_cuts.resize(n_runs);
    for (std::size_t r = 0; r < n_runs; ++r) rep.seeds[r] = run_seed(cfg.seed, r);
    detail::parallel_for(n_runs, jobs, [&](std::size_t r) {
        ZoomConfig run_cfg = cfg;
        run_cfg.seed = rep.seeds[r];
        const TrainedModel model = run_qamlz(data.train, data.test, pipeline, run_cfg);
        const FomCurve curve = fom_scan(data.assess, strong_scores(model, data.assess), params, scan);
        rep.best_foms[r] = curve.best_fom;
        rep.best_cuts[r] = curve.best_cut;
    });
    double sum = 0.0;
    for (double v : rep.best_foms) sum += v;
    rep.mean = sum / static_cast<double>(n_runs);
    double ss = 0.0;
    for (double v : rep.best_foms) ss += (v - rep.mean) * (v - rep.mean);
    rep.std = std::sqrt(ss / static_cast<double>(n_runs - 1));
    return rep;
}

void write_uncertainty(std::ostream& out, const UncertaintyReport& r) {
    using detail::format_double;
    out << "run,seed,best_fom,best_cut\n";
    for (std::size_t k = 0; k < r.best_foms.size(); ++k)
        out << k << ',' << r.seeds[k] << ',' << format_double(r.best_foms[k]) << ',' << format_double(r.best_cuts[k])
            << '\n';
}

void to_json(nlohmann::json& j, const UncertaintyReport& r) {
    nlohmann::json foms = nlohmann::json::array(), cuts = nlohmann::json::array();
    for (double v : r.best_foms) foms.push_back(number_or_null(v));
    for (double v : r.best_cuts) cuts.push_back(number_or_null(v));
    j = {{"seeds", r.seeds},
         {"best_foms", foms},
         {"best_cuts", cuts},
         {"mean", number_or_null(r.mean)},
         {"std", number_or_null(r.std)}};
}

// ---------------------------------------------------------------------------
// Over-training and diagnostics

namespace {

// Asymptotic Kolmogorov distribution tail Q(lambda).
double kolmogorov_q(double lambda) {
    const double a2 = -2.0 * lambda * lambda;
    double fac = 2.0, sum = 0.0, previous = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = fac * std::exp(a2 * j * j);
        sum += term;
        if (std::abs(term) <= 1e-3 * previous || std::abs(term) <= 1e-8 * sum) return std::clamp(sum, 0.0, 1.0);
        fac = -fac;
        previous = std::abs(term);
    }
    return 1.0;
}

}  // namespace

KsResult ks_test(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DataError("KS test needs two non-empty samples");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double n1 = static_cast<double>(x.size()), n2 = static_cast<double>(y.size());
    std::size_t i = 0, k = 0;
    double d = 0.0;
    while (i < x.size() && k < y.size()) {
        const double v = std::min(x[i], y[k]);
        while (i < x.size() && x[i] == v) ++i;
        while (k < y.size() && y[k] == v) ++k;
        d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(k) / n2));
    }
    const double ne = std::sqrt(n1 * n2 / (n1 + n2));
    return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

std::vector<ClassKs> overtraining_check(const Dataset& train, std::span<const double> train_scores,
                                        const Dataset& test, std::span<const double> test_scores) {
    if (train_scores.size() != train.size() || test_scores.size() != test.size())
        throw DataError("over-training check: scores and events differ in length");
    std::vector<ClassKs> out;
    for (Process p : {Process::Signal, Process::WJets, Process::TTbar, Process::Other}) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < train.size(); ++i)
            if (train.events()[i].process == p) a.push_back(train_scores[i]);
        for (std::size_t i = 0; i < test.size(); ++i)
            if (test.events()[i].process == p) b.push_back(test_scores[i]);
        if (a.empty() || b.empty()) continue;
        out.push_back({p, a.size(), b.size(), ks_test(a, b)});
    }
    return out;
}

void write_overtraining(std::ostream& out, const std::vector<ClassKs>& rows) {
    out << "process,n_train,n_test,ks_statistic,p_value\n";
    for (const auto& r : rows)
        out << process_name(r.process) << ',' << r.n_train << ',' << r.n_test << ','
            << detail::format_double(r.ks.statistic) << ',' << detail::format_double(r.ks.p_value) << '\n';
}

std::vector<VariableRank> rank_variables(const Dataset& d, const std::vector<std::string>& variables,
                                         const FomParams& params, const ScanOptions& options) {
    std::vector<VariableRank> out;
    for (const auto& v : variables) {
        const std::vector<double> x = d.column(v);
        VariableRank best{v, kNaN, 1, kNaN};
        for (int dir : {1, -1}) {
            std::vector<double> s(x);
            if (dir < 0)
                for (auto& e : s) e = -e;
            const FomCurve c = fom_scan(d, s, params, options);
            if (c.has_valid_cut() && (std::isnan(best.best_fom) || c.best_fom > best.best_fom))
                best = {v, c.best_fom, dir, dir > 0 ? c.best_cut : -c.best_cut};
        }
        out.push_back(best);
    }
    std::stable_sort(out.begin(), out.end(), [](const VariableRank& a, const VariableRank& b) {
        if (std::isnan(a.best_fom)) return false;
        if (std::isnan(b.best_fom)) return true;
        return a.best_fom > b.best_fom;
    });
    return out;
}

double weighted_auc(const ScoredEvents& signal, const ScoredEvents& background) {
    const SortedClass sig = sort_class(signal, "signal");
    const SortedClass bkg = sort_class(background, "background");
    const double ws = sig.tail_sum[0], wb = bkg.tail_sum[0];
    if (!(ws > 0.0) || !(wb > 0.0)) throw DataError("AUC needs positive weight in both classes");
    // For each distinct background score, signal weight strictly above plus half of ties.
    double area = 0.0;
    std::size_t k = 0;
    while (k < bkg.scores.size()) {
        const double v = bkg.scores[k];
        std::size_t end = k;
        while (end < bkg.scores.size() && bkg.scores[end] == v) ++end;
        const double wb_here = bkg.tail_sum[k] - bkg.tail_sum[end];
        const auto lo = static_cast<std::size_t>(std::lower_bound(sig.scores.begin(), sig.scores.end(), v) -
                                                 sig.scores.begin());
        const auto hi = static_cast<std::size_t>(std::upper_bound(sig.scores.begin(), sig.scores.end(), v) -
                                                 sig.scores.begin());
        area += wb_here * (sig.tail_sum[hi] + 0.5 * (sig.tail_sum[lo] - sig.tail_sum[hi]));
        k = end;
    }
    return area / (ws * wb);
}

}  // namespace qamlz
