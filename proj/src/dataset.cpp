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

#include "qamlz/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qamlz/error.hpp"
#include "qamlz/rng.hpp"
#include "text_util.hpp"

namespace qamlz {

std::string_view process_name(Process p) {
    switch (p) {
        case Process::Signal: return "signal";
        case Process::WJets: return "wjets";
        case Process::TTbar: return "ttbar";
        case Process::Other: return "other";
    }
    return "other";
}

Process parse_process(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "signal" || lower == "0") return Process::Signal;
    if (lower == "wjets" || lower == "w+jets" || lower == "1") return Process::WJets;
    if (lower == "ttbar" || lower == "2") return Process::TTbar;
    if (lower == "other" || lower == "3") return Process::Other;
    throw DataError("unknown process '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

Dataset::Dataset(std::vector<std::string> schema, std::vector<Event> events)
    : schema_(std::move(schema)) {
    events_.reserve(events.size());
    for (auto& e : events) add(std::move(e));
}

void Dataset::add(Event event) {
    if (event.values.size() != schema_.size())
        throw DataError("event " + std::to_string(event.id) + " has " +
                        std::to_string(event.values.size()) + " values, schema has " +
                        std::to_string(schema_.size()));
    if (event.tag != 1 && event.tag != -1)
        throw DataError("event " + std::to_string(event.id) + " has tag " +
                        std::to_string(event.tag) + ", expected +1 or -1");
    if (!(event.weight >= 0.0) || !std::isfinite(event.weight))
        throw DataError("event " + std::to_string(event.id) + " has invalid weight");
    for (std::size_t k = 0; k < event.values.size(); ++k)
        if (!std::isfinite(event.values[k]))
            throw DataError("event " + std::to_string(event.id) + " has non-finite '" +
                            schema_[k] + "'");
    events_.push_back(std::move(event));
}

std::optional<std::size_t> Dataset::find(std::string_view variable) const {
    auto it = std::find(schema_.begin(), schema_.end(), variable);
    if (it == schema_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - schema_.begin());
}

std::size_t Dataset::index_of(std::string_view variable) const {
    if (auto k = find(variable)) return *k;
    throw DataError("variable '" + std::string(variable) + "' is not in the schema");
}

std::vector<double> Dataset::column(std::string_view variable) const {
    const std::size_t k = index_of(variable);
    std::vector<double> out;
    out.reserve(events_.size());
    for (const auto& e : events_) out.push_back(e.values[k]);
    return out;
}

double Dataset::total_weight() const {
    double s = 0.0;
    for (const auto& e : events_) s += e.weight;
    return s;
}

double Dataset::signal_weight() const {
    double s = 0.0;
    for (const auto& e : events_)
        if (e.is_signal()) s += e.weight;
    return s;
}

double Dataset::background_weight() const {
    double s = 0.0;
    for (const auto& e : events_)
        if (!e.is_signal()) s += e.weight;
    return s;
}

std::size_t Dataset::signal_count() const {
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [](const Event& e) { return e.is_signal(); }));
}

Dataset Dataset::filter(const std::function<bool(const Event&)>& keep) const {
    Dataset out(schema_);
    out.events_.reserve(events_.size());
    for (const auto& e : events_)
        if (keep(e)) out.events_.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

void validate_model(const ProcessModel& m, std::size_t dim, const std::string& label) {
    if (m.mean.size() != dim) throw ConfigError(label + ": mean has wrong dimension");
    if (m.covariance.size() != dim) throw ConfigError(label + ": covariance has wrong dimension");
    for (const auto& row : m.covariance)
        if (row.size() != dim) throw ConfigError(label + ": covariance is not square");
    for (double v : m.mean)
        if (!std::isfinite(v)) throw ConfigError(label + ": non-finite mean");
    double scale = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            const double a = m.covariance[i][j];
            if (!std::isfinite(a)) throw ConfigError(label + ": non-finite covariance");
            scale = std::max(scale, std::abs(a));
            if (std::abs(a - m.covariance[j][i]) > 1e-12 * std::max(1.0, std::abs(a)))
                throw ConfigError(label + ": covariance is not symmetric");
        }
    Eigen::MatrixXd cov(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) cov(i, j) = m.covariance[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    if (dim > 0 && es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, scale))
        throw ConfigError(label + ": covariance is not positive semi-definite");
}

/// Returns L with L L^T = covariance, built from the eigendecomposition so
/// semi-definite matrices are accepted.
Eigen::MatrixXd covariance_factor(const ProcessModel& m) {
    const auto dim = static_cast<Eigen::Index>(m.mean.size());
    Eigen::MatrixXd cov(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) cov(i, j) = m.covariance[i][j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

}  // namespace

void GeneratorConfig::validate() const {
    const std::size_t dim = schema.size();
    if (dim == 0) throw ConfigError("generator schema is empty");
    if (!(signal_fraction > 0.0 && signal_fraction < 1.0))
        throw ConfigError("signal_fraction must lie strictly between 0 and 1 (both classes required)");
    if (!(signal_yield > 0.0) || !(background_yield > 0.0))
        throw ConfigError("class yields must be positive");
    validate_model(signal, dim, "signal");
    if (backgrounds.empty()) throw ConfigError("at least one background process is required");
    double total = 0.0;
    for (const auto& b : backgrounds) {
        validate_model(b, dim, std::string(process_name(b.process)));
        if (!(b.fraction > 0.0))
            throw ConfigError("background '" + std::string(process_name(b.process)) +
                              "' has zero probability");
        total += b.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("background mixture fractions must sum to 1");
    if (!lower.empty() && lower.size() != dim) throw ConfigError("lower bounds have wrong dimension");
    if (!upper.empty() && upper.size() != dim) throw ConfigError("upper bounds have wrong dimension");
    if (!discretization.empty() && discretization.size() != dim)
        throw ConfigError("discretization list has wrong dimension");
    for (std::size_t k = 0; k < dim; ++k) {
        const double lo = lower.empty() ? -INFINITY : lower[k];
        const double hi = upper.empty() ? INFINITY : upper[k];
        if (!(lo < hi)) throw ConfigError("empty truncation interval for '" + schema[k] + "'");
    }
}

namespace {

ProcessModel make_model(Process p, double fraction, const std::vector<double>& mean,
                        const std::vector<double>& sd,
                        const std::vector<std::tuple<int, int, double>>& correlations) {
    ProcessModel m;
    m.process = p;
    m.fraction = fraction;
    m.mean = mean;
    const std::size_t n = mean.size();
    m.covariance.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) m.covariance[i][i] = sd[i] * sd[i];
    for (auto [i, j, rho] : correlations) {
        m.covariance[i][j] = m.covariance[j][i] = rho * sd[i] * sd[j];
    }
    return m;
}

}  // namespace

GeneratorConfig default_generator() {
    GeneratorConfig desc;
    desc.schema = {"pt_l",   "eta_l", "q_l",   "met",      "mt",     "njets",  "pt_j1",  "ht",
                   "disc_b", "nb",    "pt_b",  "dr_lb",    "eta_j1", "lep_muon", "pt_l2", "pt_j2",
                   "dphi_j1j2"};
    enum { PtL, EtaL, QL, Met, Mt, NJets, PtJ1, Ht, DiscB, Nb, PtB, DrLb, EtaJ1, LepMu, PtL2, PtJ2, Dphi };
    const std::vector<std::tuple<int, int, double>> corr = {
        {Met, Ht, 0.35}, {PtJ1, Ht, 0.65}, {NJets, Ht, 0.45}, {PtL, Mt, 0.35},
        {DiscB, Nb, 0.55}, {PtJ1, Met, 0.30}, {PtJ2, NJets, 0.30}};

    desc.signal = make_model(
        Process::Signal, 1.0,
        {14, 0, 0, 400, 70, 2.5, 330, 420, 0.35, 0.6, 60, 1.6, 0, 0, 0, 80, 1.5},
        {8, 1.1, 1, 90, 35, 1.2, 90, 120, 0.25, 0.7, 35, 0.7, 1.0, 1, 4, 40, 0.8}, corr);
    desc.backgrounds = {
        make_model(Process::WJets, 0.7,
                   {45, 0, 0.2, 340, 85, 2.0, 300, 360, 0.25, 0.3, 70, 2.4, 0, 0, 0, 70, 1.6},
                   {30, 1.3, 1, 70, 45, 1.0, 80, 110, 0.2, 0.5, 45, 0.9, 1.1, 1, 4, 40, 0.8}, corr),
        make_model(Process::TTbar, 0.3,
                   {40, 0, 0, 330, 110, 4.0, 280, 480, 0.7, 1.5, 110, 2.0, 0, 0, 8, 110, 1.7},
                   {28, 1.1, 1, 60, 60, 1.4, 80, 150, 0.25, 0.8, 60, 0.8, 1.0, 1, 10, 50, 0.8}, corr),
    };
    desc.signal_fraction = 0.4;
    desc.signal_yield = 7000.0;
    desc.background_yield = 200000.0;
    const double inf = INFINITY;
    desc.lower = {0, -2.5, -inf, 0, 0, 0.5, 0, 0, 0, 0, 0, 0, -4.7, -inf, 0, 0, 0};
    desc.upper = {inf, 2.5, inf, inf, inf, inf, inf, inf, 1, inf, inf, 6, 4.7, inf, inf, inf, M_PI};
    using D = Discretization;
    desc.discretization = {D::None, D::None, D::Sign,  D::None, D::None, D::Round,
                           D::None, D::None, D::None,  D::Round, D::None, D::None,
                           D::None, D::Sign, D::None,  D::None, D::None};
    return desc;
}

GeneratorConfig gaussian_toy_generator(double signal_mean, double background_mean, double sigma,
                                double signal_fraction) {
    GeneratorConfig desc;
    desc.schema = {"x"};
    desc.signal = make_model(Process::Signal, 1.0, {signal_mean}, {sigma}, {});
    desc.backgrounds = {make_model(Process::Other, 1.0, {background_mean}, {sigma}, {})};
    desc.signal_fraction = signal_fraction;
    desc.signal_yield = 1000.0;
    desc.background_yield = 1000.0;
    return desc;
}

Dataset generate_synthetic(const GeneratorConfig& desc, std::size_t n_events, std::uint64_t seed) {
    desc.validate();
    if (n_events == 0) throw ConfigError("n_events must be positive");
    const std::size_t dim = desc.schema.size();

    std::vector<const ProcessModel*> models{&desc.signal};
    for (const auto& b : desc.backgrounds) models.push_back(&b);
    std::vector<Eigen::MatrixXd> factors;
    for (const auto* m : models) factors.push_back(covariance_factor(*m));

    auto in_bounds = [&](const Eigen::VectorXd& x) {
        for (std::size_t k = 0; k < dim; ++k) {
            const auto ik = static_cast<Eigen::Index>(k);
            if (!desc.lower.empty() && x(ik) < desc.lower[k]) return false;
            if (!desc.upper.empty() && x(ik) > desc.upper[k]) return false;
        }
        return true;
    };

    std::vector<Event> events(n_events);
    for (std::size_t n = 0; n < n_events; ++n) {
        Rng rng{seed, stream_key(Stream::Generate), n};
        std::size_t which = 0;
        if (rng.uniform() >= desc.signal_fraction) {
            const double u = rng.uniform();
            double acc = 0.0;
            which = desc.backgrounds.size();
            for (std::size_t b = 0; b < desc.backgrounds.size(); ++b) {
                acc += desc.backgrounds[b].fraction;
                if (u < acc) {
                    which = b + 1;
                    break;
                }
            }
        }
        const ProcessModel& m = *models[which];
        Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(m.mean.data(), static_cast<Eigen::Index>(dim));
        Eigen::VectorXd z(static_cast<Eigen::Index>(dim));
        Eigen::VectorXd x;
        // Rejection sampling for the truncation; the clamp after the last
        // attempt only matters for pathological bounds.
        for (int attempt = 0; attempt < 1000; ++attempt) {
            for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
            x = mean + factors[which] * z;
            if (in_bounds(x)) break;
        }
        Event& e = events[n];
        e.id = n;
        e.process = m.process;
        e.tag = which == 0 ? 1 : -1;
        e.values.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            double v = x(static_cast<Eigen::Index>(k));
            if (!desc.lower.empty()) v = std::max(v, desc.lower[k]);
            if (!desc.upper.empty()) v = std::min(v, desc.upper[k]);
            if (!desc.discretization.empty()) {
                if (desc.discretization[k] == Discretization::Round) v = std::round(v);
                else if (desc.discretization[k] == Discretization::Sign) v = v >= 0.0 ? 1.0 : -1.0;
            }
            e.values[k] = v;
        }
    }

    std::size_t n_signal = 0;
    for (const auto& e : events) n_signal += e.tag > 0;
    const std::size_t n_background = n_events - n_signal;
    if (n_signal == 0 || n_background == 0)
        throw ConfigError("generated sample lacks one class; increase n_events");
    const double w_signal = desc.signal_yield / static_cast<double>(n_signal);
    const double w_background = desc.background_yield / static_cast<double>(n_background);
    for (auto& e : events) e.weight = e.tag > 0 ? w_signal : w_background;
    return Dataset(desc.schema, std::move(events));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::string_view kTag = "tag";
constexpr std::string_view kWeight = "weight";
constexpr std::string_view kProcess = "process";

}  // namespace

std::vector<std::string> read_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open event file '" + path.string() + "'");
    std::string header;
    if (!std::getline(in, header)) throw DataError("event file '" + path.string() + "' has no header");
    std::vector<std::string> out;
    for (auto& name : detail::split_csv_line(header))
        if (name != kTag && name != kWeight && name != kProcess) out.push_back(name);
    return out;
}

Dataset read_events(std::istream& in, const std::vector<std::string>& schema) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("event file has no header row");
    const auto header = detail::split_csv_line(line);
    auto column_of = [&](std::string_view name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto tag_col = column_of(kTag);
    const auto weight_col = column_of(kWeight);
    const auto process_col = column_of(kProcess);
    if (!tag_col) throw DataError("missing column 'tag'");
    if (!weight_col) throw DataError("missing column 'weight'");
    std::vector<std::size_t> var_cols;
    for (const auto& v : schema) {
        auto c = column_of(v);
        if (!c) throw DataError("missing column '" + v + "'");
        var_cols.push_back(*c);
    }

    Dataset d(schema);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        auto cell = [&](std::size_t col) -> const std::string& {
            if (col >= cells.size())
                throw DataError("row " + std::to_string(row) + ", column '" + header[col] +
                                "': missing cell");
            return cells[col];
        };
        auto number = [&](std::size_t col) {
            const auto v = detail::parse_double(cell(col));
            if (!v || !std::isfinite(*v))
                throw DataError("row " + std::to_string(row) + ", column '" + header[col] +
                                "': not a finite number ('" + cell(col) + "')");
            return *v;
        };
        Event e;
        e.id = row - 1;
        const double tag = number(*tag_col);
        if (tag != 1.0 && tag != -1.0)
            throw DataError("row " + std::to_string(row) + ", column 'tag': expected +1 or -1, got '" +
                            cell(*tag_col) + "'");
        e.tag = static_cast<int>(tag);
        e.weight = number(*weight_col);
        if (e.weight < 0.0)
            throw DataError("row " + std::to_string(row) + ", column 'weight': negative weight");
        if (process_col) {
            try {
                e.process = parse_process(cell(*process_col));
            } catch (const DataError&) {
                throw DataError("row " + std::to_string(row) + ", column 'process': unknown process '" +
                                cell(*process_col) + "'");
            }
        } else {
            e.process = e.tag > 0 ? Process::Signal : Process::Other;
        }
        e.values.reserve(var_cols.size());
        for (std::size_t c : var_cols) e.values.push_back(number(c));
        d.add(std::move(e));
    }
    return d;
}

Dataset load_events(const std::filesystem::path& path, const std::vector<std::string>& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open event file '" + path.string() + "'");
    return read_events(in, schema);
}

void write_events(std::ostream& out, const Dataset& d) {
    out << kTag << ',' << kWeight << ',' << kProcess;
    for (const auto& v : d.schema()) out << ',' << v;
    out << '\n';
    for (const auto& e : d.events()) {
        out << (e.tag > 0 ? "1" : "-1") << ',' << detail::format_double(e.weight) << ','
            << process_name(e.process);
        for (double v : e.values) out << ',' << detail::format_double(v);
        out << '\n';
    }
}

void save_events(const std::filesystem::path& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write event file '" + path.string() + "'");
    write_events(out, d);
    if (!out) throw DataError("failed writing event file '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Preselection

std::string_view comparator_symbol(Comparator c) {
    switch (c) {
        case Comparator::Less: return "<";
        case Comparator::Greater: return ">";
        case Comparator::LessEqual: return "<=";
        case Comparator::GreaterEqual: return ">=";
        case Comparator::AbsLess: return "abs<";
    }
    return "?";
}

Comparator parse_comparator(std::string_view symbol) {
    if (symbol == "<") return Comparator::Less;
    if (symbol == ">") return Comparator::Greater;
    if (symbol == "<=") return Comparator::LessEqual;
    if (symbol == ">=") return Comparator::GreaterEqual;
    if (symbol == "abs<") return Comparator::AbsLess;
    throw ConfigError("unknown comparator '" + std::string(symbol) + "'");
}

bool compare(double value, Comparator c, double threshold) {
    switch (c) {
        case Comparator::Less: return value < threshold;
        case Comparator::Greater: return value > threshold;
        case Comparator::LessEqual: return value <= threshold;
        case Comparator::GreaterEqual: return value >= threshold;
        case Comparator::AbsLess: return std::abs(value) < threshold;
    }
    return false;
}

CutSet default_preselection() {
    using C = Comparator;
    const Condition muon{"lep_muon", C::Greater, 0.0};
    const Condition electron{"lep_muon", C::Less, 0.0};
    CutSet cuts;
    cuts.cuts = {
        {"met", C::Greater, 280.0, std::nullopt},
        {"pt_j1", C::Greater, 110.0, std::nullopt},
        {"eta_j1", C::AbsLess, 2.4, std::nullopt},
        {"ht", C::Greater, 200.0, std::nullopt},
        {"pt_l", C::Greater, 3.5, muon},
        {"eta_l", C::AbsLess, 2.4, muon},
        {"pt_l", C::Greater, 5.0, electron},
        {"eta_l", C::AbsLess, 2.5, electron},
        {"pt_l2", C::LessEqual, 20.0, std::nullopt},
    };
    cuts.dijet = DijetRule{};
    return cuts;
}

Dataset apply_preselection(const Dataset& d, const CutSet& cuts) {
    struct Bound {
        std::size_t var;
        Comparator cmp;
        double threshold;
        std::optional<std::size_t> cond_var;
        Comparator cond_cmp;
        double cond_threshold;
    };
    std::vector<Bound> bound;
    for (const auto& c : cuts.cuts) {
        if (!std::isfinite(c.threshold)) throw ConfigError("cut on '" + c.variable + "' has non-finite threshold");
        Bound b{d.index_of(c.variable), c.comparator, c.threshold, std::nullopt, Comparator::Greater, 0.0};
        if (c.when) {
            b.cond_var = d.index_of(c.when->variable);
            b.cond_cmp = c.when->comparator;
            b.cond_threshold = c.when->threshold;
        }
        bound.push_back(b);
    }
    std::optional<std::pair<std::size_t, std::size_t>> dijet;
    if (cuts.dijet) dijet = {d.index_of(cuts.dijet->second_jet_pt), d.index_of(cuts.dijet->delta_phi)};

    return d.filter([&](const Event& e) {
        for (const auto& b : bound) {
            if (b.cond_var && !compare(e.values[*b.cond_var], b.cond_cmp, b.cond_threshold)) continue;
            if (!compare(e.values[b.var], b.cmp, b.threshold)) return false;
        }
        if (dijet && e.values[dijet->first] > cuts.dijet->pt_threshold &&
            !(std::abs(e.values[dijet->second]) < cuts.dijet->max_delta_phi))
            return false;
        return true;
    });
}

// ---------------------------------------------------------------------------
// Splitting

SampleSplit split_samples(const Dataset& d, std::uint64_t seed, const SplitOptions& options) {
    if (d.size() < 4) throw DataError("at least 4 events are required to split");
    if (!(options.qa_fraction > 0.0 && options.qa_fraction < 1.0) ||
        !(options.train_fraction > 0.0 && options.train_fraction < 1.0))
        throw ConfigError("split fractions must lie strictly between 0 and 1");

    std::vector<std::size_t> pool;
    std::vector<std::size_t> isolated;
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (options.assess_only && options.assess_only(d.events()[k])) isolated.push_back(k);
        else pool.push_back(k);
    }

    Rng rng{seed, stream_key(Stream::Split)};
    for (std::size_t k = pool.size(); k > 1; --k) {
        const auto j = static_cast<std::size_t>(rng.below(k));
        std::swap(pool[k - 1], pool[j]);
    }

    const auto n_qa = static_cast<std::size_t>(std::floor(options.qa_fraction * static_cast<double>(pool.size()) + 1e-9));
    const auto n_train = static_cast<std::size_t>(std::ceil(options.train_fraction * static_cast<double>(n_qa) - 1e-9));

    SampleSplit out{Dataset(d.schema()), Dataset(d.schema()), Dataset(d.schema()), seed};
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const Event& e = d.events()[pool[k]];
        if (k < n_train) out.train.add(e);
        else if (k < n_qa) out.test.add(e);
        else out.assess.add(e);
    }
    for (std::size_t k : isolated) out.assess.add(d.events()[k]);
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string_view discretization_name(Discretization d) {
    switch (d) {
        case Discretization::None: return "none";
        case Discretization::Round: return "round";
        case Discretization::Sign: return "sign";
    }
    return "none";
}

Discretization parse_discretization(const std::string& s) {
    if (s == "none") return Discretization::None;
    if (s == "round") return Discretization::Round;
    if (s == "sign") return Discretization::Sign;
    throw ConfigError("unknown discretization '" + s + "'");
}

nlohmann::json bound_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double bound_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "+inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        throw ConfigError("bad bound '" + s + "'");
    }
    if (j.is_null()) return NAN;
    return j.get<double>();
}

nlohmann::json model_json(const ProcessModel& m) {
    return {{"process", std::string(process_name(m.process))},
            {"fraction", m.fraction},
            {"mean", m.mean},
            {"covariance", m.covariance}};
}

ProcessModel model_from_json(const nlohmann::json& j) {
    ProcessModel m;
    m.process = parse_process(j.value("process", std::string("signal")));
    m.fraction = j.value("fraction", 1.0);
    m.mean = j.at("mean").get<std::vector<double>>();
    m.covariance = j.at("covariance").get<std::vector<std::vector<double>>>();
    return m;
}

}  // namespace

void to_json(nlohmann::json& j, const GeneratorConfig& desc) {
    j = nlohmann::json::object();
    j["schema"] = desc.schema;
    j["signal"] = model_json(desc.signal);
    j["backgrounds"] = nlohmann::json::array();
    for (const auto& b : desc.backgrounds) j["backgrounds"].push_back(model_json(b));
    j["signal_fraction"] = desc.signal_fraction;
    j["signal_yield"] = desc.signal_yield;
    j["background_yield"] = desc.background_yield;
    auto bounds = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(bound_json(x));
        return a;
    };
    j["lower"] = bounds(desc.lower);
    j["upper"] = bounds(desc.upper);
    j["discretization"] = nlohmann::json::array();
    for (auto d : desc.discretization) j["discretization"].push_back(std::string(discretization_name(d)));
}

void from_json(const nlohmann::json& j, GeneratorConfig& desc) {
    try {
        desc = GeneratorConfig{};
        desc.schema = j.at("schema").get<std::vector<std::string>>();
        desc.signal = model_from_json(j.at("signal"));
        desc.signal.process = Process::Signal;
        for (const auto& b : j.at("backgrounds")) desc.backgrounds.push_back(model_from_json(b));
        desc.signal_fraction = j.value("signal_fraction", 0.4);
        desc.signal_yield = j.value("signal_yield", 7000.0);
        desc.background_yield = j.value("background_yield", 200000.0);
        for (const auto& x : j.value("lower", nlohmann::json::array())) desc.lower.push_back(bound_from_json(x));
        for (const auto& x : j.value("upper", nlohmann::json::array())) desc.upper.push_back(bound_from_json(x));
        for (const auto& x : j.value("discretization", nlohmann::json::array()))
            desc.discretization.push_back(parse_discretization(x.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid generator config: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const CutSet& cuts) {
    j = nlohmann::json::object();
    j["cuts"] = nlohmann::json::array();
    for (const auto& c : cuts.cuts) {
        nlohmann::json cj = {{"variable", c.variable},
                             {"comparator", std::string(comparator_symbol(c.comparator))},
                             {"threshold", c.threshold}};
        if (c.when)
            cj["when"] = {{"variable", c.when->variable},
                          {"comparator", std::string(comparator_symbol(c.when->comparator))},
                          {"threshold", c.when->threshold}};
        j["cuts"].push_back(cj);
    }
    if (cuts.dijet)
        j["dijet"] = {{"second_jet_pt", cuts.dijet->second_jet_pt},
                      {"delta_phi", cuts.dijet->delta_phi},
                      {"pt_threshold", cuts.dijet->pt_threshold},
                      {"max_delta_phi", cuts.dijet->max_delta_phi}};
}

void from_json(const nlohmann::json& j, CutSet& cuts) {
    try {
        cuts = CutSet{};
        for (const auto& cj : j.value("cuts", nlohmann::json::array())) {
            Cut c;
            c.variable = cj.at("variable").get<std::string>();
            c.comparator = parse_comparator(cj.at("comparator").get<std::string>());
            c.threshold = cj.at("threshold").get<double>();
            if (cj.contains("when")) {
                const auto& w = cj.at("when");
                c.when = Condition{w.at("variable").get<std::string>(),
                                   parse_comparator(w.at("comparator").get<std::string>()),
                                   w.at("threshold").get<double>()};
            }
            cuts.cuts.push_back(std::move(c));
        }
        if (j.contains("dijet")) {
            const auto& dj = j.at("dijet");
            DijetRule r;
            r.second_jet_pt = dj.value("second_jet_pt", r.second_jet_pt);
            r.delta_phi = dj.value("delta_phi", r.delta_phi);
            r.pt_threshold = dj.value("pt_threshold", r.pt_threshold);
            r.max_delta_phi = dj.value("max_delta_phi", r.max_delta_phi);
            cuts.dijet = r;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid cut set: ") + e.what());
    }
}

}  // namespace qamlz
