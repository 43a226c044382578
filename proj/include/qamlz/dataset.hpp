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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace qamlz {

enum class Process : std::uint8_t { Signal = 0, WJets = 1, TTbar = 2, Other = 3 };

std::string_view process_name(Process p);
/// Accepts the names produced by process_name (case-insensitive) or 0..3.
Process parse_process(std::string_view text);

/// One weighted, tagged event. `values` is aligned with the owning
/// Dataset's schema.
struct Event {
    std::uint64_t id = 0;
    std::vector<double> values;
    int tag = 1;  // +1 signal, -1 background
    double weight = 1.0;
    Process process = Process::Signal;

    bool is_signal() const { return tag > 0; }
};

class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<std::string> schema) : schema_(std::move(schema)) {}
    Dataset(std::vector<std::string> schema, std::vector<Event> events);

    const std::vector<std::string>& schema() const { return schema_; }
    const std::vector<Event>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }

    /// Throws DataError if `event` does not conform to the schema.
    void add(Event event);

    std::optional<std::size_t> find(std::string_view variable) const;
    /// Throws DataError naming the variable when absent.
    std::size_t index_of(std::string_view variable) const;
    std::vector<double> column(std::string_view variable) const;

    double total_weight() const;
    double signal_weight() const;
    double background_weight() const;
    std::size_t signal_count() const;

    /// Copy holding only events satisfying `keep`, order preserved.
    Dataset filter(const std::function<bool(const Event&)>& keep) const;

private:
    std::vector<std::string> schema_;
    std::vector<Event> events_;
};

// ---------------------------------------------------------------------------
// Synthetic generation

enum class Discretization { None, Round, Sign };

/// Multivariate Gaussian model of one physics process.
struct ProcessModel {
    Process process = Process::Signal;
    double fraction = 1.0;  // share within its class
    std::vector<double> mean;
    std::vector<std::vector<double>> covariance;
};

struct GeneratorConfig {
    std::vector<std::string> schema;
    ProcessModel signal;
    std::vector<ProcessModel> backgrounds;
    double signal_fraction = 0.4;
    double signal_yield = 7000.0;
    double background_yield = 200000.0;
    std::vector<double> lower;  // per-variable truncation; empty means unbounded
    std::vector<double> upper;
    std::vector<Discretization> discretization;  // empty means all continuous

    /// Throws ConfigError describing the first violated invariant.
    void validate() const;
};

/// Semi-realistic stand-in for the single-lepton stop search: the twelve
/// analysis variables plus the auxiliary columns needed by the default
/// preselection.
GeneratorConfig default_generator();

/// Two-class 1-D Gaussian toy, mostly for tests.
GeneratorConfig gaussian_toy_generator(double signal_mean, double background_mean, double sigma,
                                double signal_fraction = 0.5);

Dataset generate_synthetic(const GeneratorConfig& desc, std::size_t n_events, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV ingestion

Dataset load_events(const std::filesystem::path& path, const std::vector<std::string>& schema);
Dataset read_events(std::istream& in, const std::vector<std::string>& schema);
/// Header-only read; returns every column that is not tag/weight/process.
std::vector<std::string> read_schema(const std::filesystem::path& path);
void write_events(std::ostream& out, const Dataset& d);
void save_events(const std::filesystem::path& path, const Dataset& d);

// ---------------------------------------------------------------------------
// Preselection

enum class Comparator { Less, Greater, LessEqual, GreaterEqual, AbsLess };

std::string_view comparator_symbol(Comparator c);
Comparator parse_comparator(std::string_view symbol);

struct Condition {
    std::string variable;
    Comparator comparator = Comparator::Greater;
    double threshold = 0.0;
};

/// A threshold requirement, optionally applied only when `when` holds.
struct Cut {
    std::string variable;
    Comparator comparator = Comparator::Greater;
    double threshold = 0.0;
    std::optional<Condition> when;
};

/// Angular requirement between the two leading jets, only enforced when a
/// second hard jet is present.
struct DijetRule {
    std::string second_jet_pt = "pt_j2";
    std::string delta_phi = "dphi_j1j2";
    double pt_threshold = 60.0;
    double max_delta_phi = 2.5;
};

struct CutSet {
    std::vector<Cut> cuts;
    std::optional<DijetRule> dijet;

    bool empty() const { return cuts.empty() && !dijet; }
};

bool compare(double value, Comparator c, double threshold);

CutSet default_preselection();
Dataset apply_preselection(const Dataset& d, const CutSet& cuts);

// ---------------------------------------------------------------------------
// Splitting

struct SplitOptions {
    double qa_fraction = 0.5;     // share of the (non-isolated) sample used by the annealer
    double train_fraction = 0.5;  // share of QA used for training
    /// Events matching this go to Assess only, e.g. one isolated signal point.
    std::function<bool(const Event&)> assess_only;
};

struct SampleSplit {
    Dataset train;
    Dataset test;
    Dataset assess;
    std::uint64_t seed = 0;
};

SampleSplit split_samples(const Dataset& d, std::uint64_t seed, const SplitOptions& options = {});

// JSON forms of the generator configuration.
void to_json(nlohmann::json& j, const GeneratorConfig& desc);
void from_json(const nlohmann::json& j, GeneratorConfig& desc);
void to_json(nlohmann::json& j, const CutSet& cuts);
void from_json(const nlohmann::json& j, CutSet& cuts);

}  // namespace qamlz
