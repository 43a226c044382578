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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qamlz/dataset.hpp"
#include "qamlz/eval.hpp"
#include "qamlz/features.hpp"
#include "qamlz/zoom.hpp"

namespace qamlz {

/// Axes of the settings scan; the scan visits their cartesian product.
struct ScanGrid {
    std::vector<double> delta = {0.025};
    std::vector<int> offset_range = {3};
    std::vector<double> cutoff = {85.0};
    std::vector<bool> fixing = {false};
    std::size_t runs = 1;
    /// Largest post-prune coupler count that is considered embeddable.
    std::size_t coupler_budget = 5600;

    std::size_t size() const { return delta.size() * offset_range.size() * cutoff.size() * fixing.size(); }
};

struct FomSweep {
    std::vector<double> signal = {0, 10, 20, 50, 100, 200, 500, 1000};
    std::vector<double> background = {10, 100, 1000, 10000};
    std::vector<double> f = {0.0, 0.1, 0.2, 0.3};
};

struct RunConfig {
    std::filesystem::path input;  // event CSV; empty means synthetic events
    std::filesystem::path output_dir = ".";
    std::size_t events = 20000;
    GeneratorConfig generator = default_generator();
    std::optional<CutSet> preselection = default_preselection();
    SplitOptions split;
    /// Keep at most this many training events (after shuffling).
    std::optional<std::size_t> train_limit;
    FeatureSet features = variable_set("beta");
    ZoomConfig zoom;
    FomParams fom;
    ScanOptions scan_options;
    ScanGrid grid;
    FomSweep fom_sweep;
    std::uint64_t seed = 0;
};

/// Throws ConfigError on unknown keys or invalid values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& cfg);

/// Loaded or generated events, after preselection.
Dataset prepare_dataset(const RunConfig& cfg);
SampleSplit prepare_split(const RunConfig& cfg, const Dataset& d);

struct ScanPoint {
    double delta = 0.0;
    int offset_range = 0;
    double cutoff = 0.0;
    bool fixing = false;
};

enum class ScanStatus { Ok, NoEmbedding, NoValidCut };

struct ScanRow {
    ScanPoint point;
    std::size_t spins = 0;
    std::size_t couplers = 0;  // after pruning
    ScanStatus status = ScanStatus::Ok;
    double mean_fom = 0.0;
    double std_fom = 0.0;  // NaN for a single run
    std::size_t runs = 0;
};

/// Grid points in row-major order of (delta, offset_range, cutoff, fixing).
std::vector<ScanPoint> scan_points(const ScanGrid& grid);
std::vector<ScanRow> run_scan(const RunConfig& cfg, const SampleSplit& split, const FeaturePipeline& pipeline,
                              std::size_t jobs = 1);
void write_scan(std::ostream& out, const std::vector<ScanRow>& rows);

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3, kExitInfeasible = 4 };

/// Command-line entry point: gen | train | eval | scan | fom.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qamlz
