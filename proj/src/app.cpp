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

#include "qamlz/app.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "parallel.hpp"
#include "qamlz/error.hpp"
#include "text_util.hpp"

namespace qamlz {

using nlohmann::json;

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string("'") + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw ConfigError(std::string("unknown key '") + key + "' in '" + section + "'");
    }
}

template <class T>
std::vector<T> non_empty_list(const json& j, const char* name) {
    auto v = j.get<std::vector<T>>();
    if (v.empty()) throw ConfigError(std::string("scan axis '") + name + "' must not be empty");
    return v;
}

FeatureSet custom_features(const std::vector<std::string>& variables, const json& extra_derived,
                            const std::string& lepton_pt) {
    FeatureSet desc;
    desc.name = "custom";
    desc.variables = variables;
    auto known = set_a_formulas();
    for (auto& f : set_b_extra_formulas(lepton_pt)) known.push_back(std::move(f));
    for (const auto& f : extra_derived.get<std::vector<DerivedFormula>>()) known.push_back(f);
    for (const auto& f : known)
        if (std::find(variables.begin(), variables.end(), f.name) != variables.end()) desc.derived.push_back(f);
    return desc;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    try {
        check_keys(j, "config",
                   {"seed", "data", "generator", "preselection", "split", "variables", "lepton_pt", "derived", "pca",
                    "weak", "zoom", "fom", "scan", "fom_curve"});
        cfg.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("data")) {
            const auto& d = j.at("data");
            check_keys(d, "data", {"input", "output_dir", "events"});
            cfg.input = d.value("input", std::string{});
            cfg.output_dir = d.value("output_dir", std::string("."));
            cfg.events = d.value("events", cfg.events);
        }
        if (j.contains("generator")) cfg.generator = j.at("generator").get<GeneratorConfig>();
        cfg.generator.validate();
        if (j.contains("preselection")) {
            const auto& p = j.at("preselection");
            if (p.is_boolean())
                cfg.preselection = p.get<bool>() ? std::optional<CutSet>(default_preselection()) : std::nullopt;
            else
                cfg.preselection = p.get<CutSet>();
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            check_keys(s, "split", {"qa_fraction", "train_fraction", "train_limit"});
            cfg.split.qa_fraction = s.value("qa_fraction", cfg.split.qa_fraction);
            cfg.split.train_fraction = s.value("train_fraction", cfg.split.train_fraction);
            if (s.contains("train_limit")) cfg.train_limit = s.at("train_limit").get<std::size_t>();
        }
        const std::string lepton_pt = j.value("lepton_pt", std::string("pt_l"));
        if (j.contains("variables") && j.at("variables").is_array())
            cfg.features = custom_features(j.at("variables").get<std::vector<std::string>>(),
                                           j.value("derived", json::array()), lepton_pt);
        else
            cfg.features = variable_set(j.value("variables", std::string("beta")), lepton_pt);
        if (cfg.features.variables.empty()) throw ConfigError("variable list is empty");
        cfg.features.pca = j.value("pca", false);
        if (j.contains("weak")) {
            const auto& w = j.at("weak");
            check_keys(w, "weak", {"mode", "n_bins"});
            if (w.contains("mode")) cfg.features.mode = parse_weak_mode(w.at("mode").get<std::string>());
            cfg.features.n_bins = w.value("n_bins", cfg.features.n_bins);
        }
        if (j.contains("zoom")) cfg.zoom = j.at("zoom").get<ZoomConfig>();
        cfg.zoom.seed = cfg.seed;
        if (j.contains("fom")) {
            const auto& f = j.at("fom");
            check_keys(f, "fom", {"f", "luminosity", "min_events", "n_points"});
            cfg.fom.f = f.value("f", cfg.fom.f);
            cfg.fom.luminosity = f.value("luminosity", cfg.fom.luminosity);
            cfg.scan_options.min_events = f.value("min_events", cfg.scan_options.min_events);
            cfg.scan_options.n_points = f.value("n_points", cfg.scan_options.n_points);
        }
        if (j.contains("scan")) {
            const auto& s = j.at("scan");
            check_keys(s, "scan", {"delta", "offset_range", "cutoff", "fixing", "runs", "coupler_budget"});
            if (s.contains("delta")) cfg.grid.delta = non_empty_list<double>(s.at("delta"), "delta");
            if (s.contains("offset_range"))
                cfg.grid.offset_range = non_empty_list<int>(s.at("offset_range"), "offset_range");
            if (s.contains("cutoff")) cfg.grid.cutoff = non_empty_list<double>(s.at("cutoff"), "cutoff");
            if (s.contains("fixing")) cfg.grid.fixing = non_empty_list<bool>(s.at("fixing"), "fixing");
            cfg.grid.runs = s.value("runs", cfg.grid.runs);
            cfg.grid.coupler_budget = s.value("coupler_budget", cfg.grid.coupler_budget);
        } else {
            cfg.grid.delta = {cfg.zoom.delta};
            cfg.grid.offset_range = {cfg.zoom.offset_range};
            cfg.grid.cutoff = {cfg.zoom.cutoff};
            cfg.grid.fixing = {cfg.zoom.fixing};
        }
        if (j.contains("fom_curve")) {
            const auto& s = j.at("fom_curve");
            check_keys(s, "fom_curve", {"S", "B", "f"});
            if (s.contains("S")) cfg.fom_sweep.signal = s.at("S").get<std::vector<double>>();
            if (s.contains("B")) cfg.fom_sweep.background = s.at("B").get<std::vector<double>>();
            if (s.contains("f")) cfg.fom_sweep.f = s.at("f").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (cfg.events == 0 && cfg.input.empty()) throw ConfigError("'data.events' must be positive");
    if (!(cfg.split.qa_fraction > 0.0 && cfg.split.qa_fraction < 1.0) ||
        !(cfg.split.train_fraction > 0.0 && cfg.split.train_fraction < 1.0))
        throw ConfigError("split fractions must lie in (0, 1)");
    if (cfg.grid.runs == 0) throw ConfigError("'scan.runs' must be at least 1");
    cfg.fom.validate();
    cfg.zoom.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

json run_config_json(const RunConfig& cfg) {
    json j = {{"seed", cfg.seed},
              {"data", {{"input", cfg.input.string()}, {"output_dir", cfg.output_dir.string()}, {"events", cfg.events}}},
              {"generator", cfg.generator},
              {"split", {{"qa_fraction", cfg.split.qa_fraction}, {"train_fraction", cfg.split.train_fraction}}},
              {"variables", cfg.features.variables},
              {"derived", cfg.features.derived},
              {"pca", cfg.features.pca},
              {"weak", {{"mode", std::string(weak_mode_name(cfg.features.mode))}, {"n_bins", cfg.features.n_bins}}},
              {"zoom", cfg.zoom},
              {"fom",
               {{"f", cfg.fom.f},
                {"luminosity", cfg.fom.luminosity},
                {"min_events", cfg.scan_options.min_events},
                {"n_points", cfg.scan_options.n_points}}},
              {"scan",
               {{"delta", cfg.grid.delta},
                {"offset_range", cfg.grid.offset_range},
                {"cutoff", cfg.grid.cutoff},
                {"fixing", cfg.grid.fixing},
                {"runs", cfg.grid.runs},
                {"coupler_budget", cfg.grid.coupler_budget}}},
              {"fom_curve", {{"S", cfg.fom_sweep.signal}, {"B", cfg.fom_sweep.background}, {"f", cfg.fom_sweep.f}}}};
    j["preselection"] = cfg.preselection ? json(*cfg.preselection) : json(false);
    if (cfg.train_limit) j["split"]["train_limit"] = *cfg.train_limit;
    return j;
}

Dataset prepare_dataset(const RunConfig& cfg) {
    Dataset d = cfg.input.empty() ? generate_synthetic(cfg.generator, cfg.events, cfg.seed)
                                  : load_events(cfg.input, read_schema(cfg.input));
    if (cfg.preselection) d = apply_preselection(d, *cfg.preselection);
    if (d.empty()) throw DataError("no events survive preselection");
    return d;
}

SampleSplit prepare_split(const RunConfig& cfg, const Dataset& d) {
    SampleSplit s = split_samples(d, cfg.seed, cfg.split);
    if (cfg.train_limit && s.train.size() > *cfg.train_limit) {
        Dataset limited(s.train.schema());
        for (std::size_t i = 0; i < *cfg.train_limit; ++i) limited.add(s.train.events()[i]);
        s.train = std::move(limited);
    }
    if (s.train.empty()) throw DataError("training sample is empty");
    if (s.train.signal_count() == 0 || s.train.signal_count() == s.train.size())
        throw DataError("training sample needs events of both classes");
    return s;
}

// ---------------------------------------------------------------------------
// Settings scan

std::vector<ScanPoint> scan_points(const ScanGrid& grid) {
    std::vector<ScanPoint> out;
    for (double d : grid.delta)
        for (int a : grid.offset_range)
            for (double c : grid.cutoff)
                for (bool f : grid.fixing) out.push_back({d, a, c, f});
    return out;
}

std::vector<ScanRow> run_scan(const RunConfig& cfg, const SampleSplit& split, const FeaturePipeline& pipeline,
                              std::size_t jobs) {
    const auto points = scan_points(cfg.grid);
    std::vector<ScanRow> rows(points.size());
    detail::parallel_for(points.size(), jobs, [&](std::size_t k) {
        const ScanPoint& pt = points[k];
        ScanRow& row = rows[k];
        row.point = pt;
        row.spins = pipeline.size() * (2 * static_cast<std::size_t>(std::max(pt.offset_range, 0)) + 1);
        row.couplers = retained_couplers(row.spins * (row.spins - 1) / 2, pt.cutoff);
        if (row.couplers > cfg.grid.coupler_budget) {
            row.status = ScanStatus::NoEmbedding;
            row.mean_fom = row.std_fom = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        ZoomConfig zc = cfg.zoom;
        zc.delta = pt.delta;
        zc.offset_range = pt.offset_range;
        zc.cutoff = pt.cutoff;
        zc.fixing = pt.fixing;
        zc.jobs = 1;
        row.runs = cfg.grid.runs;
        if (cfg.grid.runs >= 2) {
            const UncertaintyReport rep =
                run_uncertainty(zc, cfg.grid.runs, split, pipeline, cfg.fom, cfg.scan_options, 1);
            row.mean_fom = rep.mean;
            row.std_fom = rep.std;
        } else {
            const TrainedModel model = run_qamlz(split.train, split.test, pipeline, zc);
            const FomCurve curve = fom_scan(split.assess, strong_scores(model, split.assess), cfg.fom, cfg.scan_options);
            row.mean_fom = curve.best_fom;
            row.std_fom = std::numeric_limits<double>::quiet_NaN();
        }
        if (std::isnan(row.mean_fom)) row.status = ScanStatus::NoValidCut;
    });
    return rows;
}

namespace {

std::string_view status_name(ScanStatus s) {
    switch (s) {
        case ScanStatus::Ok: return "ok";
        case ScanStatus::NoEmbedding: return "no embedding";
        case ScanStatus::NoValidCut: return "no valid cut";
    }
    return "ok";
}

std::string cell(double x) { return std::isfinite(x) ? detail::format_double(x) : std::string{}; }

}  // namespace

void write_scan(std::ostream& out, const std::vector<ScanRow>& rows) {
    out << "delta,offset_range,cutoff,fixing,spins,couplers,status,mean_fom,std_fom,runs\n";
    for (const auto& r : rows)
        out << detail::format_double(r.point.delta) << ',' << r.point.offset_range << ','
            << detail::format_double(r.point.cutoff) << ',' << (r.point.fixing ? "true" : "false") << ',' << r.spins
            << ',' << r.couplers << ',' << status_name(r.status) << ',' << cell(r.mean_fom) << ','
            << cell(r.std_fom) << ',' << r.runs << '\n';
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct CliOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::string solver;
    std::string out;
    std::string model;
    std::string data;
};

RunConfig resolve_config(const CliOptions& o) {
    RunConfig cfg = o.config.empty() ? parse_run_config(json::object()) : load_run_config(o.config);
    if (o.seed) cfg.seed = cfg.zoom.seed = *o.seed;
    if (!o.solver.empty()) cfg.zoom.solver.kind = parse_solver(o.solver);
    if (o.jobs == 0) throw ConfigError("--jobs must be at least 1");
    cfg.zoom.jobs = o.jobs;
    return cfg;
}

std::filesystem::path output_dir(const CliOptions& o, const RunConfig& cfg) {
    std::filesystem::path dir = o.out.empty() ? cfg.output_dir : std::filesystem::path(o.out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    return f;
}

int cmd_gen(const CliOptions& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    std::filesystem::path path = o.out.empty() ? cfg.output_dir / "events.csv" : std::filesystem::path(o.out);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const Dataset d = generate_synthetic(cfg.generator, cfg.events, cfg.seed);
    auto f = open_output(path);
    write_events(f, d);
    if (!f) throw DataError("failed writing " + path.string());
    log << "wrote " << d.size() << " events to " << path.string() << '\n';
    return kExitOk;
}

int cmd_train(const CliOptions& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    const auto dir = output_dir(o, cfg);
    const SampleSplit split = prepare_split(cfg, prepare_dataset(cfg));
    const FeaturePipeline pipeline = FeaturePipeline::fit(split.train, cfg.features);
    log << "training on " << split.train.size() << " events, " << pipeline.size() << " weak classifiers\n";
    const TrainedModel model = run_qamlz(split.train, split.test, pipeline, cfg.zoom);

    auto mf = open_output(dir / "model.json");
    mf << json(model).dump(2) << '\n';
    auto lf = open_output(dir / "train_log.jsonl");
    for (const auto& r : model.trajectory) lf << json(r).dump() << '\n';
    if (!mf || !lf) throw DataError("failed writing training outputs");
    log << "wrote " << (dir / "model.json").string() << '\n';
    return kExitOk;
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path.string());
    try {
        return json::parse(in).get<TrainedModel>();
    } catch (const json::parse_error& e) {
        throw DataError("model file " + path.string() + " is not valid JSON: " + e.what());
    }
}

int cmd_eval(const CliOptions& o, std::ostream& out, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    const auto dir = output_dir(o, cfg);
    const TrainedModel model = load_model(o.model.empty() ? dir / "model.json" : std::filesystem::path(o.model));

    std::optional<SampleSplit> split;
    Dataset assess;
    if (o.data.empty()) {
        split = prepare_split(cfg, prepare_dataset(cfg));
        assess = split->assess;
    } else {
        assess = load_events(o.data, read_schema(o.data));
        if (cfg.preselection) assess = apply_preselection(assess, *cfg.preselection);
    }
    if (assess.empty()) throw DataError("evaluation sample is empty");

    const auto scores = strong_scores(model, assess);
    const FomCurve curve = fom_scan(assess, scores, cfg.fom, cfg.scan_options);
    auto cf = open_output(dir / "fom_curve.csv");
    write_fom_curve(cf, curve);

    ScoredEvents sig, bkg;
    for (std::size_t i = 0; i < assess.size(); ++i) {
        auto& dst = assess.events()[i].is_signal() ? sig : bkg;
        dst.scores.push_back(scores[i]);
        dst.weights.push_back(assess.events()[i].weight);
    }
    json summary = {{"events", assess.size()},
                    {"baseline_fom", baseline_fom(assess, cfg.fom)},
                    {"best_fom", curve.has_valid_cut() ? json(curve.best_fom) : json(nullptr)},
                    {"best_cut", curve.has_valid_cut() ? json(curve.best_cut) : json(nullptr)},
                    {"S_at_best", curve.S_at_best},
                    {"B_at_best", curve.B_at_best},
                    {"f", cfg.fom.f},
                    {"luminosity", cfg.fom.luminosity}};
    if (!sig.scores.empty() && !bkg.scores.empty()) summary["auc"] = weighted_auc(sig, bkg);
    if (split) {
        const auto rows = overtraining_check(split->train, strong_scores(model, split->train), split->test,
                                             strong_scores(model, split->test));
        auto of = open_output(dir / "overtraining.csv");
        write_overtraining(of, rows);
        json ks = json::array();
        for (const auto& r : rows)
            ks.push_back({{"process", std::string(process_name(r.process))},
                          {"statistic", r.ks.statistic},
                          {"p_value", r.ks.p_value}});
        summary["overtraining"] = ks;
    }
    auto sf = open_output(dir / "eval_summary.json");
    sf << summary.dump(2) << '\n';
    out << summary.dump(2) << '\n';
    if (!curve.has_valid_cut()) log << "no cut passes the minimum-events floor\n";
    return kExitOk;
}

int cmd_scan(const CliOptions& o, std::ostream& log) {
    const RunConfig cfg = resolve_config(o);
    const auto dir = output_dir(o, cfg);
    const SampleSplit split = prepare_split(cfg, prepare_dataset(cfg));
    const FeaturePipeline pipeline = FeaturePipeline::fit(split.train, cfg.features);
    log << "scanning " << cfg.grid.size() << " settings\n";
    const auto rows = run_scan(cfg, split, pipeline, o.jobs);
    auto f = open_output(dir / "scan.csv");
    write_scan(f, rows);
    if (!f) throw DataError("failed writing scan output");
    const bool infeasible =
        std::any_of(rows.begin(), rows.end(), [](const ScanRow& r) { return r.status == ScanStatus::NoEmbedding; });
    if (infeasible) {
        log << "some settings exceed the coupler budget of " << cfg.grid.coupler_budget << '\n';
        return kExitInfeasible;
    }
    return kExitOk;
}

int cmd_fom(const CliOptions& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o);
    std::ostringstream csv;
    csv << "S,B,f,fom\n";
    for (double f : cfg.fom_sweep.f)
        for (double b : cfg.fom_sweep.background)
            for (double s : cfg.fom_sweep.signal)
                csv << detail::format_double(s) << ',' << detail::format_double(b) << ',' << detail::format_double(f)
                    << ',' << detail::format_double(fom(s, b, f)) << '\n';
    if (o.out.empty()) {
        out << csv.str();
    } else {
        const std::filesystem::path path(o.out);
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        auto file = open_output(path);
        file << csv.str();
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Zoomed annealing classifier training and evaluation", "qamlz"};
    app.require_subcommand(1);
    CliOptions o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Base seed (overrides the configuration)");
        sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--solver", o.solver, "Solver backend")
            ->check(CLI::IsMember({"exact", "sa", "chain", "external"}));
    };
    auto* gen = app.add_subcommand("gen", "Write a synthetic event CSV");
    add_common(gen);
    gen->add_option("--out", o.out, "Output CSV path");
    auto* train = app.add_subcommand("train", "Train a model; writes model.json and train_log.jsonl");
    add_common(train);
    train->add_option("--out", o.out, "Output directory");
    auto* eval = app.add_subcommand("eval", "FOM curve and over-training report for a model");
    add_common(eval);
    eval->add_option("--out", o.out, "Output directory");
    eval->add_option("--model", o.model, "Model file (default: <out>/model.json)");
    eval->add_option("--data", o.data, "Event CSV to evaluate (default: the assess sample)");
    auto* scan = app.add_subcommand("scan", "Settings grid scan; writes scan.csv");
    add_common(scan);
    scan->add_option("--out", o.out, "Output directory");
    auto* fomc = app.add_subcommand("fom", "FOM table over S, B and f");
    add_common(fomc);
    fomc->add_option("--out", o.out, "Output CSV path (default: stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen(o, err);
        if (train->parsed()) return cmd_train(o, err);
        if (eval->parsed()) return cmd_eval(o, out, err);
        if (scan->parsed()) return cmd_scan(o, err);
        if (fomc->parsed()) return cmd_fom(o, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::Config: return kExitConfig;
            case ErrorKind::Data: return kExitData;
            case ErrorKind::Infeasible: return kExitInfeasible;
        }
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace qamlz
