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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "qamlz/app.hpp"
#include "qamlz/dataset.hpp"
#include "qamlz/error.hpp"
#include "qamlz/eval.hpp"
#include "qamlz/features.hpp"
#include "qamlz/ising.hpp"
#include "qamlz/solver.hpp"
#include "qamlz/zoom.hpp"

namespace py = pybind11;
using namespace qamlz;
using nlohmann::json;

namespace {

py::dict curve_dict(const FomCurve& c) {
    py::dict d;
    d["cuts"] = c.cuts;
    d["fom"] = c.fom_values;
    d["S"] = c.signal_yield;
    d["B"] = c.background_yield;
    d["n_S"] = c.n_signal;
    d["n_B"] = c.n_background;
    d["valid"] = c.valid;
    d["best_cut"] = c.best_cut;
    d["best_fom"] = c.best_fom;
    d["S_at_best"] = c.S_at_best;
    d["B_at_best"] = c.B_at_best;
    d["has_valid_cut"] = c.has_valid_cut();
    return d;
}

py::list samples_list(const SolverResult& r) {
    py::list out;
    for (const auto& s : r.samples) out.append(py::make_tuple(std::vector<int>(s.spins.begin(), s.spins.end()), s.energy));
    return out;
}

Spins to_spins(const std::vector<int>& v) { return Spins(v.begin(), v.end()); }

AnnealSchedule schedule(std::size_t reads, std::size_t sweeps, std::uint64_t seed) {
    AnnealSchedule s;
    s.n_reads = reads;
    s.sweeps = sweeps;
    s.seed = seed;
    return s;
}

TrainedModel model_from(const std::string& text) { return json::parse(text).get<TrainedModel>(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Zoomed annealing classifier: core operations";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);

    // Figure of merit
    m.def("fom", [](double s, double b, double f) { return fom(s, b, f); }, py::arg("S"), py::arg("B"),
          py::arg("f") = 0.2);
    m.def("asimov", &asimov, py::arg("S"), py::arg("B"));
    m.def(
        "fom_scan",
        [](std::vector<double> sig, std::vector<double> sig_w, std::vector<double> bkg, std::vector<double> bkg_w,
           double f, std::size_t n_points, std::size_t min_events, std::optional<std::vector<double>> grid) {
            ScanOptions o;
            o.n_points = n_points;
            o.min_events = min_events;
            o.grid = std::move(grid);
            return curve_dict(fom_scan({std::move(sig), std::move(sig_w)}, {std::move(bkg), std::move(bkg_w)},
                                       FomParams{f, 35.9}, o));
        },
        py::arg("signal_scores"), py::arg("signal_weights"), py::arg("background_scores"),
        py::arg("background_weights"), py::arg("f") = 0.2, py::arg("n_points") = 201, py::arg("min_events") = 20,
        py::arg("grid") = py::none());
    m.def(
        "ks_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = ks_test(a, b);
            return py::make_tuple(r.statistic, r.p_value);
        },
        py::arg("a"), py::arg("b"));

    // Data
    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("schema", &Dataset::schema)
        .def("__len__", &Dataset::size)
        .def("column", &Dataset::column)
        .def_property_readonly("tags",
                               [](const Dataset& d) {
                                   std::vector<int> t;
                                   for (const auto& e : d.events()) t.push_back(e.tag);
                                   return t;
                               })
        .def_property_readonly("weights",
                               [](const Dataset& d) {
                                   std::vector<double> w;
                                   for (const auto& e : d.events()) w.push_back(e.weight);
                                   return w;
                               })
        .def_property_readonly("processes",
                               [](const Dataset& d) {
                                   std::vector<std::string> p;
                                   for (const auto& e : d.events()) p.emplace_back(process_name(e.process));
                                   return p;
                               })
        .def("signal_weight", &Dataset::signal_weight)
        .def("background_weight", &Dataset::background_weight);
    m.def(
        "generate_synthetic",
        [](std::size_t n, std::uint64_t seed, std::optional<std::string> desc) {
            const GeneratorConfig g = desc ? json::parse(*desc).get<GeneratorConfig>() : default_generator();
            return generate_synthetic(g, n, seed);
        },
        py::arg("n"), py::arg("seed"), py::arg("generator_json") = py::none());
    m.def("load_events", [](const std::filesystem::path& p) { return load_events(p, read_schema(p)); });
    m.def("save_events", &save_events, py::arg("path"), py::arg("dataset"));
    m.def(
        "apply_preselection",
        [](const Dataset& d, std::optional<std::string> cuts) {
            return apply_preselection(d, cuts ? json::parse(*cuts).get<CutSet>() : default_preselection());
        },
        py::arg("dataset"), py::arg("cuts_json") = py::none());
    m.def(
        "split_samples",
        [](const Dataset& d, std::uint64_t seed, double qa_fraction, double train_fraction) {
            SplitOptions o;
            o.qa_fraction = qa_fraction;
            o.train_fraction = train_fraction;
            auto s = split_samples(d, seed, o);
            return py::make_tuple(std::move(s.train), std::move(s.test), std::move(s.assess));
        },
        py::arg("dataset"), py::arg("seed"), py::arg("qa_fraction") = 0.5, py::arg("train_fraction") = 0.5);

    // Features
    py::class_<FeaturePipeline>(m, "FeaturePipeline")
        .def_static(
            "fit",
            [](const Dataset& train, const std::string& variable_set_name, bool pca) {
                FeatureSet desc = variable_set(variable_set_name);
                desc.pca = pca;
                return FeaturePipeline::fit(train, desc);
            },
            py::arg("train"), py::arg("variable_set") = "beta", py::arg("pca") = false)
        .def("__len__", &FeaturePipeline::size)
        .def("transform", py::overload_cast<const Dataset&>(&FeaturePipeline::transform, py::const_))
        .def("to_json", [](const FeaturePipeline& p) { return json(p).dump(); });
    m.def("fit_pca", [](const Eigen::MatrixXd& x) {
        const auto t = fit_pca(x);
        return py::make_tuple(t.mean, t.components, t.eigenvalues);
    });
    m.def("augmented_size", [](std::size_t n_var, int offset_range) { return augment(n_var, 0.025, offset_range).size(); },
          py::arg("n_var"), py::arg("offset_range"));

    // Ising problems and solvers
    py::class_<IsingProblem>(m, "IsingProblem")
        .def(py::init([](std::vector<double> h, const std::vector<std::tuple<std::size_t, std::size_t, double>>& j,
                         double lambda) {
                 std::vector<Coupler> c;
                 for (const auto& [a, b, v] : j) c.push_back({a, b, v});
                 return IsingProblem(std::move(h), std::move(c), lambda);
             }),
             py::arg("h"), py::arg("J") = std::vector<std::tuple<std::size_t, std::size_t, double>>{},
             py::arg("lam") = 0.0)
        .def("__len__", &IsingProblem::size)
        .def_property_readonly("h", &IsingProblem::h)
        .def_property_readonly("J",
                               [](const IsingProblem& p) {
                                   std::vector<std::tuple<std::size_t, std::size_t, double>> out;
                                   for (const auto& c : p.couplers()) out.emplace_back(c.i, c.j, c.value);
                                   return out;
                               })
        .def("energy", [](const IsingProblem& p, const std::vector<int>& s) { return energy(p, to_spins(s)); })
        .def("to_json", [](const IsingProblem& p) { return json(p).dump(); })
        .def_static("from_json", [](const std::string& s) { return json::parse(s).get<IsingProblem>(); });
    m.def("prune", &prune, py::arg("problem"), py::arg("cutoff_pct"));
    m.def("retained_couplers", &retained_couplers, py::arg("total"), py::arg("cutoff_pct"));
    m.def("fix_variables", [](const IsingProblem& p) {
        const auto r = fix_variables(p);
        return py::make_tuple(r.fixed, r.reduced);
    });
    m.def(
        "solve_exact",
        [](const IsingProblem& p, std::size_t max_states) { return samples_list(solve_exact(p, {max_states})); },
        py::arg("problem"), py::arg("max_states") = 64);
    m.def(
        "solve_sa",
        [](const IsingProblem& p, std::size_t reads, std::size_t sweeps, std::uint64_t seed) {
            return samples_list(solve_sa(p, schedule(reads, sweeps, seed)));
        },
        py::arg("problem"), py::arg("reads") = 200, py::arg("sweeps") = 1000, py::arg("seed") = 0);
    m.def(
        "solve_chain",
        [](const IsingProblem& p, std::size_t length, double strength, std::size_t reads, std::size_t sweeps,
           std::uint64_t seed) {
            const auto r = solve_chain_emulated(p, ChainConfig{length, {strength}}, schedule(reads, sweeps, seed));
            return py::make_tuple(samples_list(r), r.broken_chain_fraction);
        },
        py::arg("problem"), py::arg("length") = 4, py::arg("strength") = 2.0, py::arg("reads") = 200,
        py::arg("sweeps") = 1000, py::arg("seed") = 0);

    // Training and evaluation
    m.def(
        "train",
        [](const std::string& config_json) {
            const RunConfig cfg = parse_run_config(json::parse(config_json));
            const SampleSplit split = prepare_split(cfg, prepare_dataset(cfg));
            const FeaturePipeline pipeline = FeaturePipeline::fit(split.train, cfg.features);
            py::gil_scoped_release release;
            return json(run_qamlz(split.train, split.test, pipeline, cfg.zoom)).dump();
        },
        py::arg("config_json"), "Trains a model from a run configuration; returns the model JSON.");
    m.def(
        "strong_scores", [](const std::string& model, const Dataset& d) { return strong_scores(model_from(model), d); },
        py::arg("model_json"), py::arg("dataset"));
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
