// Copyright (c) 2026 the doge-lab authors
// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "doge/doge.hpp"
#include "doge/harness.hpp"

namespace py = pybind11;

PYBIND11_MODULE(_dogelab, m) {
    m.doc() = "domain-reweighted pretraining laboratory";

    m.def("tokenize", &doge::tokens::tokenize, py::arg("text"));
    m.def("detokenize", &doge::tokens::detokenize, py::arg("ids"));

    m.def(
        "update_domain_weights",
        [](const std::vector<double>& alpha, const std::vector<double>& scores,
           double eta, double mu) {
            doge::DomainWeights a{alpha};
            a.validate();
            return doge::update_domain_weights(a, scores, eta, mu).values;
        },
        py::arg("alpha"), py::arg("scores"), py::arg("eta"), py::arg("mu"),
        "Multiplicative-weights update on the simplex.");

    m.def("cosine_lr", &doge::cosine_lr, py::arg("step"), py::arg("total"),
          py::arg("lr_max"), py::arg("lr_min"), py::arg("warmup_frac") = 0.05);

    m.def(
        "weights_to_json",
        [](const std::vector<std::string>& names, const std::vector<double>& alpha) {
            return doge::weights_to_json(names, doge::DomainWeights{alpha});
        },
        py::arg("names"), py::arg("weights"));
    m.def(
        "weights_from_json",
        [](const std::string& text) {
            auto [names, w] = doge::weights_from_json(text);
            return py::make_tuple(names, w.values);
        },
        py::arg("text"));

    m.def(
        "run_config_file",
        [](const std::string& path) {
            return doge::run(doge::RunConfig::from_file(path));
        },
        py::arg("path"), "Execute a run config; returns the exit status.");

    py::register_exception<doge::ConfigError>(m, "ConfigError");
    py::register_exception<doge::DataError>(m, "DataError");
    py::register_exception<doge::ContractError>(m, "ContractError");
    py::register_exception<doge::ShapeError>(m, "ShapeError");
}
