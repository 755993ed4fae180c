#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dncc/bregman.hpp"
#include "dncc/cli.hpp"
#include "dncc/data.hpp"
#include "dncc/diversity.hpp"
#include "dncc/error.hpp"
#include "dncc/loss.hpp"
#include "dncc/verify.hpp"

namespace py = pybind11;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

dncc::ConvexFunctional functional(const std::string& name) {
    if (name == "neg_log") return dncc::neg_log();
    if (name == "squared_norm") return dncc::squared_norm();
    if (name == "x_log_x") return dncc::x_log_x();
    throw py::value_error("unknown functional '" + name + "' (neg_log, squared_norm, x_log_x)");
}

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

dncc::Tensor matrix(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    return dncc::Tensor::from({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))}, flat(a));
}

std::vector<dncc::Tensor> heads(const std::vector<Array>& logits) {
    std::vector<dncc::Tensor> out;
    for (const auto& a : logits) out.push_back(matrix(a));
    return out;
}

dncc::DiscreteDistribution distribution(const Array& points, const std::optional<Array>& weights) {
    if (points.ndim() != 1 && points.ndim() != 2) throw py::value_error("points must be 1-D or 2-D");
    const std::size_t n = points.shape(0);
    const std::size_t d = points.ndim() == 2 ? points.shape(1) : 1;
    std::vector<dncc::Point> pts(n, dncc::Point(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) pts[i][j] = points.data()[i * d + j];
    }
    if (!weights) return dncc::DiscreteDistribution::uniform(std::move(pts));
    return {std::move(pts), flat(*weights)};
}

py::dict breakdown(const dncc::LossBreakdown& b) {
    py::dict d;
    d["ensemble_loss"] = b.ensemble_loss;
    d["individual_losses"] = b.individual_losses;
    d["mean_individual_loss"] = b.mean_individual_loss();
    d["bregman_information"] = b.bregman_information;
    d["per_head_penalty"] = b.per_head_penalty;
    d["dncc_losses"] = b.dncc_losses;
    d["lambda"] = b.lambda;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Negative-correlation ensemble classification core";

    auto base = py::register_exception<dncc::Error>(m, "DnccError");
    py::register_exception<dncc::ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<dncc::DomainError>(m, "DomainError", base.ptr());
    py::register_exception<dncc::FormatError>(m, "FormatError", base.ptr());
    py::register_exception<dncc::ContractError>(m, "ContractError", base.ptr());

    m.def(
        "bregman_divergence",
        [](const std::string& phi, const Array& a, const Array& b) {
            return dncc::bregman_divergence(functional(phi), flat(a), flat(b));
        },
        py::arg("phi"), py::arg("a"), py::arg("b"));
    m.def(
        "bregman_information",
        [](const std::string& phi, const Array& points, std::optional<Array> weights) {
            return dncc::bregman_information(functional(phi), distribution(points, weights));
        },
        py::arg("phi"), py::arg("points"), py::arg("weights") = py::none());
    m.def(
        "jensen_gap",
        [](const std::string& phi, const Array& points, std::optional<Array> weights) {
            return dncc::jensen_gap(functional(phi), distribution(points, weights));
        },
        py::arg("phi"), py::arg("points"), py::arg("weights") = py::none());
    m.def("itakura_saito_log_domain", &dncc::itakura_saito_log_domain, py::arg("log_p"), py::arg("log_q"));

    m.def(
        "ensemble_ce",
        [](const std::vector<Array>& logits, const std::vector<int>& labels) {
            return dncc::ensemble_ce(heads(logits), labels).item();
        },
        py::arg("logits"), py::arg("labels"));
    m.def(
        "individual_ce",
        [](const Array& logits, const std::vector<int>& labels) {
            return dncc::individual_ce(matrix(logits), labels).item();
        },
        py::arg("logits"), py::arg("labels"));
    m.def(
        "dncc_head_loss",
        [](std::size_t head, const std::vector<Array>& logits, const std::vector<int>& labels, double lam,
           bool detach) { return dncc::dncc_head_loss(head, heads(logits), labels, lam, detach).item(); },
        py::arg("head"), py::arg("logits"), py::arg("labels"), py::arg("lam"), py::arg("detach") = false);
    m.def(
        "decompose",
        [](const std::vector<Array>& logits, const std::vector<int>& labels, double lam) {
            return breakdown(dncc::decompose(heads(logits), labels, lam));
        },
        py::arg("logits"), py::arg("labels"), py::arg("lam") = 0.0);
    m.def(
        "lambda_at",
        [](const std::string& schedule, int epoch, int total) {
            return dncc::lambda_at(dncc::LambdaSchedule::parse(schedule), epoch, total);
        },
        py::arg("schedule"), py::arg("epoch"), py::arg("total_epochs"));

    m.def(
        "pairwise_diversity",
        [](const Array& w_i, const Array& w_j) { return dncc::pairwise_diversity(matrix(w_i), matrix(w_j)); },
        py::arg("w_i"), py::arg("w_j"));

    m.def(
        "synth_blobs",
        [](std::uint64_t seed, std::size_t classes, std::size_t per_class, std::size_t dim, double spread) {
            const dncc::Dataset ds = dncc::synth_blobs(seed, classes, per_class, dim, spread);
            Array x({ds.size(), ds.dim});
            std::copy(ds.features.begin(), ds.features.end(), x.mutable_data());
            py::array_t<int> y(ds.size());
            std::copy(ds.labels.begin(), ds.labels.end(), y.mutable_data());
            return py::make_tuple(x, y);
        },
        py::arg("seed"), py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("spread"));

    m.def(
        "verify",
        [](int trials, std::uint64_t seed) {
            const dncc::VerifyReport report = dncc::run_verify({trials, seed, false});
            py::list out;
            for (const auto& c : report.checks) {
                py::dict d;
                d["name"] = c.name;
                d["max_deviation"] = c.max_deviation;
                d["tolerance"] = c.tolerance;
                d["trials"] = c.trials;
                d["pass"] = c.pass;
                out.append(d);
            }
            return out;
        },
        py::arg("trials") = 1000, py::arg("seed") = 0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = dncc::cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a dncc subcommand; returns (exit_code, stdout, stderr).");
}
