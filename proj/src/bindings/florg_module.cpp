// Python bindings for the core pipeline: dense linalg kernels, the adapter
// math, the Gram aggregation/re-decomposition server step, and the full
// experiment driver. Matrices cross the boundary as float64 numpy arrays.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "florg/adapter.hpp"
#include "florg/baselines.hpp"
#include "florg/config.hpp"
#include "florg/errors.hpp"
#include "florg/federation.hpp"
#include "florg/linalg.hpp"
#include "florg/matrix.hpp"
#include "florg/server_core.hpp"

namespace py = pybind11;
using namespace florg;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ContractViolation("expected a 2-d array");
    const auto rows = static_cast<int>(arr.shape(0));
    const auto cols = static_cast<int>(arr.shape(1));
    Matrix m(rows, cols);
    const double* src = arr.data();
    std::copy(src, src + static_cast<std::size_t>(rows) * cols, m.data());
    return m;
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> arr({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), arr.mutable_data());
    return arr;
}

InitScheme init_from_name(const std::string& name) {
    if (name == "semi_orthogonal") return InitScheme::semi_orthogonal;
    if (name == "kaiming") return InitScheme::kaiming;
    if (name == "svd") return InitScheme::svd;
    throw ContractViolation("unknown init scheme '" + name + "'");
}

py::dict metrics_to_dict(const RoundMetrics& m) {
    py::dict d;
    d["round"] = m.round;
    d["global_loss"] = m.global_loss;
    d["grad_norm"] = m.grad_norm;
    d["agg_error"] = m.agg_error;
    d["gram_preservation_err"] = m.gram_preservation_err;
    d["truncation_loss"] = m.truncation_loss;
    d["delta_proc"] = m.delta_proc;
    d["lambda_min"] = m.lambda_min;
    d["sigma_min_cross"] = m.sigma_min_cross;
    d["omega"] = m.omega;
    d["uplink_params"] = m.uplink_params;
    d["downlink_params"] = m.downlink_params;
    d["eval_accuracy"] = m.eval_accuracy;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "federated low-rank adaptation kernels";

    py::register_exception<ContractViolation>(mod, "ContractViolation", PyExc_ValueError);
    py::register_exception<NotPsdError>(mod, "NotPsdError", PyExc_ValueError);
    py::register_exception<DivergenceError>(mod, "DivergenceError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);

    py::class_<AdapterState>(mod, "AdapterState")
        .def_property_readonly("w0", [](const AdapterState& s) { return to_array(s.w0); })
        .def_property_readonly("l_basis",
                               [](const AdapterState& s) { return to_array(s.l_basis); })
        .def_property_readonly("r_basis",
                               [](const AdapterState& s) { return to_array(s.r_basis); })
        .def_property_readonly("a", [](const AdapterState& s) { return to_array(s.a); })
        .def_readonly("alpha", &AdapterState::alpha)
        .def("with_a", [](const AdapterState& s, const py::array_t<double>& a) {
            AdapterState out = s;
            out.a = to_matrix(a);
            return out;
        });

    mod.def(
        "init_adapter",
        [](int d_out, int d_in, int r, double alpha, const std::string& init,
           const py::array_t<double>& w0, std::uint64_t seed) {
            AdapterConfig cfg{d_out, d_in, r, alpha, init_from_name(init)};
            return init_adapter(cfg, to_matrix(w0), seed);
        },
        py::arg("d_out"), py::arg("d_in"), py::arg("r"), py::arg("alpha"), py::arg("init"),
        py::arg("w0"), py::arg("seed"));

    mod.def(
        "delta_w", [](const AdapterState& s) { return to_array(delta_w(s)); },
        py::arg("state"));
    mod.def(
        "effective_weight", [](const AdapterState& s) { return to_array(effective_weight(s)); },
        py::arg("state"));
    mod.def(
        "grad_a",
        [](const AdapterState& s, const py::array_t<double>& g) {
            return to_array(grad_a(s, to_matrix(g)));
        },
        py::arg("state"), py::arg("grad_w"));
    mod.def(
        "local_update",
        [](const AdapterState& s, const py::array_t<double>& g, double eta) {
            return to_array(local_update(s, to_matrix(g), eta));
        },
        py::arg("state"), py::arg("grad_w"), py::arg("eta"));

    mod.def(
        "orthonormal_columns",
        [](int rows, int cols, std::uint64_t seed) {
            return to_array(orthonormal_columns(rows, cols, seed));
        },
        py::arg("rows"), py::arg("cols"), py::arg("seed"));
    mod.def(
        "sym_eig",
        [](const py::array_t<double>& q) {
            const Matrix m = to_matrix(q);
            const EigenPair eig = sym_eig(m, default_psd_tol(m));
            return py::make_tuple(eig.values, to_array(eig.vectors));
        },
        py::arg("q"));
    mod.def(
        "thin_svd",
        [](const py::array_t<double>& a) {
            const SvdResult svd = thin_svd(to_matrix(a));
            return py::make_tuple(to_array(svd.u), svd.sigma, to_array(svd.v));
        },
        py::arg("a"));

    mod.def(
        "gram_aggregate",
        [](const std::vector<py::array_t<double>>& locals_py) {
            std::vector<Matrix> locals;
            for (const auto& arr : locals_py) locals.push_back(to_matrix(arr));
            const GramAggregate agg =
                aggregate_gram(locals, uniform_weights(static_cast<int>(locals.size())));
            py::dict out;
            out["q"] = to_array(agg.q);
            out["effective_rank"] = agg.effective_rank;
            out["eigenvalues"] = agg.eigen.values;
            return out;
        },
        py::arg("locals"));

    mod.def(
        "server_realign",
        [](const py::array_t<double>& a_prev_py,
           const std::vector<py::array_t<double>>& locals_py, bool align) {
            const Matrix a_prev = to_matrix(a_prev_py);
            std::vector<Matrix> locals;
            for (const auto& arr : locals_py) locals.push_back(to_matrix(arr));
            const GramAggregate agg =
                aggregate_gram(locals, uniform_weights(static_cast<int>(locals.size())));
            const CanonicalFactor trunc = truncate_factor(decompose(agg), a_prev.rows());
            const ProcrustesResult res = procrustes_align(a_prev, trunc);
            py::dict out;
            out["a_next"] = align ? to_array(apply_alignment(res, trunc))
                                  : to_array(pad_factor_rows(trunc, a_prev.rows()));
            out["truncation_loss"] = trunc.truncation_loss;
            out["residual"] = res.residual;
            out["trace_objective"] = res.trace_objective;
            out["sigma_min_cross"] = res.sigma_min_cross;
            return out;
        },
        py::arg("a_prev"), py::arg("locals"), py::arg("align") = true);

    mod.def(
        "aggregation_error",
        [](const std::vector<py::array_t<double>>& bs, const std::vector<py::array_t<double>>& as) {
            if (bs.size() != as.size() || bs.empty()) {
                throw ContractViolation("need matching non-empty factor lists");
            }
            std::vector<LoraState> locals;
            for (std::size_t i = 0; i < bs.size(); ++i) {
                LoraState st;
                st.b = to_matrix(bs[i]);
                st.a = to_matrix(as[i]);
                locals.push_back(std::move(st));
            }
            return aggregation_error(locals);
        },
        py::arg("bs"), py::arg("as_"));

    mod.def(
        "run_experiment",
        [](const std::string& config_text) {
            ExperimentConfig cfg = parse_config_text(config_text);
            validate_config(cfg);
            RunResult res;
            {
                py::gil_scoped_release release;
                res = run_experiment(cfg);
            }
            py::list rounds;
            for (const RoundMetrics& m : res.metrics) rounds.append(metrics_to_dict(m));
            py::dict out;
            out["initial_loss"] = res.initial_loss;
            out["initial_accuracy"] = res.initial_accuracy;
            out["rounds_completed"] = res.rounds_completed;
            out["metrics"] = rounds;
            return out;
        },
        py::arg("config_text"));

    mod.attr("__version__") = "1.0.0";
}
